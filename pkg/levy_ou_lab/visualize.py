from typing import Sequence

import pandas as pd
from plotly import express as px

from .simulate import PathSample


def visualize_family(family_table: pd.DataFrame, title: str, **line_kwargs):
    """One line per time t: the density of nu_t when the table has one, else the real part of its cf"""
    if "density" in family_table.columns:
        x, y = "y", "density"
    else:
        x, y = "a", "re"

    return px.line(
        family_table.astype({"t": str}),
        title=title,
        x=x,
        y=y,
        color="t",
        **line_kwargs,
    ).update_traces(mode="lines")


def visualize_paths(paths: Sequence[PathSample], title: str, component: int = 0):
    all_paths = pd.concat(
        [path.as_dataframe().assign(path=i) for i, path in enumerate(paths)],
        sort=False,
    )

    return px.line(
        all_paths.astype({"path": str}),
        title=title,
        x="time",
        y=f"x_{component + 1}",
        line_group="path",
        color="path",
    ).update_traces(
        # Markers show where the time steps fall
        mode="lines+markers",
        marker=dict(size=4, opacity=0.5),
    )
