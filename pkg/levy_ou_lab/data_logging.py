"""Output tables and reports

CSV floats carry 17 significant digits and JSON keys are sorted, so reruns of a command write identical bytes.
"""

import json
import logging
import sys
from typing import Dict, Optional

import numpy as np
import pandas as pd

from .simulate import MonteCarloResult, empirical_cf

logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = "%.17g"


def along_component(a_grid, dimension: int, component: int) -> np.ndarray:
    """(m, d) stack of frequency vectors a e_component for the scalars a in a_grid"""
    if not 0 <= component < dimension:
        raise ValueError(f"component must be in [0, {dimension}), got {component}")
    a_grid = np.asarray(a_grid, dtype=float)
    points = np.zeros((len(a_grid), dimension))
    points[:, component] = a_grid
    return points


def cf_table(a_grid, values) -> pd.DataFrame:
    values = np.asarray(values, dtype=complex)
    return pd.DataFrame({"a": a_grid, "re": values.real, "im": values.imag})


def samples_table(samples: np.ndarray) -> pd.DataFrame:
    columns = [f"x_{i + 1}" for i in range(samples.shape[1])]
    return pd.DataFrame(samples, columns=columns)


def simulation_summary(result: MonteCarloResult, a_grid, component: int = 0) -> Dict:
    """Mean, covariance and empirical characteristic function along one coordinate of Monte Carlo samples"""
    samples = result.samples
    points = along_component(a_grid, samples.shape[1], component)
    values = empirical_cf(samples, points)
    return {
        "n_runs": len(samples),
        "scheme": result.scheme,
        "seed": result.seed,
        "mean": np.mean(samples, axis=0),
        "covariance": np.atleast_2d(np.cov(samples, rowvar=False)),
        "mean_jump_count": np.mean(result.jump_counts),
        "empirical_cf": cf_table(a_grid, values).to_dict(orient="records"),
    }


def _to_builtin(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def to_json(report: Dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, default=_to_builtin) + "\n"


def write_csv(table: pd.DataFrame, filepath: Optional[str] = None) -> None:
    """Write a table to a CSV file, or to stdout when filepath is None"""
    if filepath is None:
        table.to_csv(sys.stdout, float_format=CSV_FLOAT_FORMAT, index=False)
        return
    table.to_csv(filepath, float_format=CSV_FLOAT_FORMAT, index=False)
    logger.info(f"Wrote {len(table)} rows to {filepath}")


def write_json(report: Dict, filepath: Optional[str] = None) -> None:
    """Write a report as JSON to a file, or to stdout when filepath is None"""
    text = to_json(report)
    if filepath is None:
        sys.stdout.write(text)
        return
    with open(filepath, "w") as json_file:
        json_file.write(text)
    logger.info(f"Wrote report to {filepath}")
