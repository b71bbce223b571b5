#!/usr/bin/env python
from setuptools import setup, find_packages

setup(
    name="levy_ou_lab",
    version="0.0.1",
    author="Osmo Systems",
    author_email="dev@osmobot.com",
    description="Ornstein-Uhlenbeck processes with time-dependent coefficients and Lévy noise",
    packages=find_packages(),
    entry_points={"console_scripts": ["levy_ou = levy_ou_lab.run:run"]},
    # fmt: off
    install_requires=[
        "numpy",
        "pandas",
        "plotly>=4",
        "scipy>=1.6",
    ],
    # fmt: on
    package_data={"levy_ou_lab": ["scenarios/*.json"]},
    include_package_data=True,
)
