import sys
import logging
from typing import Dict

import numpy as np
import pandas as pd

from .coefficients import CoefficientSyntaxError
from .configure import (
    CommandConfiguration,
    ConfigError,
    UsageError,
    get_command_configuration,
)
from .data_logging import (
    along_component,
    cf_table,
    samples_table,
    simulation_summary,
    to_json,
    write_csv,
    write_json,
)
from .family import (
    EvolutionFamily,
    build_family,
    family_density,
    family_grid_density,
)
from .ou_core import ConditionsFailed, DecayUnavailable, cf_solution, decay_estimate
from .scenario import Scenario
from .simulate import monte_carlo, sample_paths
from .status import VerificationAbort, check_verification, verify_scenario
from .visualize import visualize_family, visualize_paths

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_NUMERIC_FAILURE = 3

CONFIG_ERRORS = (ConfigError, CoefficientSyntaxError, UsageError)

# Domain failures that aren't ValueErrors, then every remaining ValueError (numpy's LinAlgError included)
# and floating point error
NUMERIC_FAILURES = (
    ConditionsFailed,
    DecayUnavailable,
    VerificationAbort,
    ValueError,
    ArithmeticError,
)

PLOTTED_PATHS = 5


def _starting_point(sc: Scenario, x) -> np.ndarray:
    if x is None:
        return np.zeros(sc.dimension)
    if len(x) != sc.dimension:
        raise UsageError(f"--x needs {sc.dimension} components, got {len(x)}")
    return x


def _check_component(sc: Scenario, component: int) -> None:
    if not 0 <= component < sc.dimension:
        raise UsageError(f"--component must be in [0, {sc.dimension}), got {component}")


def cmd_cf(sc: Scenario, options: Dict) -> None:
    _check_component(sc, options["component"])
    a_grid = options["a_grid"]
    points = along_component(a_grid, sc.dimension, options["component"])
    x = _starting_point(sc, options["x"])

    values = cf_solution(sc, options["s"], options["t"], x, points)
    write_csv(cf_table(a_grid, values), options["output_filepath"])


def _family_density_table(fam: EvolutionFamily, t: float, options: Dict):
    y_grid = options["y_grid"]
    density = family_density(
        fam,
        t,
        y_grid,
        options["component"],
        half_width=options["half_width"],
        grid_size=options["grid_size"],
    )
    return pd.DataFrame({"t": t, "y": y_grid, "density": density})


def _family_cf_table(fam: EvolutionFamily, t: float, options: Dict):
    """nu_t-hat along one coordinate, with that coordinate's drift and Gaussian variance"""
    a_grid, component = options["a_grid"], options["component"]
    law = fam.nu(t)
    values = law.cf(along_component(a_grid, law.dimension, component))
    return pd.DataFrame(
        {
            "t": t,
            "a": a_grid,
            "re": values.real,
            "im": values.imag,
            "location": law.b[component],
            "variance": law.R[component, component],
        }
    )


def _write_grid_density(fam: EvolutionFamily, options: Dict) -> None:
    grid = family_grid_density(
        fam,
        options["t_grid"][0],
        options["component"],
        half_width=options["half_width"],
        grid_size=options["grid_size"],
    )
    write_csv(grid.as_dataframe(), options["grid_filepath"])


def cmd_family(sc: Scenario, options: Dict) -> None:
    _check_component(sc, options["component"])
    if options["grid_filepath"] is not None and len(options["t_grid"]) != 1:
        raise UsageError(
            f"--grid-out needs a single time in --t-grid, got {len(options['t_grid'])}"
        )
    fam = build_family(sc)
    family_table = (
        _family_cf_table if options["y_grid"] is None else _family_density_table
    )
    table = pd.concat([family_table(fam, t, options) for t in options["t_grid"]])
    write_csv(table, options["output_filepath"])

    if options["grid_filepath"] is not None:
        _write_grid_density(fam, options)

    if options["plot_filepath"] is not None:
        figure = visualize_family(table, title="Evolution system of measures")
        figure.write_html(options["plot_filepath"])


def cmd_verify(sc: Scenario, options: Dict) -> None:
    # For d > 1 each frequency a stands for the vector a (1, ..., 1)
    a_grid = np.outer(options["a_grid"], np.ones(sc.dimension))
    verification = verify_scenario(
        sc, options["pairs"], a_grid, options["samples"], period=options["period"]
    )
    write_json(verification.report, options["output_filepath"])

    if options["strict"]:
        check_verification(verification)


def cmd_simulate(sc: Scenario, options: Dict) -> None:
    _check_component(sc, options["component"])
    s, t, n_steps = options["s"], options["t"], options["n_steps"]
    x = _starting_point(sc, options["x"])

    result = monte_carlo(
        sc,
        s,
        t,
        x,
        options["n_runs"],
        n_steps,
        options["scheme"],
        workers=options["workers"],
    )
    write_csv(samples_table(result.samples), options["output_filepath"])

    summary = simulation_summary(result, options["a_grid"], options["component"])
    if options["summary_filepath"] is not None:
        write_json(summary, options["summary_filepath"])
    else:
        logging.info(f"Simulation summary: {to_json(summary)}")

    if options["path_filepath"] is None and options["plot_filepath"] is None:
        return
    paths = sample_paths(sc, s, t, x, n_steps, PLOTTED_PATHS)
    if options["path_filepath"] is not None:
        write_csv(paths[0].as_dataframe(), options["path_filepath"])
    if options["plot_filepath"] is not None:
        figure = visualize_paths(paths, "Euler paths", options["component"])
        figure.write_html(options["plot_filepath"])


def cmd_decay(sc: Scenario, options: Dict) -> None:
    horizon = options["horizon"]
    if horizon is not None:
        sc = sc._replace(numerics=sc.numerics._replace(decay_horizon=horizon))

    estimate = decay_estimate(sc, options["t"])
    report = {
        "C": estimate.C,
        "eps": estimate.epsilon,
        "valid": estimate.valid,
        "window": list(estimate.window),
    }
    write_json(report, options["output_filepath"])


COMMANDS = {
    "cf": cmd_cf,
    "family": cmd_family,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "decay": cmd_decay,
}


def run(cli_args=None) -> int:
    logging_format = "%(asctime)s [%(levelname)s]--- %(message)s"
    logging.basicConfig(
        level=logging.INFO, format=logging_format, handlers=[logging.StreamHandler()]
    )

    if cli_args is None:
        # First argument is the name of the command itself, not an "argument" we want to parse
        cli_args = sys.argv[1:]

    try:
        configuration: CommandConfiguration = get_command_configuration(cli_args)
        if configuration.options["verbose"]:
            logging.getLogger().setLevel(logging.DEBUG)

        logging.info(f"Running {configuration.command}")
        COMMANDS[configuration.command](configuration.scenario, configuration.options)

    except CONFIG_ERRORS as e:
        logging.error(f"Configuration error: {e}")
        return EXIT_CONFIG_ERROR

    except NUMERIC_FAILURES as e:
        logging.error(f"Numerical failure: {e!r}")
        return EXIT_NUMERIC_FAILURE

    else:
        logging.info(f"Finished {configuration.command}")
        return EXIT_OK
