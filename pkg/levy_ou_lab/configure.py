"""Scenario config files and command-line arguments"""

import argparse
import json
import logging
import math
from typing import Dict, List, NamedTuple, Optional

import numpy as np

from .coefficients import (
    CoeffExpr,
    CoefficientSyntaxError,
    MatrixFn,
    VectorFn,
    constant_expr,
    parse_expr,
)
from .density import MIN_GRID_SIZE
from .family import DEFAULT_GRID_SIZE, DEFAULT_HALF_WIDTH
from .levy import Jumps, LevyModel, StableSymmetric, compound_poisson, make_levy_model
from .scenario import Numerics, Scenario, get_validation_errors, make_scenario
from .simulate import SCHEMES

logger = logging.getLogger(__name__)

REQUIRED_KEYS = ("dimension", "A", "B", "f", "noise")
OPTIONAL_KEYS = ("numerics", "seed", "description")
NOISE_KEYS = {
    "gaussian": {"type", "b", "R"},
    "compound_poisson": {"type", "b", "R", "atoms"},
    "stable": {"type", "alpha", "sigma"},
}

DEFAULT_A_GRID = "-3:3:0.5"
DEFAULT_RUNS = 1000
DEFAULT_STEPS = 100
DEFAULT_KS_SAMPLES = 10**4


class ConfigError(ValueError):
    # Raised when a scenario config can't be turned into a scenario. `errors` holds "key: problem" strings.
    def __init__(self, errors: List[str]):
        super().__init__(f"Invalid scenario config:\n{errors}")
        self.errors = errors


class UsageError(ValueError):
    # Raised when command-line options don't fit the loaded scenario
    pass


class CommandConfiguration(NamedTuple):
    command: str
    scenario: Scenario
    # Every parsed command-line option, keyed by dest
    options: Dict


def _parse_grid(text: str) -> np.ndarray:
    try:
        lo, hi, step = (float(part) for part in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi:step, got {text!r}")
    if not step > 0 or hi < lo:
        raise argparse.ArgumentTypeError(
            f"expected lo <= hi and step > 0, got {text!r}"
        )
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not (value > 0 and math.isfinite(value)):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return value


def _parse_grid_size(text: str) -> int:
    value = _positive_int(text)
    if value < MIN_GRID_SIZE or value & (value - 1):
        raise argparse.ArgumentTypeError(
            f"expected a power of two >= {MIN_GRID_SIZE}, got {text!r}"
        )
    return value


def _parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([float(part) for part in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated numbers, got {text!r}"
        )


def _parse_pair(text: str):
    try:
        s, t = (float(part) for part in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected s:t, got {text!r}")
    if s > t:
        raise argparse.ArgumentTypeError(f"expected s <= t, got {text!r}")
    return s, t


def _parse_args(args: List[str]) -> Dict:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        required=True,
        dest="config_filepath",
        help="scenario config JSON filepath",
    )
    common.add_argument(
        "--out",
        dest="output_filepath",
        default=None,
        help="output filepath. Default: stdout",
    )
    common.add_argument(
        "--seed", type=int, default=None, help="override the scenario seed"
    )
    common.add_argument(
        "--verbose", action="store_true", default=False, help="log at debug level"
    )

    interval = argparse.ArgumentParser(add_help=False)
    interval.add_argument("--s", type=float, default=0.0, help="start time. Default: 0")
    interval.add_argument("--t", type=float, default=1.0, help="end time. Default: 1")
    interval.add_argument(
        "--x",
        type=_parse_vector,
        default=None,
        help="starting point, comma-separated (use --x=-1,2 for negative values). Default: 0",
    )

    frequencies = argparse.ArgumentParser(add_help=False)
    frequencies.add_argument(
        "--a-grid",
        type=_parse_grid,
        default=DEFAULT_A_GRID,
        help=f"frequencies lo:hi:step (use --a-grid=-3:3:0.5 for negative bounds). Default: {DEFAULT_A_GRID}",
    )

    marginal = argparse.ArgumentParser(add_help=False)
    marginal.add_argument(
        "--component",
        type=int,
        default=0,
        help="coordinate whose one-dimensional marginal is reported. Default: 0",
    )

    plot = argparse.ArgumentParser(add_help=False)
    plot.add_argument(
        "--plot",
        dest="plot_filepath",
        default=None,
        help="also write a plotly HTML figure to this filepath",
    )

    arg_parser = argparse.ArgumentParser(
        description="Non-autonomous Ornstein-Uhlenbeck processes driven by Levy noise",
        formatter_class=argparse.RawTextHelpFormatter,
    )
    subparsers = arg_parser.add_subparsers(dest="command", required=True)

    subparsers.add_parser(
        "cf",
        parents=[common, interval, frequencies, marginal],
        help="characteristic function of X_{s,x}(t) along one coordinate, as CSV a,re,im",
    )

    family_parser = subparsers.add_parser(
        "family",
        parents=[common, frequencies, marginal, plot],
        help="evolution system of measures nu_t: characteristic function or density, as CSV",
    )
    family_parser.add_argument(
        "--t-grid",
        type=_parse_grid,
        default="0:0:1",
        help="times lo:hi:step. Default: 0",
    )
    family_parser.add_argument(
        "--y-grid",
        type=_parse_grid,
        default=None,
        help="report densities at these points lo:hi:step instead of characteristic function values",
    )
    family_parser.add_argument(
        "--half-width",
        type=_positive_float,
        default=DEFAULT_HALF_WIDTH,
        help=f"half width of the FFT window for laws without a closed-form density. Default: {DEFAULT_HALF_WIDTH}",
    )
    family_parser.add_argument(
        "--grid-size",
        type=_parse_grid_size,
        default=DEFAULT_GRID_SIZE,
        help=f"FFT grid size, a power of two. Default: {DEFAULT_GRID_SIZE}",
    )
    family_parser.add_argument(
        "--grid-out",
        dest="grid_filepath",
        default=None,
        help="also write the FFT density of nu_t on its whole grid as CSV y,density (one time in --t-grid only)",
    )

    verify_parser = subparsers.add_parser(
        "verify",
        parents=[common, frequencies],
        help="check existence conditions and the evolution identity, as a JSON report",
    )
    verify_parser.add_argument(
        "--pairs",
        type=_parse_pair,
        nargs="+",
        default=[(0.0, 1.0)],
        help="time pairs s:t to check (use --pairs=-1:0 for negative times). Default: 0:1",
    )
    verify_parser.add_argument(
        "--samples",
        type=_positive_int,
        default=DEFAULT_KS_SAMPLES,
        help=f"samples per law for the empirical convolution check. Default: {DEFAULT_KS_SAMPLES}",
    )
    verify_parser.add_argument(
        "--period",
        type=_positive_float,
        default=None,
        help="also check that nu_t repeats with this period",
    )
    verify_parser.add_argument(
        "--strict",
        action="store_true",
        default=False,
        help="exit with status 3 if any check fails. Default: report failures only",
    )

    simulate_parser = subparsers.add_parser(
        "simulate",
        parents=[common, interval, frequencies, marginal, plot],
        help="Monte Carlo terminal states of X_{s,x}(t), as CSV",
    )
    simulate_parser.add_argument(
        "--runs",
        dest="n_runs",
        type=_positive_int,
        default=DEFAULT_RUNS,
        help=f"number of runs. Default: {DEFAULT_RUNS}",
    )
    simulate_parser.add_argument(
        "--steps",
        dest="n_steps",
        type=_positive_int,
        default=DEFAULT_STEPS,
        help=f"time steps per run. Default: {DEFAULT_STEPS}",
    )
    simulate_parser.add_argument(
        "--scheme", choices=SCHEMES, default="exact", help="Default: exact"
    )
    simulate_parser.add_argument(
        "--workers",
        type=_positive_int,
        default=None,
        help="worker threads. Default: $LEVY_OU_THREADS, else the CPU count up to 4",
    )
    simulate_parser.add_argument(
        "--summary",
        dest="summary_filepath",
        default=None,
        help="write mean, covariance and empirical characteristic function as JSON to this filepath",
    )
    simulate_parser.add_argument(
        "--path-out",
        dest="path_filepath",
        default=None,
        help="write one Euler path as CSV time,x_1,...,x_d to this filepath",
    )

    decay_parser = subparsers.add_parser(
        "decay",
        parents=[common],
        help="fitted exponential decay bound of U(t,s), as JSON",
    )
    decay_parser.add_argument(
        "--t", type=float, default=0.0, help="end of the fitting window. Default: 0"
    )
    decay_parser.add_argument(
        "--horizon",
        type=_positive_float,
        default=None,
        help="length of the fitting window. Default: the scenario's decay_horizon",
    )

    return vars(arg_parser.parse_args(args))


def read_config_file(filepath: str) -> Dict:
    try:
        with open(filepath) as config_file:
            config = json.load(config_file)
    except json.JSONDecodeError as e:
        raise ConfigError([f"config: malformed JSON in {filepath}: {e}"])
    except OSError as e:
        raise ConfigError([f"config: can't read {filepath}: {e}"])

    if not isinstance(config, dict):
        raise ConfigError(
            [f"config: expected a JSON object, got {type(config).__name__}"]
        )
    return config


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _is_square_grid(value, d: int) -> bool:
    return (
        isinstance(value, list)
        and len(value) == d
        and all(isinstance(row, list) and len(row) == d for row in value)
    )


def _parse_expression(value, key: str, errors: List[str]) -> CoeffExpr:
    """Parsed expression, or a placeholder 0 with the problem appended to errors"""
    if isinstance(value, str):
        try:
            return parse_expr(value)
        except CoefficientSyntaxError as e:
            errors.append(f"{key}: {e}")
    elif _is_number(value):
        return constant_expr(value)
    else:
        errors.append(
            f"{key}: expected an expression string or a number, got {value!r}"
        )
    return constant_expr(0)


def _parse_matrix(rows: List, name: str, errors: List[str]) -> MatrixFn:
    return MatrixFn.from_rows(
        [
            [
                _parse_expression(entry, f"{name}[{i}][{j}]", errors)
                for j, entry in enumerate(row)
            ]
            for i, row in enumerate(rows)
        ]
    )


def _parse_vector_fn(entries: List, name: str, errors: List[str]) -> VectorFn:
    return VectorFn.from_entries(
        [
            _parse_expression(entry, f"{name}[{i}]", errors)
            for i, entry in enumerate(entries)
        ]
    )


def _get_structure_errors(config: Dict) -> List[str]:
    missing = [f"{key}: missing" for key in REQUIRED_KEYS if key not in config]
    unknown = [
        f"{key}: unknown key"
        for key in sorted(set(config) - set(REQUIRED_KEYS) - set(OPTIONAL_KEYS))
    ]
    if missing or unknown:
        return missing + unknown

    d = config["dimension"]
    if not (isinstance(d, int) and not isinstance(d, bool) and d >= 1):
        return [f"dimension: expected a positive integer, got {d!r}"]

    noise = config["noise"]
    numerics = config.get("numerics", {})
    seed = config.get("seed", 0)
    validation_errors = {
        # fmt: off
        f"A: expected a {d}x{d} array of expressions":
            not _is_square_grid(config["A"], d),
        f"B: expected a {d}x{d} array of expressions":
            not _is_square_grid(config["B"], d),
        f"f: expected an array of {d} expressions":
            not (isinstance(config["f"], list) and len(config["f"]) == d),
        f"noise.type: expected one of {sorted(NOISE_KEYS)}":
            not (isinstance(noise, dict) and noise.get("type") in NOISE_KEYS),
        "numerics: expected an object":
            not isinstance(numerics, dict),
        f"seed: expected a non-negative integer, got {seed!r}":
            not (isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0),
        # fmt: on
    }
    return [error for error, present in validation_errors.items() if present]


def _get_numerics(numerics: Dict, errors: List[str]) -> Numerics:
    values = {}
    for key, value in numerics.items():
        if key not in Numerics._fields:
            errors.append(f"numerics.{key}: unknown key")
        elif not _is_number(value):
            errors.append(f"numerics.{key}: expected a number, got {value!r}")
        else:
            values[key] = type(Numerics._field_defaults[key])(value)
    return Numerics(**values)


def _get_noise(noise: Dict, d: int, errors: List[str]) -> Optional[LevyModel]:
    noise_type = noise["type"]
    unknown = sorted(set(noise) - NOISE_KEYS[noise_type])
    errors.extend(f"noise.{key}: not used by {noise_type} noise" for key in unknown)

    required = {"stable": ("alpha", "sigma"), "compound_poisson": ("atoms",)}
    missing = [key for key in required.get(noise_type, ()) if key not in noise]
    if missing:
        errors.extend(f"noise.{key}: missing" for key in missing)
        return None

    try:
        jumps: Jumps = None
        if noise_type == "stable":
            jumps = StableSymmetric(alpha=noise["alpha"], sigma=noise["sigma"])
        elif noise_type == "compound_poisson":
            jumps = compound_poisson(noise["atoms"])
        return make_levy_model(
            b=noise.get("b", np.zeros(d)),
            R=noise.get("R", np.zeros((d, d))),
            jumps=jumps,
        )
    except (ValueError, TypeError) as e:
        errors.append(f"noise: {e}")
        return None


def get_scenario(config: Dict, seed: Optional[int] = None) -> Scenario:
    """Scenario described by a parsed config file

    Args:
        config: dict with the keys dimension, A, B, f, noise and optionally numerics, seed, description
        seed: overrides the config's seed

    Raises:
        ConfigError listing every problem found, each prefixed with the offending key
    """
    errors = _get_structure_errors(config)
    if errors:
        raise ConfigError(errors)

    A = _parse_matrix(config["A"], "A", errors)
    B = _parse_matrix(config["B"], "B", errors)
    f = _parse_vector_fn(config["f"], "f", errors)
    numerics = _get_numerics(config.get("numerics", {}), errors)
    noise = _get_noise(config["noise"], config["dimension"], errors)
    if errors or noise is None:
        raise ConfigError(errors)

    seed = config.get("seed", 0) if seed is None else seed
    scenario_errors = get_validation_errors(A, B, f, noise, numerics, seed)
    if scenario_errors:
        raise ConfigError([f"scenario: {error}" for error in scenario_errors])

    return make_scenario(A, B, f, noise, numerics, seed)


def get_command_configuration(cli_args: List[str]) -> CommandConfiguration:
    args = _parse_args(cli_args)
    config = read_config_file(args["config_filepath"])
    scenario = get_scenario(config, seed=args["seed"])

    logger.info(
        f"Loaded {config.get('description', 'scenario')!r} from {args['config_filepath']} "
        f"(d={scenario.dimension}, seed={scenario.seed})"
    )
    return CommandConfiguration(
        command=args["command"], scenario=scenario, options=args
    )
