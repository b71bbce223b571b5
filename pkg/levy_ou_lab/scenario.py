"""A complete problem instance: dX(t) = (A(t) X(t-) + f(t)) dt + B(t) dZ(t) together with its numerics"""

import logging
from typing import List, NamedTuple

from .coefficients import MatrixFn, VectorFn
from .constants import (
    DEFAULT_COEFFICIENT_BOUND,
    DEFAULT_DECAY_HORIZON,
    DEFAULT_DECAY_SAMPLES,
    DEFAULT_FLOW_TOL,
    DEFAULT_IDENTITY_TOL,
    DEFAULT_ODE_STEP,
    DEFAULT_QUAD_STEP,
    DEFAULT_TAIL_TOL,
    MAX_TAIL_TOL,
)
from .evolution import EvolutionOperator
from .levy import LevyModel

logger = logging.getLogger(__name__)


class Numerics(NamedTuple):
    ode_step: float = DEFAULT_ODE_STEP
    quad_step: float = DEFAULT_QUAD_STEP
    tail_tol: float = DEFAULT_TAIL_TOL
    flow_tol: float = DEFAULT_FLOW_TOL
    identity_tol: float = DEFAULT_IDENTITY_TOL
    decay_horizon: float = DEFAULT_DECAY_HORIZON
    decay_samples: int = DEFAULT_DECAY_SAMPLES
    coefficient_bound: float = DEFAULT_COEFFICIENT_BOUND


class Scenario(NamedTuple):
    A: MatrixFn
    B: MatrixFn
    f: VectorFn
    noise: LevyModel
    numerics: Numerics
    seed: int
    # Shared by every computation on this scenario, so its caches are too
    operator: EvolutionOperator

    @property
    def dimension(self) -> int:
        return self.A.dimension


def get_numerics_validation_errors(numerics: Numerics) -> List[str]:
    validation_errors = {
        # fmt: off
        f"ode_step must be positive, got {numerics.ode_step}":
            not numerics.ode_step > 0,
        f"quad_step must be positive, got {numerics.quad_step}":
            not numerics.quad_step > 0,
        f"tail_tol must be in (0, {MAX_TAIL_TOL}], got {numerics.tail_tol}":
            not 0 < numerics.tail_tol <= MAX_TAIL_TOL,
        f"flow_tol must be positive, got {numerics.flow_tol}":
            not numerics.flow_tol > 0,
        f"identity_tol must be positive, got {numerics.identity_tol}":
            not numerics.identity_tol > 0,
        f"decay_horizon must be positive, got {numerics.decay_horizon}":
            not numerics.decay_horizon > 0,
        f"decay_samples must be at least 10, got {numerics.decay_samples}":
            not numerics.decay_samples >= 10,
        f"coefficient_bound must be positive, got {numerics.coefficient_bound}":
            not numerics.coefficient_bound > 0,
        # fmt: on
    }
    return [error for error, present in validation_errors.items() if present]


def get_validation_errors(
    A: MatrixFn,
    B: MatrixFn,
    f: VectorFn,
    noise: LevyModel,
    numerics: Numerics,
    seed: int,
) -> List[str]:
    """Check that the pieces of a scenario fit together

    Returns:
        List of validation errors, empty when the pieces make a well-formed scenario
    """
    d = A.dimension
    validation_errors = {
        # fmt: off
        f"B must be {d}x{d} like A, got dimension {B.dimension}":
            B.dimension != d,
        f"f must have dimension {d} like A, got {f.dimension}":
            f.dimension != d,
        f"noise must have dimension {d} like A, got {noise.dimension}":
            noise.dimension != d,
        f"seed must be a non-negative integer, got {seed!r}":
            not (isinstance(seed, int) and seed >= 0),
        # fmt: on
    }
    errors = [error for error, present in validation_errors.items() if present]
    return errors + get_numerics_validation_errors(numerics)


def make_scenario(
    A: MatrixFn,
    B: MatrixFn,
    f: VectorFn,
    noise: LevyModel,
    numerics: Numerics = Numerics(),
    seed: int = 0,
) -> Scenario:
    """Validated Scenario with its own evolution operator. Raises ValueError listing every problem found."""
    errors = get_validation_errors(A, B, f, noise, numerics, seed)
    if errors:
        raise ValueError(f"Invalid scenario:\n{errors}")

    logger.debug(f"Scenario d={A.dimension}: A={A}, B={B}, f={f}")
    return Scenario(
        A=A,
        B=B,
        f=f,
        noise=noise,
        numerics=numerics,
        seed=seed,
        operator=EvolutionOperator(A, numerics.ode_step),
    )
