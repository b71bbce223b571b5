"""Lévy noise models

A noise model is a Lévy triple [b, R, M] with sign convention E exp(i<a, Z(t)>) = exp(-t eta(a)), where

    eta(a) = -i<b, a> + <a, R a>/2 - integral (e^{i<a,y>} - 1 - i<a,y>/(1 + |y|^2)) M(dy)

The jump measure M is either absent, a finite sum of atoms (compound Poisson) or the rotationally invariant
symmetric alpha-stable measure, for which eta(a) = sigma^alpha |a|^alpha.
"""

import math
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import gamma

# Tolerance on the smallest eigenvalue of R
_PSD_TOLERANCE = 1e-12


class UnsupportedNoise(ValueError):
    # Raised when an operation needs an explicit jump measure the noise model doesn't have
    pass


class UnsupportedDimension(ValueError):
    # Raised when an operation is only implemented for one-dimensional noise
    pass


class CompoundPoisson(NamedTuple):
    # rates[i] > 0 is the intensity of jumps of size atoms[i] (a nonzero d-vector)
    rates: np.ndarray
    atoms: np.ndarray


class StableSymmetric(NamedTuple):
    alpha: float
    sigma: float


Jumps = Union[None, CompoundPoisson, StableSymmetric]


class LevyModel(NamedTuple):
    b: np.ndarray
    R: np.ndarray
    jumps: Jumps = None

    @property
    def dimension(self) -> int:
        return len(self.b)


def compound_poisson(atoms: Sequence[Sequence[float]]) -> CompoundPoisson:
    """Build a CompoundPoisson from rows [rate, y_1, ..., y_d]"""
    rows = np.atleast_2d(np.asarray(atoms, dtype=float))
    return CompoundPoisson(rates=rows[:, 0].copy(), atoms=rows[:, 1:].copy())


def get_validation_errors(model: LevyModel) -> List[str]:
    """Check a noise model against the Lévy triple requirements

    Returns:
        List of validation errors, empty when the model is well formed
    """
    b = np.asarray(model.b, dtype=float)
    R = np.asarray(model.R, dtype=float)
    if b.ndim != 1 or len(b) == 0:
        return [f"b must be a non-empty vector, got shape {b.shape}"]
    d = len(b)
    if R.shape != (d, d):
        return [f"R must be {d}x{d}, got shape {R.shape}"]

    finite = bool(np.all(np.isfinite(b)) and np.all(np.isfinite(R)))
    symmetric = finite and np.array_equal(R, R.T)
    validation_errors = {
        # fmt: off
        "b and R must be finite":
            not finite,
        "R must be symmetric":
            finite and not symmetric,
        "R must be positive semidefinite":
            symmetric and float(np.min(np.linalg.eigvalsh(R))) < -_PSD_TOLERANCE,
        # fmt: on
    }
    errors = [error for error, present in validation_errors.items() if present]

    return errors + _get_jump_validation_errors(model.jumps, b, R)


def _get_jump_validation_errors(jumps: Jumps, b: np.ndarray, R: np.ndarray) -> List:
    d = len(b)
    if jumps is None:
        return []

    if isinstance(jumps, CompoundPoisson):
        rates = np.asarray(jumps.rates, dtype=float)
        atoms = np.asarray(jumps.atoms, dtype=float)
        if atoms.ndim != 2 or atoms.shape != (len(rates), d):
            return [
                f"compound Poisson atoms must be {len(rates)} vectors of dimension {d}, "
                f"got shape {atoms.shape}"
            ]
        validation_errors = {
            # fmt: off
            "compound Poisson needs at least one atom":
                len(rates) == 0,
            "compound Poisson rates must be positive and finite":
                not np.all(np.isfinite(rates) & (rates > 0)),
            "compound Poisson atoms must be finite":
                not np.all(np.isfinite(atoms)),
            "compound Poisson atoms must be nonzero (M({0}) = 0)":
                bool(np.any(np.all(atoms == 0, axis=1))),
            # fmt: on
        }
        return [error for error, present in validation_errors.items() if present]

    if isinstance(jumps, StableSymmetric):
        validation_errors = {
            # fmt: off
            f"stable alpha must be in (0, 2], got {jumps.alpha}":
                not 0 < jumps.alpha <= 2,
            f"stable sigma must be positive, got {jumps.sigma}":
                not jumps.sigma > 0,
            "stable noise needs b = 0 and R = 0":
                bool(np.any(b != 0) or np.any(R != 0)),
            # fmt: on
        }
        return [error for error, present in validation_errors.items() if present]

    return [f"unknown jump specification {jumps!r}"]


def make_levy_model(b, R, jumps: Jumps = None) -> LevyModel:
    """Validated LevyModel. Raises ValueError listing every problem found."""
    model = LevyModel(
        b=np.atleast_1d(np.asarray(b, dtype=float)),
        R=np.atleast_2d(np.asarray(R, dtype=float)),
        jumps=jumps,
    )
    errors = get_validation_errors(model)
    if errors:
        raise ValueError(f"Invalid noise model:\n{errors}")
    return model


def characteristic_exponent(model: LevyModel, a) -> Union[complex, np.ndarray]:
    """eta(a), with phi_{Z(t)}(a) = exp(-t eta(a))

    Args:
        model: noise model
        a: d-vector, or an (..., d) stack of vectors

    Returns:
        complex for a single vector, otherwise a complex array shaped like the leading axes of `a`
    """
    a = np.asarray(a, dtype=float)
    eta = -1j * (a @ model.b) + 0.5 * np.einsum("...i,ij,...j->...", a, model.R, a)

    jumps = model.jumps
    if isinstance(jumps, CompoundPoisson):
        inner = a @ jumps.atoms.T
        compensator = inner / (1 + np.sum(jumps.atoms**2, axis=1))
        eta = eta - (np.exp(1j * inner) - 1 - 1j * compensator) @ jumps.rates
    elif isinstance(jumps, StableSymmetric):
        norm = np.linalg.norm(a, axis=-1)
        eta = eta + (jumps.sigma * norm) ** jumps.alpha

    return complex(eta) if np.ndim(eta) == 0 else eta


def standard_symmetric_stable(alpha: float, rng: np.random.Generator, size=None):
    """Chambers-Mallows-Stuck sample with characteristic function exp(-|a|^alpha)"""
    V = rng.uniform(-np.pi / 2, np.pi / 2, size=size)
    W = rng.standard_exponential(size=size)
    if alpha == 1:
        return np.tan(V)
    return (
        np.sin(alpha * V)
        / np.cos(V) ** (1 / alpha)
        * (np.cos((1 - alpha) * V) / W) ** ((1 - alpha) / alpha)
    )


def sample_increment_and_jumps(
    model: LevyModel, dt: float, rng: np.random.Generator, size: Optional[int] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """Sample Z(t + dt) - Z(t) together with the number of compound Poisson jumps it contains

    Args:
        model: noise model
        dt: positive time increment
        rng: the caller's exclusive stream
        size: number of independent increments, or None for a single one

    Returns:
        (increments, jump counts): a d-vector and an int when size is None, otherwise (size, d) and (size,)
    """
    if not dt > 0:
        raise ValueError(f"Increment length must be positive, got {dt}")

    d = model.dimension
    shape = (d,) if size is None else (size, d)
    increment = np.broadcast_to(model.b * dt, shape).copy()
    jump_count = np.zeros(() if size is None else (size,), dtype=int)

    if np.any(model.R != 0):
        increment += rng.multivariate_normal(
            np.zeros(d), model.R * dt, size=size, method="eigh"
        )

    jumps = model.jumps
    if isinstance(jumps, CompoundPoisson):
        counts = rng.poisson(
            jumps.rates * dt, size=None if size is None else (size, len(jumps.rates))
        )
        weights = jumps.rates / (1 + np.sum(jumps.atoms**2, axis=1))
        increment += counts @ jumps.atoms - dt * (weights @ jumps.atoms)
        jump_count = np.sum(counts, axis=-1)
    elif isinstance(jumps, StableSymmetric):
        if d != 1:
            raise UnsupportedDimension(
                f"Stable increments can only be sampled in dimension 1, got {d}"
            )
        scale = jumps.sigma * dt ** (1 / jumps.alpha)
        draws = standard_symmetric_stable(jumps.alpha, rng, size=size)
        increment += scale * np.reshape(draws, shape)

    return increment, jump_count


def sample_increment(
    model: LevyModel, dt: float, rng: np.random.Generator, size: Optional[int] = None
) -> np.ndarray:
    """Sample Z(t + dt) - Z(t), whose law has characteristic function exp(-dt eta(a))"""
    increment, _ = sample_increment_and_jumps(model, dt, rng, size)
    return increment


def levy_measure_integral(model: LevyModel, g: Callable[[np.ndarray], float]) -> float:
    """integral g(y) M(dy), an exact atom sum for compound Poisson noise

    Raises:
        UnsupportedNoise for stable noise, whose measure has no atom representation
    """
    jumps = model.jumps
    if jumps is None:
        return 0.0
    if isinstance(jumps, StableSymmetric):
        raise UnsupportedNoise(
            "Stable jump measures have no atom representation; use the analytic stable integrals"
        )
    values = np.array([g(atom) for atom in jumps.atoms], dtype=float)
    return float(values @ jumps.rates)


def stable_levy_density_constant(alpha: float, sigma: float) -> float:
    """c such that c |y|^{-1-alpha} dy is the one-dimensional Lévy measure with eta(a) = sigma^alpha |a|^alpha"""
    if not 0 < alpha < 2:
        raise UnsupportedNoise(
            f"Stable Lévy measure density needs alpha in (0, 2), got {alpha}"
        )
    if alpha == 1:
        return sigma / math.pi
    return sigma**alpha / (2 * -gamma(-alpha) * math.cos(math.pi * alpha / 2))


def stable_truncated_square_constant(alpha: float) -> float:
    """kappa with integral (1 ^ |g y|^2) M(dy) = kappa |g|^alpha for the unit-sigma one-dimensional stable measure

    Zero at alpha = 2, where the stable law is Gaussian and carries no jumps.
    """
    if alpha == 2:
        return 0.0
    c = stable_levy_density_constant(alpha, 1.0)
    return 2 * c * (1 / (2 - alpha) + 1 / alpha)


def small_and_large_jump_masses(
    model: LevyModel, radius: float
) -> Tuple[float, float]:
    """(K1, K2) = (integral_{|y| <= 1} |y|^2 M(dy), M(|y| > radius))"""
    jumps = model.jumps
    if jumps is None:
        return 0.0, 0.0

    if isinstance(jumps, CompoundPoisson):
        norms = np.linalg.norm(jumps.atoms, axis=1)
        small = float(np.sum(jumps.rates * norms**2 * (norms <= 1)))
        large = float(np.sum(jumps.rates * (norms > radius)))
        return small, large

    if model.dimension != 1:
        raise UnsupportedDimension(
            f"Stable jump masses are only available in dimension 1, got {model.dimension}"
        )
    if jumps.alpha == 2:
        return 0.0, 0.0
    c = stable_levy_density_constant(jumps.alpha, jumps.sigma)
    small = 2 * c / (2 - jumps.alpha)
    large = 2 * c * radius**-jumps.alpha / jumps.alpha if radius > 0 else math.inf
    return small, large
