"""Densities from characteristic functions, and distances between laws

invert_cf pairs the grid y_k = -L + k (2L/n) with the frequencies a_j = (j - n/2) pi/L, for which

    p(y_k) = (1/2pi) sum_j e^{-i a_j y_k} cf(a_j) pi/L = (1/2L) (-1)^k FFT((-1)^j cf(a_j))_k

when n is a multiple of 4. The discrete mass is then exactly cf(0) = 1, so mass that belongs outside [-L, L)
shows up as wrapped tails at the edges and as negative ripple instead; invert_cf measures both.
"""

import logging
from typing import Callable, NamedTuple

import numpy as np
import pandas as pd
from scipy import stats

logger = logging.getLogger(__name__)

MIN_GRID_SIZE = 256

# Largest mass the window may lose to negative ripple and wrapped tails
MASS_TOLERANCE = 1e-2

# Largest |cf| tolerated at the edge of the frequency grid
EDGE_TOLERANCE = 1e-8


class MassDeficit(ValueError):
    # Raised when an inverted density loses more than MASS_TOLERANCE of its mass to the window
    pass


class AliasingDetected(ValueError):
    # Raised when the characteristic function hasn't decayed at the edge of the widened frequency grid
    pass


class GridDensity(NamedTuple):
    grid: np.ndarray
    values: np.ndarray
    spacing: float

    def as_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame({"y": self.grid, "density": self.values})


def _frequencies(half_width: float, n: int) -> np.ndarray:
    return (np.arange(n) - n // 2) * np.pi / half_width


def invert_cf(
    cf: Callable[[np.ndarray], np.ndarray], half_width: float, n: int
) -> GridDensity:
    """Density of a one-dimensional law from its characteristic function, by FFT

    If |cf| at the largest frequency exceeds EDGE_TOLERANCE, the frequency grid is doubled once (n -> 2n, same
    half width) before giving up.

    Args:
        cf: vectorized characteristic function, mapping an array of frequencies to complex values
        half_width: L, the density is computed on [-L, L)
        n: power-of-two grid size, at least MIN_GRID_SIZE

    Returns:
        GridDensity with negative ripple clipped to 0 and mass renormalized to 1

    Raises:
        MassDeficit if negative ripple plus the tail mass estimated from the edge values exceeds MASS_TOLERANCE
        AliasingDetected if cf hasn't decayed at the edge even after doubling n
    """
    if n < MIN_GRID_SIZE or n & (n - 1):
        raise ValueError(
            f"Grid size must be a power of two >= {MIN_GRID_SIZE}, got {n}"
        )
    if abs(cf(np.zeros(1))[0] - 1) > 1e-12:
        raise ValueError("Not a characteristic function: cf(0) != 1")

    for attempt in range(2):
        frequencies = _frequencies(half_width, n)
        values = cf(frequencies)
        edge = abs(values[0])
        if edge <= EDGE_TOLERANCE:
            break
        if attempt == 0:
            logger.warning(
                f"|cf| = {edge:.3g} at frequency {abs(frequencies[0]):.6g}; doubling the grid to n={2 * n}"
            )
            n *= 2
    else:
        raise AliasingDetected(
            f"|cf| = {edge:.3g} at the edge frequency {abs(frequencies[0]):.6g} even with n={n}; "
            f"the density would alias"
        )

    signs = (-1.0) ** np.arange(n)
    spacing = 2 * half_width / n
    density = (signs * np.fft.fft(signs * values)).real / (2 * half_width)

    # A tail decaying like |y|^-2 holds mass L p(L) beyond L
    tail_mass = half_width * (abs(density[0]) + abs(density[-1]))
    negative_mass = -float(np.sum(np.clip(density, None, 0)) * spacing)
    deficit = tail_mass + negative_mass
    if deficit > MASS_TOLERANCE:
        raise MassDeficit(
            f"Inverted density loses mass {deficit:.3g} to the window [-{half_width}, {half_width}) "
            f"(tails {tail_mass:.3g}, negative ripple {negative_mass:.3g}); widen the grid"
        )

    clipped = np.clip(density, 0, None)
    clipped /= np.sum(clipped) * spacing
    logger.debug(f"Inverted cf on n={n} points, mass deficit {deficit:.3g}")

    grid = -half_width + spacing * np.arange(n)
    return GridDensity(grid=grid, values=clipped, spacing=spacing)


def sup_distance(p: GridDensity, q: Callable[[np.ndarray], np.ndarray]) -> float:
    """max over the grid of |p(y) - q(y)|"""
    return float(np.max(np.abs(p.values - q(p.grid))))


def ks_statistic(samples, cdf: Callable) -> float:
    """sup |F_n - F| between the empirical distribution of samples and a continuous cdf"""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("KS statistic needs at least one sample")
    return float(stats.kstest(samples, cdf).statistic)


def two_sample_ks(first, second, atol: float = 0.0) -> float:
    """Two-sample KS distance

    Laws that are point masses up to atol compare by location instead, since float noise would otherwise put the
    two atoms at a distance of 1.
    """
    first = np.asarray(first, dtype=float)
    second = np.asarray(second, dtype=float)
    if np.ptp(first) <= atol and np.ptp(second) <= atol:
        return 0.0 if abs(np.median(first) - np.median(second)) <= atol else 1.0
    return float(stats.ks_2samp(first, second).statistic)
