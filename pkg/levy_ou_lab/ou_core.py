"""The law of X_{s,x}(t)

The solution of dX = (A X + f) dt + B dZ started from x at time s is

    X_{s,x}(t) = U(t,s) x + integral_s^t U(t,r) f(r) dr + integral_s^t U(t,r) B(r) dZ(r)

which is infinitely divisible. Its characteristic function and its triple [b_{s,t}, R_{s,t}, M_{s,t}] are time
integrals over r of quantities built from G(r) = U(t,r) B(r), computed by Simpson's rule on the backward
propagator grid. Limits s -> -inf are truncated where the exponential decay bound on U makes the tail negligible.
"""

import logging
import math
from functools import partial
from typing import Callable, List, NamedTuple, Optional, Tuple

import numpy as np
from scipy import stats

from . import quadrature
from .coefficients import probe_bound
from .evolution import DecayEstimate, estimate_decay
from .levy import (
    CompoundPoisson,
    Jumps,
    LevyModel,
    StableSymmetric,
    UnsupportedDimension,
    UnsupportedNoise,
    characteristic_exponent,
    small_and_large_jump_masses,
    stable_truncated_square_constant,
    standard_symmetric_stable,
)
from .scenario import Scenario

logger = logging.getLogger(__name__)

# Each discarded tail is held to this fraction of tail_tol
TRUNCATION_MARGIN = 0.1

# Largest number of integrand entries evaluated at once by levy_khintchine_integral
CHUNK_ENTRIES = 2**22


class DecayUnavailable(Exception):
    # Raised when an integral over (-inf, t] is requested but ||U(t,s)|| <= C e^{-eps (t-s)} could not be fitted
    pass


class ConditionsFailed(Exception):
    # Raised when a scenario fails a condition for the existence of an evolution system of measures
    pass


class IntegrandGrid(NamedTuple):
    # r ascending from s to t; U(t, r_j), G(r_j) = U(t, r_j) B(r_j) and U(t, r_j) f(r_j) stacked along axis 0
    r: np.ndarray
    U: np.ndarray
    G: np.ndarray
    forcing: np.ndarray


def integrand_grid(
    sc: Scenario, s: float, t: float, spacing: Optional[float] = None
) -> IntegrandGrid:
    grid = sc.operator.propagators_to(t, s, spacing or sc.numerics.quad_step)
    G = grid.U @ sc.B.evaluate(grid.r)
    forcing = np.einsum("nij,nj->ni", grid.U, sc.f.evaluate(grid.r))
    logger.debug(f"Integrand grid on [{s}, {t}]: {len(grid.r)} points")
    return IntegrandGrid(r=grid.r, U=grid.U, G=G, forcing=forcing)


def _scalar_or_array(values: np.ndarray, single: bool):
    return complex(values[0]) if single else values


class JumpFunctional(NamedTuple):
    """Integrals against M_{s,t}, the image of ds x M(dy) under (r, y) -> U(t,r) B(r) y

    The pushforward measure is never materialized. Compound Poisson atoms are pushed through G(r) and summed,
    and for symmetric stable noise every integral reduces to one of |G(r)|^alpha.
    """

    jumps: Jumps
    r: np.ndarray
    G: np.ndarray

    def _pushed_atoms(self, jumps: CompoundPoisson) -> np.ndarray:
        return np.einsum("nij,kj->nki", self.G, jumps.atoms)

    def integrate(self, g: Callable[[np.ndarray], np.ndarray]):
        """integral g(z) M_{s,t}(dz) = integral_s^t sum_i rate_i g(G(r) y_i) dr

        Args:
            g: maps an (..., d) array of jump sizes to an (...) array of real or complex values

        Raises:
            UnsupportedNoise for stable noise, which has no atoms to push forward
        """
        if self.jumps is None:
            return 0.0
        if isinstance(self.jumps, StableSymmetric):
            raise UnsupportedNoise(
                "Stable pushforward measures have no atom representation"
            )
        values = g(self._pushed_atoms(self.jumps)) @ self.jumps.rates
        return np.asarray(quadrature.integrate(values, self.r)).item()

    @property
    def stable_noise(self) -> StableSymmetric:
        if not isinstance(self.jumps, StableSymmetric):
            raise UnsupportedNoise(f"Not a stable noise model: {self.jumps!r}")
        return self.jumps

    def stable_scale_power(self) -> float:
        """integral_s^t |G(r)|^alpha dr for one-dimensional stable noise"""
        alpha = self.stable_noise.alpha
        if self.G.shape[-1] != 1:
            raise UnsupportedDimension(
                f"Stable scale integrals are only available in dimension 1, got {self.G.shape[-1]}"
            )
        powers = np.abs(self.G[:, 0, 0]) ** alpha
        return float(quadrature.integrate(powers, self.r))

    def stable_scale(self) -> float:
        """Scale c of the one-dimensional stable law with characteristic exponent c^alpha |a|^alpha"""
        noise = self.stable_noise
        return noise.sigma * self.stable_scale_power() ** (1 / noise.alpha)

    def _stable_integral(self, points: np.ndarray) -> np.ndarray:
        alpha = self.stable_noise.alpha
        weight = self.stable_noise.sigma**alpha
        if self.G.shape[-1] == 1:
            # |G(r) a|^alpha = |G(r)|^alpha |a|^alpha
            return -weight * self.stable_scale_power() * np.abs(points[:, 0]) ** alpha
        arguments = np.einsum("nji,mj->nmi", self.G, points)
        powers = np.linalg.norm(arguments, axis=-1) ** alpha
        return -weight * quadrature.integrate(powers, self.r)

    def _compound_poisson_integral(
        self, pushed: np.ndarray, rates: np.ndarray, points: np.ndarray
    ) -> np.ndarray:
        inner = np.einsum("nkd,md->nmk", pushed, points)
        squared = np.sum(pushed**2, axis=-1)[:, np.newaxis, :]
        integrand = np.exp(1j * inner) - 1 - 1j * inner / (1 + squared)
        return quadrature.integrate(integrand @ rates, self.r)

    def levy_khintchine_integral(self, a):
        """integral (e^{i<a,z>} - 1 - i<a,z>/(1 + |z|^2)) M_{s,t}(dz) at a d-vector or an (m, d) stack"""
        a = np.asarray(a, dtype=float)
        points = np.atleast_2d(a)
        single = a.ndim == 1

        if self.jumps is None:
            return _scalar_or_array(np.zeros(len(points), dtype=complex), single)

        if isinstance(self.jumps, StableSymmetric):
            integral_at: Callable = self._stable_integral
            chunk = max(1, CHUNK_ENTRIES // self.G.size)
        else:
            pushed = self._pushed_atoms(self.jumps)
            rates = self.jumps.rates
            integral_at = partial(self._compound_poisson_integral, pushed, rates)
            chunk = max(1, CHUNK_ENTRIES // pushed.size)

        integral = np.concatenate(
            [
                integral_at(points[start : start + chunk])
                for start in range(0, len(points), chunk)
            ]
        )
        return _scalar_or_array(integral.astype(complex), single)

    def truncated_second_moment(self) -> float:
        """integral (1 ^ |z|^2) M_{s,t}(dz)"""
        if self.jumps is None:
            return 0.0
        if isinstance(self.jumps, StableSymmetric):
            kappa = stable_truncated_square_constant(self.jumps.alpha)
            spread = self.jumps.sigma**self.jumps.alpha
            return kappa * spread * self.stable_scale_power()
        return float(self.integrate(lambda z: np.minimum(1.0, np.sum(z**2, axis=-1))))


class IDLaw(NamedTuple):
    """An infinitely divisible law [b, R, M] with characteristic function

    cf(a) = exp(i<a, b> - <a, R a>/2 + integral (e^{i<a,z>} - 1 - i<a,z>/(1 + |z|^2)) M(dz))
    """

    b: np.ndarray
    R: np.ndarray
    jumps: JumpFunctional

    @property
    def dimension(self) -> int:
        return len(self.b)

    def cf(self, a):
        """Characteristic function at a d-vector (complex) or an (m, d) stack (complex array)"""
        a = np.asarray(a, dtype=float)
        points = np.atleast_2d(a)
        gaussian_part = 1j * points @ self.b - 0.5 * np.einsum(
            "mi,ij,mj->m", points, self.R, points
        )
        values = np.exp(gaussian_part + self.jumps.levy_khintchine_integral(points))
        return _scalar_or_array(values, a.ndim == 1)

    @property
    def kind(self) -> str:
        """One of "point_mass", "gaussian", "stable", "compound_poisson" """
        if isinstance(self.jumps.jumps, StableSymmetric):
            return "stable"
        if isinstance(self.jumps.jumps, CompoundPoisson):
            return "compound_poisson"
        return "gaussian" if np.any(self.R != 0) else "point_mass"

    def _check_closed_form(self):
        if self.dimension != 1:
            raise UnsupportedDimension(
                f"Closed-form laws are only available in dimension 1, got {self.dimension}"
            )
        if self.kind == "compound_poisson":
            raise UnsupportedNoise("Compound Poisson laws have no closed form")

    @property
    def location(self) -> float:
        self._check_closed_form()
        return float(self.b[0])

    @property
    def scale(self) -> float:
        """Standard deviation for Gaussian laws, the stable scale c for stable laws, 0 for a point mass"""
        self._check_closed_form()
        if self.kind == "stable":
            return self.jumps.stable_scale()
        return math.sqrt(max(0.0, self.R[0, 0]))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """n independent draws, shape (n,)"""
        location, scale = self.location, self.scale
        if self.kind == "stable":
            alpha = self.jumps.stable_noise.alpha
            return location + scale * standard_symmetric_stable(alpha, rng, size=n)
        return location + scale * rng.standard_normal(n)

    def cdf(self, y):
        location, scale = self.location, self.scale
        y = np.asarray(y, dtype=float)
        if scale == 0:
            return (y >= location).astype(float)
        if self.kind == "gaussian":
            return stats.norm.cdf(y, loc=location, scale=scale)
        alpha = self.jumps.stable_noise.alpha
        if alpha == 1:
            return stats.cauchy.cdf(y, loc=location, scale=scale)
        if alpha == 2:
            return stats.norm.cdf(y, loc=location, scale=scale * math.sqrt(2))
        return stats.levy_stable.cdf(y, alpha, 0, loc=location, scale=scale)


class TripleResult(NamedTuple):
    b: np.ndarray
    R: np.ndarray
    jumps: JumpFunctional
    s: float
    t: float
    # Lower integration limit actually used when s is -inf
    truncated_at: Optional[float] = None

    def law(self, x_shift=None) -> IDLaw:
        b = self.b if x_shift is None else self.b + np.asarray(x_shift, dtype=float)
        return IDLaw(b=b, R=self.R, jumps=self.jumps)


def _shift(grid: IntegrandGrid, x) -> np.ndarray:
    free = grid.U[0] @ np.asarray(x, dtype=float)
    return free + quadrature.integrate(grid.forcing, grid.r)


def cf_solution(sc: Scenario, s: float, t: float, x, a):
    """Characteristic function of X_{s,x}(t)

        exp(i<a, U(t,s) x + integral_s^t U(t,r) f(r) dr> - integral_s^t eta(B(r)^T U(t,r)^T a) dr)

    Args:
        sc: scenario
        s, t: start and end times, s <= t
        x: starting point, a d-vector
        a: a d-vector, or an (m, d) stack of them

    Returns:
        complex for a single vector, otherwise an (m,) complex array
    """
    a = np.asarray(a, dtype=float)
    points = np.atleast_2d(a)
    grid = integrand_grid(sc, s, t)

    shift = _shift(grid, x)
    arguments = np.einsum("nji,mj->nmi", grid.G, points)
    eta = characteristic_exponent(sc.noise, arguments)
    values = np.exp(1j * points @ shift - quadrature.integrate(eta, grid.r))
    return _scalar_or_array(values, a.ndim == 1)


def _compensator_drift(noise: LevyModel, G: np.ndarray) -> np.ndarray:
    """integral G y (1/(1 + |G y|^2) - 1/(1 + |y|^2)) M(dy) at each grid point

    Zero for symmetric stable noise, where the integrand is odd in y.
    """
    jumps = noise.jumps
    if not isinstance(jumps, CompoundPoisson):
        return np.zeros(G.shape[:2])
    pushed = np.einsum("nij,kj->nki", G, jumps.atoms)
    weights = jumps.rates * (
        1 / (1 + np.sum(pushed**2, axis=-1))
        - 1 / (1 + np.sum(jumps.atoms**2, axis=-1))
    )
    return np.einsum("nk,nki->ni", weights, pushed)


def compute_triple(sc: Scenario, s: float, t: float) -> TripleResult:
    """The triple [b_{s,t}, R_{s,t}, M_{s,t}] of X_{s,0}(t)

        b_{s,t} = integral U f + integral U B b + integral integral U B y (1/(1 + |U B y|^2) - 1/(1 + |y|^2)) M(dy)
        R_{s,t} = integral U B R B^T U^T

    all over r in [s, t], with M_{s,t} kept as an integration functional.
    """
    if not (math.isfinite(s) and math.isfinite(t)):
        raise ValueError(
            f"compute_triple needs finite times, got s={s}, t={t}; use limit_triple for s = -inf"
        )
    grid = integrand_grid(sc, s, t)
    noise = sc.noise

    drift = grid.forcing + grid.G @ noise.b + _compensator_drift(noise, grid.G)
    covariance = grid.G @ noise.R @ np.swapaxes(grid.G, 1, 2)
    b = quadrature.integrate(drift, grid.r)
    R = quadrature.integrate(covariance, grid.r)

    return TripleResult(
        b=b,
        R=(R + R.T) / 2,
        jumps=JumpFunctional(noise.jumps, grid.r, grid.G),
        s=s,
        t=t,
    )


def triple_cf(triple: TripleResult, x_shift, a):
    """Characteristic function of x_shift + (the law with this triple), by Lévy-Khintchine"""
    return triple.law(x_shift).cf(a)


def decay_estimate(sc: Scenario, t: float) -> DecayEstimate:
    """Exponential decay bound of U fitted on the window [t - decay_horizon, t]"""
    numerics = sc.numerics
    return estimate_decay(
        sc.operator, t - numerics.decay_horizon, t, numerics.decay_samples
    )


def require_decay(sc: Scenario, t: float) -> DecayEstimate:
    estimate = decay_estimate(sc, t)
    if not estimate.valid:
        raise DecayUnavailable(
            f"No exponential decay bound ||U(t,s)|| <= C e^(-eps (t-s)) holds on {estimate.window} "
            f"(fitted C={estimate.C:.6g}, eps={estimate.epsilon:.6g}); improper integrals over (-inf, t] "
            f"are refused"
        )
    return estimate


class CoefficientBounds(NamedTuple):
    # Bounds on ||B(r)|| and |f(r)| sampled on the decay window
    B: float
    f: float


def coefficient_bounds(sc: Scenario, t: float) -> CoefficientBounds:
    numerics = sc.numerics
    window = (t - numerics.decay_horizon, t)
    d = sc.dimension
    largest_B = probe_bound(sc.B, *window, numerics.coefficient_bound, name="B")
    largest_f = probe_bound(sc.f, *window, numerics.coefficient_bound, name="f")
    probe_bound(sc.A, *window, numerics.coefficient_bound, name="A")
    # Operator and Euclidean norms are bounded through the largest entry
    return CoefficientBounds(B=d * largest_B, f=math.sqrt(d) * largest_f)


def _tail_terms(
    noise: LevyModel, decay: DecayEstimate, bounds: CoefficientBounds
) -> List[Tuple[float, float]]:
    """(prefactor, rate) pairs such that each integrand is bounded by prefactor e^{-rate (t - r)}"""
    C, epsilon = decay.C, decay.epsilon
    CB = C * bounds.B
    terms = [
        (C * bounds.f, epsilon),
        (CB * float(np.linalg.norm(noise.b)), epsilon),
        (CB**2 * float(np.linalg.norm(noise.R, ord=2)), 2 * epsilon),
    ]

    jumps = noise.jumps
    if isinstance(jumps, CompoundPoisson):
        norms = np.linalg.norm(jumps.atoms, axis=1)
        terms.append((CB * float(jumps.rates @ norms), epsilon))
        terms.append((CB**2 * float(jumps.rates @ norms**2), 2 * epsilon))
    elif isinstance(jumps, StableSymmetric):
        terms.append(
            ((jumps.sigma * CB) ** jumps.alpha, jumps.alpha * epsilon)
        )
    return terms


def truncation_point(sc: Scenario, t: float, decay: DecayEstimate) -> float:
    """Lower limit s* such that every discarded tail over (-inf, s*] is below TRUNCATION_MARGIN * tail_tol

    Each integrand is bounded by K e^{-rate (t - r)}, whose tail is K e^{-rate (t - s*)} / rate.
    """
    tolerance = TRUNCATION_MARGIN * sc.numerics.tail_tol
    terms = _tail_terms(sc.noise, decay, coefficient_bounds(sc, t))
    lengths = [
        math.log(prefactor / (rate * tolerance)) / rate
        for prefactor, rate in terms
        if prefactor > rate * tolerance
    ]
    length = max(lengths + [sc.numerics.quad_step])
    logger.info(f"Truncating integrals over (-inf, {t}] at s*={t - length:.6g}")
    return t - length


def limit_triple(sc: Scenario, t: float) -> TripleResult:
    """[b_{-inf,t}, R_{-inf,t}, M_{-inf,t}], the limits of the triples of X_{s,0}(t) as s -> -inf

    Raises:
        DecayUnavailable when no exponential decay bound could be fitted below t
    """
    decay = require_decay(sc, t)
    start = truncation_point(sc, t, decay)
    triple = compute_triple(sc, start, t)
    return triple._replace(s=-math.inf, truncated_at=start)


class Condition(NamedTuple):
    holds: bool
    value: float


class ExistenceReport(NamedTuple):
    # sup_s tr R_{s,t}
    cond_i: Condition
    # integral_{-inf}^t integral (1 ^ |U(t,r) B(r) y|^2) M(dy) dr
    cond_ii: Condition
    # (C^2 C_B^2 K1 + K2), bounding the cond_ii integrand per unit time; None where it isn't available
    majorant_per_unit_time: Optional[float]
    decay: DecayEstimate
    truncated_at: float


def _majorant_per_unit_time(
    noise: LevyModel, decay: DecayEstimate, bounds: CoefficientBounds
) -> Optional[float]:
    CB = decay.C * bounds.B
    if CB == 0:
        return 0.0
    try:
        small, large = small_and_large_jump_masses(noise, radius=1 / CB)
    except UnsupportedDimension as e:
        logger.debug(f"No jump majorant: {e}")
        return None
    return CB**2 * small + large


def check_existence_conditions(sc: Scenario, t: float) -> ExistenceReport:
    """Numerical values of the two conditions under which an evolution system of measures exists

    Raises:
        DecayUnavailable when no exponential decay bound could be fitted below t
    """
    decay = require_decay(sc, t)
    start = truncation_point(sc, t, decay)
    triple = compute_triple(sc, start, t)

    trace = float(np.trace(triple.R))
    second_moment = float(triple.jumps.truncated_second_moment())
    majorant = _majorant_per_unit_time(sc.noise, decay, coefficient_bounds(sc, t))

    report = ExistenceReport(
        cond_i=Condition(holds=math.isfinite(trace), value=trace),
        cond_ii=Condition(holds=math.isfinite(second_moment), value=second_moment),
        majorant_per_unit_time=majorant,
        decay=decay,
        truncated_at=start,
    )
    logger.info(
        f"Existence conditions at t={t}: tr R = {trace:.10g}, jump integral = {second_moment:.10g}"
    )
    return report


def drift_limit_check(sc: Scenario, t: float) -> Condition:
    """Whether b_{s,t} has settled as s -> -inf: doubling the truncation window moves it by less than tail_tol"""
    triple = limit_triple(sc, t)
    doubled_start = t - 2 * (t - triple.truncated_at)
    doubled = compute_triple(sc, doubled_start, t)

    change = float(np.linalg.norm(doubled.b - triple.b))
    return Condition(holds=change < sc.numerics.tail_tol, value=change)
