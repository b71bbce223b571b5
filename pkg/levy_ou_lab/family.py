"""Evolution systems of measures

nu_t = [b_{-inf,t}, R_{-inf,t}, M_{-inf,t}] is the law of X_{-inf,0}(t). It satisfies, for s <= t,

    nu_s-hat(U(t,s)^T a) exp(i<a, integral_s^t U f> - integral_s^t eta(B^T U^T a)) = nu_t-hat(a)

or equivalently nu_t = p_{s,t}(0, .) * (nu_s o U(t,s)^{-1}). This module builds the family from limit triples,
checks both forms of the identity, and provides the closed forms of the Gaussian and Cauchy families.
"""

import logging
import math
from typing import Callable, NamedTuple, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from . import quadrature
from .coefficients import CoeffExpr
from .constants import DEFAULT_DECAY_HORIZON, DEFAULT_QUAD_STEP, DEFAULT_TAIL_TOL
from .density import GridDensity, invert_cf, two_sample_ks
from .evolution import LruCache
from .levy import UnsupportedDimension, UnsupportedNoise
from .ou_core import (
    ConditionsFailed,
    IDLaw,
    cf_solution,
    check_existence_conditions,
    compute_triple,
    drift_limit_check,
    limit_triple,
)
from .scenario import Scenario
from .simulate import monte_carlo

logger = logging.getLogger(__name__)

DEFAULT_QUANTILE = 0.99

# FFT window for densities without a closed form
DEFAULT_HALF_WIDTH = 50.0
DEFAULT_GRID_SIZE = 2**12

# Monte Carlo settings for quantiles of laws without a closed form
QUANTILE_RUNS = 10**4
QUANTILE_STEP = 0.02


# Laws nu_t kept per family. Each holds its propagator grid.
LAW_CACHE_SIZE = 8


class NotGaussian(ValueError):
    # Raised when a Gaussian closed form is requested for noise with jumps
    pass


class EvolutionFamily:
    """t -> nu_t for a scenario, with the most recently used laws shared between threads"""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self._laws = LruCache(LAW_CACHE_SIZE)

    def nu(self, t: float) -> IDLaw:
        t = float(t)
        law = self._laws.get(t)
        if law is None:
            law = limit_triple(self.scenario, t).law()
            self._laws.put(t, law)
        return law

    def cf(self, t: float, a):
        return self.nu(t).cf(a)

    def marginal_cf(self, t: float, component: int = 0) -> Callable:
        """a -> nu_t-hat(a e_k) for an array of scalars a, the characteristic function of one coordinate"""
        law = self.nu(t)

        def cf(a):
            a = np.asarray(a, dtype=float)
            points = np.zeros((a.size, law.dimension))
            points[:, component] = a.ravel()
            return np.reshape(law.cf(points), a.shape)

        return cf


def build_family(sc: Scenario, reference_time: float = 0.0) -> EvolutionFamily:
    """The evolution system of measures of a scenario

    Conditions are checked at reference_time: the fitted exponential decay of U, finiteness of
    sup tr R_{s,t} and of the jump integral, and convergence of b_{s,t} as s -> -inf.

    Raises:
        DecayUnavailable when U has no fitted exponential decay bound
        ConditionsFailed naming every condition that fails
    """
    report = check_existence_conditions(sc, reference_time)
    drift = drift_limit_check(sc, reference_time)

    failures = {
        # fmt: off
        f"(i) sup_s tr R_(s,t) is not finite: {report.cond_i.value}":
            not report.cond_i.holds,
        f"(ii) integral (1 ^ |U(t,r) B(r) y|^2) M(dy) dr is not finite: {report.cond_ii.value}":
            not report.cond_ii.holds,
        f"b_(s,t) has not converged as s -> -inf: doubling the window moves it by {drift.value:.3g}":
            not drift.holds,
        # fmt: on
    }
    failing = [failure for failure, present in failures.items() if present]
    if failing:
        raise ConditionsFailed(f"No evolution system of measures: {failing}")

    logger.info(
        f"Built evolution family: tr R = {report.cond_i.value:.10g}, "
        f"jump integral = {report.cond_ii.value:.10g}"
    )
    return EvolutionFamily(sc)


def verify_identity_cf(fam: EvolutionFamily, s: float, t: float, a_grid) -> float:
    """max over a of |nu_s-hat(U(t,s)^T a) p_{s,t}(0,.)-hat(a) - nu_t-hat(a)|"""
    sc = fam.scenario
    points = np.atleast_2d(np.asarray(a_grid, dtype=float))

    # Rows of points @ U are (U^T a)^T
    pushed = fam.cf(s, points @ sc.operator.evaluate(t, s))
    transition = cf_solution(sc, s, t, np.zeros(sc.dimension), points)
    error = float(np.max(np.abs(pushed * transition - fam.cf(t, points))))

    logger.debug(f"Identity error for s={s}, t={t}: {error:.3g}")
    return error


def verify_identity_convolution(
    fam: EvolutionFamily, s: float, t: float, n_samples: int, rng: np.random.Generator
) -> float:
    """Two-sample KS distance between U(t,s) Y + X_{s,0}(t), Y ~ nu_s, and direct samples of nu_t

    Raises:
        UnsupportedDimension unless d = 1
        UnsupportedNoise for laws without a closed-form sampler
    """
    sc = fam.scenario
    if sc.dimension != 1:
        raise UnsupportedDimension(
            f"Convolution identity is checked empirically in dimension 1 only, got {sc.dimension}"
        )

    U = sc.operator.evaluate(t, s)[0, 0]
    transition = compute_triple(sc, s, t).law()
    pushed = U * fam.nu(s).sample(n_samples, rng)
    convolved = pushed + transition.sample(n_samples, rng)
    direct = fam.nu(t).sample(n_samples, rng)

    return two_sample_ks(convolved, direct, atol=sc.numerics.identity_tol)


def gaussian_family_closed_form(sc: Scenario, t: float) -> IDLaw:
    """nu_t = N(b_{-inf,t}, R_{-inf,t}) for noise without jumps

    Raises:
        NotGaussian when the noise has jumps
    """
    if sc.noise.jumps is not None:
        raise NotGaussian(f"Noise has jumps {sc.noise.jumps!r}; nu_t is not Gaussian")
    return limit_triple(sc, t).law()


class CauchyParameters(NamedTuple):
    # nu_t is Cauchy(location, scale)
    location: float
    scale: float


def cauchy_family_parameters(
    lam: CoeffExpr,
    mu: CoeffExpr,
    sig: CoeffExpr,
    t: float,
    step: float = DEFAULT_QUAD_STEP,
    tail_tol: float = DEFAULT_TAIL_TOL,
    horizon: float = DEFAULT_DECAY_HORIZON,
) -> CauchyParameters:
    """Location and scale of nu_t for dX = lambda(t) (mu(t) - X) dt + sigma(t) dZ with Cauchy noise Z

        scale    = integral_{-inf}^t exp(-integral_r^t lambda) sigma(r) dr
        location = integral_{-inf}^t exp(-integral_r^t lambda) lambda(r) mu(r) dr

    The inner integral is a cumulative trapezoid computed once per t. The outer integrals are truncated where
    the tail, bounded using the smallest lambda on [t - horizon, t], drops below tail_tol.

    Raises:
        ValueError when lambda is not positive or sigma is negative
    """
    probe = np.linspace(t - horizon, t, int(math.ceil(horizon / step)) + 1)
    smallest_rate = float(np.min(lam(probe)))
    if smallest_rate <= 0:
        raise ValueError(
            f"lambda must stay positive, got min {smallest_rate:.6g} on [{t - horizon}, {t}]"
        )

    drift_bound = np.max(np.abs(lam(probe) * mu(probe)))
    largest = float(max(np.max(np.abs(sig(probe))), drift_bound))
    length = step
    if largest > smallest_rate * tail_tol:
        decay_length = math.log(largest / (smallest_rate * tail_tol)) / smallest_rate
        length = max(step, decay_length)

    n_intervals = int(math.ceil(length / step))
    r = np.linspace(t - n_intervals * step, t, n_intervals + 1)
    rates = lam(r)
    scales = sig(r)
    if np.min(rates) <= 0 or np.min(scales) < 0:
        raise ValueError(
            f"Need lambda > 0 and sigma >= 0 on [{r[0]:.6g}, {t}], got min lambda {np.min(rates):.6g}, "
            f"min sigma {np.min(scales):.6g}"
        )

    weights = np.exp(-quadrature.integral_to_end(rates, r))
    return CauchyParameters(
        location=float(quadrature.integrate(weights * rates * mu(r), r)),
        scale=float(quadrature.integrate(weights * scales, r)),
    )


def cauchy_family_density(
    lam: CoeffExpr, mu: CoeffExpr, sig: CoeffExpr, t: float, y, **numerics
):
    """Density of nu_t, a / (pi ((y - b)^2 + a^2)) with location b and scale a from cauchy_family_parameters"""
    location, scale = cauchy_family_parameters(lam, mu, sig, t, **numerics)
    return stats.cauchy.pdf(y, loc=location, scale=scale)


def stable_family_cf(sc: Scenario, t: float, a):
    """nu_t-hat(a) = exp(i b a - sigma^alpha integral_{-inf}^t |U(t,r) B(r)|^alpha dr |a|^alpha) for 1-d stable noise

    Args:
        a: scalar or array of scalars

    Raises:
        UnsupportedNoise unless the noise is symmetric stable
    """
    triple = limit_triple(sc, t)
    noise = triple.jumps.stable_noise
    scale_power = triple.jumps.stable_scale_power()

    a = np.asarray(a, dtype=float)
    spread = noise.sigma**noise.alpha * scale_power
    return np.exp(1j * a * triple.b[0] - spread * np.abs(a) ** noise.alpha)


def _folded_quantile(
    location: float, scale: float, q: float, kind: str, alpha: float
) -> float:
    if scale == 0:
        return abs(location)
    if kind == "gaussian" or alpha == 2:
        spread = scale if kind == "gaussian" else scale * math.sqrt(2)
        return float(stats.foldnorm.ppf(q, abs(location) / spread, scale=spread))
    return float(stats.foldcauchy.ppf(q, abs(location) / scale, scale=scale))


def pushforward_quantile_radius(
    fam: EvolutionFamily, s: float, t: float, q: float = DEFAULT_QUANTILE
) -> float:
    """q-quantile of |U(t,s) Y| with Y ~ nu_s

    Closed form for one-dimensional Gaussian, Cauchy and point-mass laws; otherwise a Monte Carlo estimate from
    paths started at the truncation point of nu_s.
    """
    sc = fam.scenario
    law = fam.nu(s)
    U = sc.operator.evaluate(t, s)

    closed_form = sc.dimension == 1 and (
        law.kind in ("gaussian", "point_mass")
        or (law.kind == "stable" and law.jumps.stable_noise.alpha in (1, 2))
    )
    if closed_form:
        u = float(U[0, 0])
        alpha = law.jumps.stable_noise.alpha if law.kind == "stable" else 2.0
        return _folded_quantile(
            u * law.location, abs(u) * law.scale, q, law.kind, alpha
        )

    samples = _sample_family_member(fam, s)
    radii = np.linalg.norm(samples @ U.T, axis=1)
    return float(np.quantile(radii, q))


def _sample_family_member(fam: EvolutionFamily, s: float) -> np.ndarray:
    sc = fam.scenario
    start = float(limit_triple(sc, s).truncated_at)
    n_steps = max(1, int(math.ceil((s - start) / QUANTILE_STEP)))
    logger.info(
        f"No closed form for nu_{s}; sampling {QUANTILE_RUNS} paths from s*={start:.6g}"
    )
    return monte_carlo(
        sc, start, s, np.zeros(sc.dimension), QUANTILE_RUNS, n_steps, "exact"
    ).samples


def tightness_report(
    fam: EvolutionFamily, t_grid: Sequence[float], q: float = DEFAULT_QUANTILE
) -> pd.DataFrame:
    """q-quantile radius of each nu_t across a grid of times

    Bounded radii are the empirical face of uniform tightness of the family; nothing here proves it.
    """
    radii = [pushforward_quantile_radius(fam, t, t, q) for t in t_grid]
    report = pd.DataFrame({"t": list(t_grid), "quantile_radius": radii})
    logger.info(
        f"Largest {q} quantile radius over {len(radii)} times: {max(radii):.6g}"
    )
    return report


def periodicity_error(fam: EvolutionFamily, t: float, period: float, a_grid) -> float:
    """max over a of |nu_t-hat(a) - nu_{t+period}-hat(a)|"""
    points = np.atleast_2d(np.asarray(a_grid, dtype=float))
    return float(np.max(np.abs(fam.cf(t, points) - fam.cf(t + period, points))))


def family_density(
    fam: EvolutionFamily,
    t: float,
    y,
    component: int = 0,
    half_width: float = DEFAULT_HALF_WIDTH,
    grid_size: int = DEFAULT_GRID_SIZE,
) -> np.ndarray:
    """Density of one coordinate of nu_t at the points y

    One-dimensional Gaussian and Cauchy laws use their closed forms; every other law is inverted from its
    marginal characteristic function on [-half_width, half_width) and read off by linear interpolation, with
    density 0 outside the window.

    Raises:
        UnsupportedNoise for a one-dimensional point mass, which has no density
        MassDeficit, AliasingDetected when the FFT window doesn't fit the law
    """
    law = fam.nu(t)
    y = np.asarray(y, dtype=float)
    if law.dimension == 1:
        if law.kind == "point_mass":
            raise UnsupportedNoise(
                f"nu_{t} is a point mass at {law.location:.10g} and has no density"
            )
        if law.kind == "gaussian":
            return stats.norm.pdf(y, loc=law.location, scale=law.scale)
        alpha = law.jumps.stable_noise.alpha if law.kind == "stable" else None
        if alpha == 1:
            return stats.cauchy.pdf(y, loc=law.location, scale=law.scale)
        if alpha == 2:
            spread = law.scale * math.sqrt(2)
            return stats.norm.pdf(y, loc=law.location, scale=spread)

    inverted = family_grid_density(fam, t, component, half_width, grid_size)
    return np.interp(y, inverted.grid, inverted.values, left=0.0, right=0.0)


def family_grid_density(
    fam: EvolutionFamily,
    t: float,
    component: int = 0,
    half_width: float = DEFAULT_HALF_WIDTH,
    grid_size: int = DEFAULT_GRID_SIZE,
) -> GridDensity:
    """Density of one coordinate of nu_t on the FFT grid of [-half_width, half_width)"""
    return invert_cf(fam.marginal_cf(t, component), half_width, grid_size)
