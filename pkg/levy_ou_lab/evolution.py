"""The evolution operator U(t, s) of the linear system dU(t,s)/dt = A(t) U(t,s), U(s,s) = I

U replaces the matrix exponential when A depends on time. Everything downstream (the law of the solution, the
evolution family, the Monte Carlo schemes) is written in terms of U(t, r) evaluated on quadrature grids, so
this module offers two access paths:
 * evaluate(t, s): forward fixed-step RK4 from s to t, for single matrices
 * propagators_to(t, s, spacing): backward RK4 in r of dU(t,r)/dr = -U(t,r) A(r), giving U(t, r_j) on a
   whole grid s = r_0 < ... < r_n = t at once

A classical RK4 step of a linear system is itself a matrix: y_{k+1} = P_k y_k. The step matrices are built
for all steps at once from vectorized evaluations of A, and chained with a log-depth product.
Results are cached under a lock, keyed on the requested times quantized to a millionth of the step.
"""

import logging
import math
import threading
from collections import OrderedDict
from typing import Any, Hashable, List, NamedTuple, Optional, Tuple

import numpy as np

from .coefficients import MatrixFn

logger = logging.getLogger(__name__)

_KEY_RESOLUTION = 1e6

# Entries kept by the operator caches. A propagator grid holds about horizon / quad_step d x d matrices.
MATRIX_CACHE_SIZE = 4096
GRID_CACHE_SIZE = 8

# Relative slack when checking that the fitted decay bound majorizes every sample
_MAJORANT_SLACK = 1e-9


class FlowOrderError(ValueError):
    # Raised when U(t, s) is requested with s > t
    pass


class DecayEstimate(NamedTuple):
    C: float
    epsilon: float
    window: Tuple[float, float]
    valid: bool


class PropagatorGrid(NamedTuple):
    # r ascending from s to t, and U(t, r_j) stacked along the first axis
    r: np.ndarray
    U: np.ndarray


def operator_norm(matrix: np.ndarray) -> float:
    """Largest singular value"""
    return float(np.linalg.norm(matrix, ord=2))


def _step_boundaries(start: float, stop: float, step: float) -> np.ndarray:
    """start, start + step, ... landing exactly on stop (the last step is shortened)"""
    length = abs(stop - start)
    direction = 1.0 if stop >= start else -1.0
    full_steps = int(math.floor(length / step * (1 + 1e-12)))
    boundaries = start + direction * step * np.arange(full_steps + 1)
    if length - full_steps * step > step * 1e-9:
        boundaries = np.append(boundaries, stop)
    else:
        boundaries[-1] = stop
    return boundaries


def _rk4_step_matrices(
    M_start: np.ndarray, M_mid: np.ndarray, M_end: np.ndarray, h: np.ndarray
) -> np.ndarray:
    """P_k such that one RK4 step of y' = M(r) y is y_{k+1} = P_k y_k

    Expanding k1..k4 for a linear right-hand side gives
        P = I + h/6 [(M0 + 4 Mm + M1) + h (Mm M0 + Mm Mm + M1 Mm)
                     + h^2/2 (Mm Mm M0 + M1 Mm Mm) + h^3/4 M1 Mm Mm M0]
    """
    h = h[:, np.newaxis, np.newaxis]
    mid_squared = M_mid @ M_mid
    end_mid_mid = M_end @ mid_squared
    total = (
        M_start
        + 4 * M_mid
        + M_end
        + h * (M_mid @ M_start + mid_squared + M_end @ M_mid)
        + h**2 / 2 * (mid_squared @ M_start + end_mid_mid)
        + h**3 / 4 * (end_mid_mid @ M_start)
    )
    return np.eye(M_start.shape[-1]) + h / 6 * total


def _prefix_products(stack: np.ndarray, later_on_left: bool) -> np.ndarray:
    """Running products of a stack of matrices, by recursive doubling

    later_on_left gives P_k ... P_1 P_0 at position k, otherwise P_0 P_1 ... P_k.
    """
    result = stack.copy()
    shift = 1
    while shift < len(result):
        if later_on_left:
            result[shift:] = result[shift:] @ result[:-shift]
        else:
            result[shift:] = result[:-shift] @ result[shift:]
        shift *= 2
    return result


def _ordered_product(stack: np.ndarray) -> np.ndarray:
    """P_{n-1} ... P_1 P_0 by pairwise reduction"""
    while len(stack) > 1:
        if len(stack) % 2:
            stack = np.concatenate([stack, np.eye(stack.shape[-1])[np.newaxis]])
        stack = stack[1::2] @ stack[0::2]
    return stack[0]


class LruCache:
    """Mapping that keeps only the maxsize most recently used entries, safe to share between threads"""

    def __init__(self, maxsize: int):
        if maxsize < 1:
            raise ValueError(f"Cache size must be positive, got {maxsize}")
        self.maxsize = maxsize
        self._entries: "OrderedDict[Hashable, Any]" = OrderedDict()
        self._lock = threading.Lock()

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def get(self, key: Hashable) -> Optional[Any]:
        with self._lock:
            value = self._entries.get(key)
            if value is not None:
                self._entries.move_to_end(key)
            return value

    def put(self, key: Hashable, value: Any) -> None:
        with self._lock:
            self._entries[key] = value
            self._entries.move_to_end(key)
            while len(self._entries) > self.maxsize:
                self._entries.popitem(last=False)


class EvolutionOperator:
    def __init__(self, A: MatrixFn, step: float):
        if step <= 0:
            raise ValueError(f"ODE step must be positive, got {step}")
        self.A = A
        self.step = step
        self.dimension = A.dimension
        self._identity = np.eye(self.dimension)
        self._cache = LruCache(MATRIX_CACHE_SIZE)
        self._grid_cache = LruCache(GRID_CACHE_SIZE)

    def _key(self, time: float) -> int:
        return int(round(time / self.step * _KEY_RESOLUTION))

    def _forward_step_matrices(self, boundaries: np.ndarray) -> np.ndarray:
        """RK4 step matrices of dU/dt = A(t) U between consecutive boundaries"""
        midpoints = (boundaries[:-1] + boundaries[1:]) / 2
        A_boundaries = self.A.evaluate(boundaries)
        return _rk4_step_matrices(
            A_boundaries[:-1],
            self.A.evaluate(midpoints),
            A_boundaries[1:],
            np.diff(boundaries),
        )

    def _integrate_forward(self, t: float, s: float) -> np.ndarray:
        boundaries = _step_boundaries(s, t, self.step)
        return _ordered_product(self._forward_step_matrices(boundaries))

    def evaluate(self, t: float, s: float) -> np.ndarray:
        """U(t, s) by classical RK4 with the configured fixed step

        Args:
            t: end time
            s: start time, s <= t

        Returns:
            d x d matrix. U(s, s) is the identity exactly.

        Raises:
            FlowOrderError if s > t
        """
        if s > t:
            raise FlowOrderError(f"U(t, s) needs s <= t, got s={s}, t={t}")
        if s == t:
            return self._identity.copy()

        key = (self._key(s), self._key(t))
        cached = self._cache.get(key)
        if cached is not None:
            return cached.copy()

        U = self._integrate_forward(t, s)
        self._cache.put(key, U)
        return U.copy()

    def propagators_to(self, t: float, s: float, spacing: float) -> PropagatorGrid:
        """U(t, r) on the grid r_j = t - j * spacing (the point s closing the grid), returned ascending in r

        The grid is integrated with RK4 on the backward equation dU(t,r)/dr = -U(t,r) A(r), with the ODE step
        refined so that it never exceeds the configured step.
        """
        if s > t:
            raise FlowOrderError(f"U(t, r) needs r <= t, got s={s}, t={t}")

        key = (self._key(t), self._key(s), self._key(spacing))
        cached = self._grid_cache.get(key)
        if cached is not None:
            logger.debug(f"propagator grid cache hit for t={t}, s={s}")
            return cached

        if s == t:
            grid = PropagatorGrid(np.array([t]), self._identity[np.newaxis].copy())
        else:
            grid = self._sweep_backward(t, s, spacing)

        self._grid_cache.put(key, grid)
        return grid

    def _sweep_backward(self, t: float, s: float, spacing: float) -> PropagatorGrid:
        substeps = max(1, int(math.ceil(spacing / self.step - 1e-9)))
        grid_descending = _step_boundaries(t, s, spacing)

        # Substep boundaries between consecutive grid points
        fractions = np.arange(substeps) / substeps
        starts = grid_descending[:-1, np.newaxis]
        widths = np.diff(grid_descending)[:, np.newaxis]
        boundaries = np.append((starts + fractions * widths).ravel(), s)

        logger.debug(
            f"backward sweep t={t} -> s={s}: {len(grid_descending)} grid points, {substeps} substeps each"
        )

        # V(r) = U(t, r) solves V' = -V A, i.e. (V^T)' = -A^T V^T
        midpoints = (boundaries[:-1] + boundaries[1:]) / 2
        minus_A_transposed = -np.swapaxes(self.A.evaluate(boundaries), 1, 2)
        transposed_steps = _rk4_step_matrices(
            minus_A_transposed[:-1],
            -np.swapaxes(self.A.evaluate(midpoints), 1, 2),
            minus_A_transposed[1:],
            np.diff(boundaries),
        )
        V_transposed = _prefix_products(transposed_steps, later_on_left=True)
        on_grid = np.swapaxes(V_transposed[substeps - 1 :: substeps], 1, 2)
        stack = np.concatenate([self._identity[np.newaxis], on_grid])

        return PropagatorGrid(grid_descending[::-1].copy(), stack[::-1].copy())

    def segment_propagators(self, times: np.ndarray) -> np.ndarray:
        """U(tau_{k+1}, tau_k) for increasing sample times tau_k"""
        return np.array(
            [
                self.evaluate_increment(later, earlier)
                for earlier, later in zip(times[:-1], times[1:])
            ]
        )

    def evaluate_increment(self, t: float, s: float) -> np.ndarray:
        """Uncached U(t, s), for one-off segments that would only pollute the cache"""
        if s > t:
            raise FlowOrderError(f"U(t, s) needs s <= t, got s={s}, t={t}")
        return self._identity.copy() if s == t else self._integrate_forward(t, s)


def _pair_log_norms(segments: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """log ||U(tau_j, tau_i)|| for every pair i < j, from the segments U(tau_{k+1}, tau_k)

    Each pair operator is a forward product of segments, renormalized after every factor and its log norm
    accumulated, so strongly contracting operators don't underflow.
    """
    n_samples = len(segments) + 1
    later: List[int] = []
    earlier: List[int] = []
    log_norms: List[float] = []
    for i in range(n_samples - 1):
        product = np.eye(segments.shape[-1])
        log_norm = 0.0
        for j in range(i + 1, n_samples):
            product = segments[j - 1] @ product
            norm = operator_norm(product)
            log_norm += math.log(norm) if norm > 0 else -math.inf
            later.append(j)
            earlier.append(i)
            log_norms.append(log_norm)
            if norm > 0:
                product = product / norm
    return np.array(later), np.array(earlier), np.array(log_norms)


def estimate_decay(
    operator: EvolutionOperator, t_min: float, t_max: float, n_samples: int
) -> DecayEstimate:
    """Fit constants C, epsilon with ||U(t,s)|| <= C exp(-epsilon (t - s)) on sampled pairs in a window

    This is a sampling heuristic, not a certificate: log ||U(t,s)|| is fitted by least squares against t - s
    over all pairs of n_samples equally spaced times, then C is raised until the bound majorizes every sample.

    Args:
        operator: EvolutionOperator for A(t)
        t_min, t_max: sampling window, t_min < t_max
        n_samples: number of sample times, at least 10

    Returns:
        DecayEstimate. valid is False when the fitted rate is not positive or the bound fails on a sample.
    """
    if not t_min < t_max:
        raise ValueError(f"Decay window needs t_min < t_max, got [{t_min}, {t_max}]")
    if n_samples < 10:
        raise ValueError(f"Decay estimate needs at least 10 samples, got {n_samples}")

    times = np.linspace(t_min, t_max, n_samples)
    later, earlier, log_norms = _pair_log_norms(operator.segment_propagators(times))
    lags = times[later] - times[earlier]

    window = (float(t_min), float(t_max))
    if not np.all(np.isfinite(log_norms)):
        logger.info(f"Decay estimate on {window}: degenerate norms, no decay bound")
        return DecayEstimate(C=math.inf, epsilon=0.0, window=window, valid=False)

    slope, intercept = np.polyfit(lags, log_norms, 1)
    epsilon = float(-slope)
    if epsilon <= 0:
        logger.info(
            f"Decay estimate on {window}: fitted rate {epsilon:.6g} is not positive, no decay bound"
        )
        return DecayEstimate(
            C=float(np.exp(intercept)), epsilon=epsilon, window=window, valid=False
        )

    log_C = max(0.0, intercept, np.max(log_norms + epsilon * lags))
    C = float(np.exp(log_C))
    majorizes = bool(
        np.all(log_norms <= log_C - epsilon * lags + math.log1p(_MAJORANT_SLACK))
    )

    logger.info(
        f"Decay estimate on {window}: C={C:.6g}, epsilon={epsilon:.6g}, majorizes={majorizes}"
    )
    return DecayEstimate(C=C, epsilon=epsilon, window=window, valid=majorizes)
