"""Monte Carlo simulation of dX(t) = (A(t) X(t-) + f(t)) dt + B(t) dZ(t)

Two schemes on the grid s = r_0 < ... < r_n = t:
 * exact: X(t) = U(t,s)x + integral_s^t U(t,r) f(r) dr + sum_j U(t,r_j) B(r_j) (Z(r_{j+1}) - Z(r_j)), the
   stochastic convolution as a left-endpoint Riemann sum
 * euler: X_{k+1} = X_k + (A(r_k) X_k + f(r_k)) dr + B(r_k) (Z(r_{k+1}) - Z(r_k))

Both draw the noise increments in the same order from the same streams, so for a given seed the two schemes
see the same path of Z. Increments over steps starting before time 0 come from the independent stream of the
noise's negative-time copy.
"""

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterator, List, NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd

from .constants import THREADS_ENVIRONMENT_VARIABLE
from .levy import LevyModel, sample_increment_and_jumps
from .quadrature import integrate
from .scenario import Scenario
from .streams import make_stream

logger = logging.getLogger(__name__)

SCHEMES = ("exact", "euler")

# Runs per random stream; block k always draws from stream k
BLOCK_SIZE = 1024

DEFAULT_MAX_WORKERS = 4

# Stream indices of plotted paths start here, clear of the Monte Carlo blocks
PATH_STREAM_BASE = 2**32


class PathSample(NamedTuple):
    times: np.ndarray
    # (len(times), d), states[0] is the starting point
    states: np.ndarray
    scheme: str
    seed: int
    jump_count: int

    def as_dataframe(self) -> pd.DataFrame:
        columns = {"time": self.times}
        for i in range(self.states.shape[1]):
            columns[f"x_{i + 1}"] = self.states[:, i]
        return pd.DataFrame(columns)


class MonteCarloResult(NamedTuple):
    # (n_runs, d) terminal states, in run order
    samples: np.ndarray
    jump_counts: np.ndarray
    scheme: str
    seed: int


def _time_grid(s: float, t: float, n_steps: int) -> np.ndarray:
    if s > t:
        raise ValueError(f"Simulation needs s <= t, got s={s}, t={t}")
    if n_steps < 1:
        raise ValueError(f"n_steps must be at least 1, got {n_steps}")
    return np.linspace(s, t, n_steps + 1)


def _increments(
    noise: LevyModel,
    r: np.ndarray,
    n_runs: int,
    rng: np.random.Generator,
    negative_time_rng: np.random.Generator,
) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    for start, dt in zip(r[:-1], np.diff(r)):
        stream = negative_time_rng if start < 0 else rng
        yield sample_increment_and_jumps(noise, dt, stream, size=n_runs)


class _ExactPlan(NamedTuple):
    r: np.ndarray
    # U(t,s)x + integral_s^t U(t,r) f(r) dr
    offset: np.ndarray
    # U(t, r_j) B(r_j) at the left endpoints
    gains: np.ndarray


class _EulerPlan(NamedTuple):
    r: np.ndarray
    x: np.ndarray
    A: np.ndarray
    B: np.ndarray
    f: np.ndarray


def _exact_plan(sc: Scenario, s: float, t: float, x, n_steps: int) -> _ExactPlan:
    r = _time_grid(s, t, n_steps)
    x = np.asarray(x, dtype=float)
    if s == t:
        return _ExactPlan(r, x.copy(), np.zeros((0, sc.dimension, sc.dimension)))

    grid = sc.operator.propagators_to(t, s, (t - s) / n_steps)
    forcing = np.einsum("jkl,jl->jk", grid.U, sc.f.evaluate(grid.r))
    offset = grid.U[0] @ x + integrate(forcing, grid.r)
    gains = grid.U[:-1] @ sc.B.evaluate(grid.r[:-1])
    return _ExactPlan(grid.r, offset, gains)


def _euler_plan(sc: Scenario, s: float, t: float, x, n_steps: int) -> _EulerPlan:
    r = _time_grid(s, t, n_steps)
    x = np.asarray(x, dtype=float)
    if s == t:
        d = sc.dimension
        no_steps = np.zeros((0, d, d))
        return _EulerPlan(r[:1], x, no_steps, no_steps, np.zeros((0, d)))

    left = r[:-1]
    return _EulerPlan(
        r, x, sc.A.evaluate(left), sc.B.evaluate(left), sc.f.evaluate(left)
    )


def _run_exact(
    plan: _ExactPlan,
    noise: LevyModel,
    n_runs: int,
    rng: np.random.Generator,
    negative_time_rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    terminal = np.tile(plan.offset, (n_runs, 1))
    jump_counts = np.zeros(n_runs, dtype=int)
    draws = _increments(noise, plan.r, n_runs, rng, negative_time_rng)
    for gain, (increment, counts) in zip(plan.gains, draws):
        terminal += increment @ gain.T
        jump_counts += counts
    return terminal, jump_counts


def _run_euler(
    plan: _EulerPlan,
    noise: LevyModel,
    n_runs: int,
    rng: np.random.Generator,
    negative_time_rng: np.random.Generator,
    keep_path: bool = False,
) -> Tuple[np.ndarray, np.ndarray]:
    """Terminal states (n_runs, d), or whole paths (n_steps + 1, n_runs, d) when keep_path"""
    state = np.tile(plan.x, (n_runs, 1))
    path = [state]
    jump_counts = np.zeros(n_runs, dtype=int)
    draws = _increments(noise, plan.r, n_runs, rng, negative_time_rng)
    steps = zip(plan.A, plan.B, plan.f, np.diff(plan.r), draws)
    for A, B, f, dt, (increment, counts) in steps:
        state = state + (state @ A.T + f) * dt + increment @ B.T
        jump_counts += counts
        if keep_path:
            path.append(state)
    return (np.stack(path) if keep_path else state), jump_counts


def simulate_exact(
    sc: Scenario,
    s: float,
    t: float,
    x,
    n_steps: int,
    rng: np.random.Generator,
    negative_time_rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """One terminal state X_{s,x}(t) of the exact-representation scheme"""
    plan = _exact_plan(sc, s, t, x, n_steps)
    terminal, _ = _run_exact(plan, sc.noise, 1, rng, negative_time_rng or rng)
    return terminal[0]


def simulate_euler(
    sc: Scenario,
    s: float,
    t: float,
    x,
    n_steps: int,
    rng: np.random.Generator,
    negative_time_rng: Optional[np.random.Generator] = None,
    seed: int = 0,
) -> PathSample:
    """One Euler-Maruyama path of X_{s,x} on [s, t], with its total number of compound Poisson jumps

    The drift is evaluated at the state before each step, i.e. at X(r-).
    """
    plan = _euler_plan(sc, s, t, x, n_steps)
    paths, jump_counts = _run_euler(
        plan, sc.noise, 1, rng, negative_time_rng or rng, keep_path=True
    )
    return PathSample(
        times=plan.r,
        states=paths[:, 0, :],
        scheme="euler",
        seed=seed,
        jump_count=int(jump_counts[0]),
    )


def sample_paths(
    sc: Scenario,
    s: float,
    t: float,
    x,
    n_steps: int,
    count: int,
    seed: Optional[int] = None,
) -> List[PathSample]:
    """count independent Euler paths, path k drawn from stream PATH_STREAM_BASE + k of the seed"""
    seed = sc.seed if seed is None else seed
    return [
        simulate_euler(
            sc,
            s,
            t,
            x,
            n_steps,
            make_stream(seed, PATH_STREAM_BASE + k),
            make_stream(seed, PATH_STREAM_BASE + k, negative_time=True),
            seed=seed,
        )
        for k in range(count)
    ]


def empirical_cf(samples, a):
    """(1/N) sum_k exp(i<a, X_k>), for one frequency vector or an (m, d) stack of them"""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, np.newaxis]
    if len(samples) == 0:
        raise ValueError("Empirical characteristic function needs at least one sample")

    a = np.asarray(a, dtype=float)
    points = a.reshape(-1, samples.shape[1])
    values = np.mean(np.exp(1j * samples @ points.T), axis=0)
    return complex(values[0]) if a.ndim <= 1 else values


def get_worker_count(workers: Optional[int] = None) -> int:
    """Worker threads for Monte Carlo: explicit argument, else LEVY_OU_THREADS, else a small default"""
    if workers is None:
        configured = os.environ.get(THREADS_ENVIRONMENT_VARIABLE)
        if configured is None:
            return min(DEFAULT_MAX_WORKERS, os.cpu_count() or 1)
        try:
            workers = int(configured)
        except ValueError:
            raise ValueError(
                f"{THREADS_ENVIRONMENT_VARIABLE} must be an integer, got {configured!r}"
            )
    if workers < 1:
        raise ValueError(f"Worker count must be at least 1, got {workers}")
    return workers


def monte_carlo(
    sc: Scenario,
    s: float,
    t: float,
    x,
    n_runs: int,
    n_steps: int,
    scheme: str = "exact",
    seed: Optional[int] = None,
    workers: Optional[int] = None,
) -> MonteCarloResult:
    """n_runs independent terminal states X_{s,x}(t)

    Runs are split into blocks of BLOCK_SIZE; block k draws from stream k of the seed. Blocks are spread over a
    thread pool and merged in block order, so the samples are bit-identical for any number of workers.

    Args:
        sc: scenario
        s, t: start and end times, s <= t
        x: starting point
        n_runs: number of independent runs
        n_steps: time steps per run
        scheme: "exact" or "euler"
        seed: overrides the scenario seed
        workers: thread count, defaults to LEVY_OU_THREADS
    """
    if scheme not in SCHEMES:
        raise ValueError(f"Unknown scheme {scheme!r}, expected one of {SCHEMES}")
    if n_runs < 1:
        raise ValueError(f"n_runs must be at least 1, got {n_runs}")

    seed = sc.seed if seed is None else seed
    plan = (_exact_plan if scheme == "exact" else _euler_plan)(sc, s, t, x, n_steps)
    run: Callable = _run_exact if scheme == "exact" else _run_euler

    def run_block(index: int) -> Tuple[np.ndarray, np.ndarray]:
        size = min(BLOCK_SIZE, n_runs - index * BLOCK_SIZE)
        return run(
            plan,
            sc.noise,
            size,
            make_stream(seed, index),
            make_stream(seed, index, negative_time=True),
        )

    n_blocks = math.ceil(n_runs / BLOCK_SIZE)
    n_workers = min(get_worker_count(workers), n_blocks)
    logger.info(
        f"Simulating {n_runs} {scheme} runs of {n_steps} steps on [{s}, {t}] "
        f"in {n_blocks} blocks over {n_workers} threads"
    )
    with ThreadPoolExecutor(max_workers=n_workers) as executor:
        blocks = list(executor.map(run_block, range(n_blocks)))

    return MonteCarloResult(
        samples=np.concatenate([samples for samples, _ in blocks]),
        jump_counts=np.concatenate([counts for _, counts in blocks]),
        scheme=scheme,
        seed=seed,
    )


def mehler_expectation(
    sc: Scenario,
    s: float,
    t: float,
    x,
    g: Callable[[np.ndarray], np.ndarray],
    n_runs: int,
    n_steps: int,
    seed: Optional[int] = None,
) -> float:
    """Monte Carlo estimate of the transition operator P_{s,t} g(x) = E g(X_{s,x}(t))

    g maps an (n, d) array of states to n values.
    """
    result = monte_carlo(sc, s, t, x, n_runs, n_steps, "exact", seed)
    return float(np.mean(g(result.samples)))
