import logging
import math
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .family import (
    EvolutionFamily,
    build_family,
    periodicity_error,
    pushforward_quantile_radius,
    verify_identity_cf,
    verify_identity_convolution,
)
from .levy import UnsupportedDimension, UnsupportedNoise
from .ou_core import ConditionsFailed, DecayUnavailable, check_existence_conditions
from .scenario import Scenario
from .streams import make_stream


logger = logging.getLogger(__name__)

# Two-sample KS distances beyond this multiple of sqrt(2/n) fail, about the 0.1% level
KS_CRITICAL_FACTOR = 1.95


class VerificationAbort(Exception):
    # Raised when one or more verification checks failed
    pass


class IdentityViolation(ValueError):
    # Raised when an identity of the evolution family is off by more than its tolerance
    pass


class VerificationReport(NamedTuple):
    report: Dict
    failures: List[Exception]


def _get_and_log_any_exceptions(
    title, check_function, expected_exceptions
) -> List[Exception]:
    try:
        check_function()
    except expected_exceptions as e:
        logger.exception(f"{title} check failed")
        return [e]
    return []


def ks_critical_value(n_samples: int) -> float:
    return KS_CRITICAL_FACTOR * math.sqrt(2 / n_samples)


def _check_existence(sc: Scenario, report: Dict) -> None:
    existence = check_existence_conditions(sc, 0.0)
    decay = existence.decay
    report.update(
        {
            "cond_i": existence.cond_i.value,
            "cond_ii": existence.cond_ii.value,
            "majorant_per_unit_time": existence.majorant_per_unit_time,
            "truncated_at": existence.truncated_at,
            "decay": {
                "C": decay.C,
                "eps": decay.epsilon,
                "valid": decay.valid,
                "window": list(decay.window),
            },
        }
    )


def _check_cf_identity(
    fam: EvolutionFamily, s: float, t: float, a_grid, entry: Dict
) -> None:
    sc = fam.scenario
    points = np.reshape(np.asarray(a_grid, dtype=float), (-1, sc.dimension))
    error = verify_identity_cf(fam, s, t, points)
    entry["cf_error"] = error
    if error > sc.numerics.identity_tol:
        raise IdentityViolation(
            f"Characteristic function identity off by {error:.3g} for s={s}, t={t} "
            f"(tolerance {sc.numerics.identity_tol})"
        )


def _check_convolution_identity(
    fam: EvolutionFamily, s: float, t: float, n_samples: int, index: int, entry: Dict
) -> None:
    try:
        distance = verify_identity_convolution(
            fam, s, t, n_samples, make_stream(fam.scenario.seed, index)
        )
    except (UnsupportedDimension, UnsupportedNoise) as e:
        logger.info(f"Skipping the convolution identity for s={s}, t={t}: {e}")
        return
    entry["ks_distance"] = distance
    critical = ks_critical_value(n_samples)
    if distance > critical:
        raise IdentityViolation(
            f"Convolution identity KS distance {distance:.3g} exceeds {critical:.3g} "
            f"for s={s}, t={t}"
        )


def _check_periodicity(
    fam: EvolutionFamily, t: float, period: float, a_grid, entry: Dict
) -> None:
    sc = fam.scenario
    points = np.reshape(np.asarray(a_grid, dtype=float), (-1, sc.dimension))
    error = periodicity_error(fam, t, period, points)
    entry["periodicity_error"] = error
    if error > sc.numerics.identity_tol:
        raise IdentityViolation(
            f"nu_{t} and nu_{t + period} differ by {error:.3g} (tolerance {sc.numerics.identity_tol})"
        )


def _largest(entries: List[Dict], key: str) -> Optional[float]:
    values = [entry[key] for entry in entries if entry.get(key) is not None]
    return max(values) if values else None


def _check_pair(
    fam: EvolutionFamily,
    index: int,
    s: float,
    t: float,
    a_grid,
    n_samples: int,
    period: Optional[float],
) -> Tuple[Dict, List[Exception]]:
    entry: Dict = {"s": s, "t": t, "cf_error": None, "ks_distance": None}

    failures = _get_and_log_any_exceptions(
        f"Identity for s={s}, t={t}",
        check_function=lambda: _check_cf_identity(fam, s, t, a_grid, entry),
        expected_exceptions=(IdentityViolation,),
    )
    failures += _get_and_log_any_exceptions(
        f"Convolution identity for s={s}, t={t}",
        check_function=lambda: _check_convolution_identity(
            fam, s, t, n_samples, index, entry
        ),
        expected_exceptions=(IdentityViolation,),
    )
    if period is not None:
        failures += _get_and_log_any_exceptions(
            f"Periodicity at t={t}",
            check_function=lambda: _check_periodicity(fam, t, period, a_grid, entry),
            expected_exceptions=(IdentityViolation,),
        )

    entry["quantile_radius"] = pushforward_quantile_radius(fam, t, t)
    return entry, failures


def verify_scenario(
    sc: Scenario,
    pairs: Sequence[Tuple[float, float]],
    a_grid,
    n_samples: int,
    period: Optional[float] = None,
) -> VerificationReport:
    """Run every verification check on a scenario, collecting failures instead of stopping at the first

    Checks the existence conditions at t = 0, then for each pair (s, t) the characteristic function identity,
    the empirical convolution identity (one-dimensional laws with a closed-form sampler only), periodicity of
    nu_t when a period is given, and reports the 0.99-quantile radius of nu_t.

    Args:
        sc: scenario
        pairs: (s, t) pairs with s <= t
        a_grid: frequencies, scalars for d = 1 or an (m, d) stack
        n_samples: samples per law for the convolution identity
        period: optional period of the coefficients

    Returns:
        VerificationReport with the JSON-ready report and the exceptions of failed checks

    Logs:
        The traceback of every failed check at exception level, or a success message at debug level
    """
    report: Dict = {
        "cond_i": None,
        "cond_ii": None,
        "decay": None,
        "majorant_per_unit_time": None,
        "truncated_at": None,
        "pairs": [],
    }
    failures = _get_and_log_any_exceptions(
        "Existence conditions",
        check_function=lambda: _check_existence(sc, report),
        expected_exceptions=(DecayUnavailable,),
    )

    families: List[EvolutionFamily] = []
    if not failures:
        failures += _get_and_log_any_exceptions(
            "Evolution family",
            check_function=lambda: families.append(build_family(sc)),
            expected_exceptions=(DecayUnavailable, ConditionsFailed),
        )

    for fam in families:
        for index, (s, t) in enumerate(pairs):
            entry, pair_failures = _check_pair(
                fam, index, s, t, a_grid, n_samples, period
            )
            report["pairs"].append(entry)
            failures += pair_failures

    report["max_cf_error"] = _largest(report["pairs"], "cf_error")
    report["ks_distance"] = _largest(report["pairs"], "ks_distance")
    report["failures"] = [repr(failure) for failure in failures]

    if not failures:
        logger.debug("Clean verification")
    return VerificationReport(report=report, failures=failures)


def check_verification(verification: VerificationReport) -> None:
    """Raise VerificationAbort listing the failed checks of a report, if any"""
    if verification.failures:
        raise VerificationAbort(verification.failures)
