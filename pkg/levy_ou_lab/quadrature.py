import numpy as np
from scipy.integrate import cumulative_trapezoid, simpson


def integrate(values: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Composite Simpson over the first axis of values sampled on the ascending grid r

    A single-point grid is an empty interval and integrates to zero.
    """
    values = np.asarray(values)
    if len(r) < 2:
        return np.zeros_like(values[0])
    return simpson(values, x=r, axis=0)


def integral_to_end(values: np.ndarray, r: np.ndarray) -> np.ndarray:
    """integral_{r_j}^{r_n} of the sampled function at every grid point, by cumulative trapezoid"""
    cumulative = cumulative_trapezoid(values, x=r, axis=0, initial=0)
    return cumulative[-1] - cumulative
