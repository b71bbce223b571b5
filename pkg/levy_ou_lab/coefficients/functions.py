import logging
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from .parse import CoeffExpr, constant_expr, eval_expr, format_expr, parse_expr


logger = logging.getLogger(__name__)

ExpressionLike = Union[str, float, int, CoeffExpr]

DEFAULT_PROBE_POINTS = 1001


def _as_expr(value: ExpressionLike) -> CoeffExpr:
    if isinstance(value, CoeffExpr):
        return value
    if isinstance(value, str):
        return parse_expr(value)
    return constant_expr(value)


@dataclass(frozen=True)
class MatrixFn:
    """ A d x d matrix whose entries are coefficient expressions of t (A(t) and B(t)) """

    entries: Tuple[Tuple[CoeffExpr, ...], ...]

    def __post_init__(self):
        d = len(self.entries)
        if d == 0 or any(len(row) != d for row in self.entries):
            raise ValueError(
                f"MatrixFn needs a non-empty square grid of expressions, got row lengths "
                f"{[len(row) for row in self.entries]}"
            )

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[ExpressionLike]]) -> "MatrixFn":
        return cls(tuple(tuple(_as_expr(entry) for entry in row) for row in rows))

    @property
    def dimension(self) -> int:
        return len(self.entries)

    def evaluate(self, t) -> np.ndarray:
        """ Returns a d x d matrix for scalar t, or an (n, d, d) stack for an array of n times """
        times = np.asarray(t, dtype=float)
        rows = [
            np.stack([np.asarray(eval_expr(entry, times)) for entry in row], axis=-1)
            for row in self.entries
        ]
        return np.stack(rows, axis=-2)

    def __str__(self):
        return str([[format_expr(entry) for entry in row] for row in self.entries])


@dataclass(frozen=True)
class VectorFn:
    """ A d-vector of coefficient expressions of t (the forcing f(t)) """

    entries: Tuple[CoeffExpr, ...]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("VectorFn needs at least one expression")

    @classmethod
    def from_entries(cls, entries: Sequence[ExpressionLike]) -> "VectorFn":
        return cls(tuple(_as_expr(entry) for entry in entries))

    @property
    def dimension(self) -> int:
        return len(self.entries)

    def evaluate(self, t) -> np.ndarray:
        """ Returns a d-vector for scalar t, or an (n, d) stack for an array of n times """
        times = np.asarray(t, dtype=float)
        return np.stack(
            [np.asarray(eval_expr(entry, times)) for entry in self.entries], axis=-1
        )

    def __str__(self):
        return str([format_expr(entry) for entry in self.entries])


def constant_matrix(matrix) -> MatrixFn:
    return MatrixFn.from_rows(np.atleast_2d(np.asarray(matrix, dtype=float)).tolist())


def constant_vector(vector) -> VectorFn:
    entries = np.atleast_1d(np.asarray(vector, dtype=float)).tolist()
    return VectorFn.from_entries(entries)


def probe_bound(
    fn: Union[MatrixFn, VectorFn, CoeffExpr],
    t_min: float,
    t_max: float,
    bound: float,
    n_points: int = DEFAULT_PROBE_POINTS,
    name: str = "coefficient",
) -> float:
    """ Sample the largest absolute entry of a coefficient function on [t_min, t_max]

    Boundedness of an arbitrary expression can't be decided statically, so this is a runtime probe: it logs a
    warning when the sampled supremum exceeds `bound`, and returns the supremum either way.
    """
    times = np.linspace(t_min, t_max, n_points)
    values = fn(times) if isinstance(fn, CoeffExpr) else fn.evaluate(times)
    supremum = float(np.max(np.abs(values)))

    if supremum > bound:
        logger.warning(
            f"{name} reaches |{supremum:.6g}| on [{t_min}, {t_max}], above the configured bound {bound:.6g}; "
            f"coefficients are assumed bounded"
        )
    return supremum
