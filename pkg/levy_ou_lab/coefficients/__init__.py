from .exceptions import (  # noqa: F401 unused imports
    CoefficientEvalError,
    CoefficientSyntaxError,
)
from .functions import (  # noqa: F401 unused imports
    MatrixFn,
    VectorFn,
    constant_matrix,
    constant_vector,
    probe_bound,
)
from .parse import (  # noqa: F401 unused imports
    CoeffExpr,
    constant_expr,
    eval_expr,
    format_expr,
    parse_expr,
)
