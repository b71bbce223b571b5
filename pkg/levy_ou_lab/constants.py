# Default numerics. Every value can be overridden in a scenario config's "numerics" block.
DEFAULT_ODE_STEP = 1e-3
DEFAULT_QUAD_STEP = 1e-3
DEFAULT_TAIL_TOL = 1e-9
DEFAULT_FLOW_TOL = 1e-7
DEFAULT_IDENTITY_TOL = 1e-6

# Length of the window [t - horizon, t] on which the exponential decay bound is fitted and coefficients probed
DEFAULT_DECAY_HORIZON = 10.0
DEFAULT_DECAY_SAMPLES = 40

# The coefficient probe warns when an entry of A, B or f exceeds this in absolute value
DEFAULT_COEFFICIENT_BOUND = 1e6

MAX_TAIL_TOL = 1e-2

# Worker threads for Monte Carlo fan-out are capped by this environment variable
THREADS_ENVIRONMENT_VARIABLE = "LEVY_OU_THREADS"
