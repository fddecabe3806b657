"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Raised when a configuration file fails to parse or violates an invariant."""


class DegenerateGeometryError(ValueError):
    """Raised when placement geometry is degenerate (e.g. coincident BS/RDARS)."""


class ZeroEchoError(ValueError):
    """Raised when the echo channel carries no energy and the receive filter is undefined."""


class SocpInfeasibleError(RuntimeError):
    """Raised when a second-order cone program has no feasible point."""


class SinrInfeasibleError(RuntimeError):
    """Raised when the per-user SINR targets cannot be met.

    ``per_user`` maps user index to a short diagnostic string.
    """

    def __init__(self, message, per_user=None):
        super().__init__(message)
        self.per_user = dict(per_user or {})


class OptimizationAborted(RuntimeError):
    """Raised when the joint optimization aborts mid-run.

    Carries the iteration index at which the failure occurred and the last
    feasible solution reached before the abort.
    """

    def __init__(self, message, iteration, last_solution=None):
        super().__init__(message)
        self.iteration = iteration
        self.last_solution = last_solution
