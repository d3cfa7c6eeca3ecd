"""Exception types shared across the solver.

ConfigError maps to CLI exit code 2, NumericalFault (and subclasses) to
exit code 3.
"""


class SolverError(Exception):
    """Base class for all solver errors."""


class ConfigError(SolverError):
    """Invalid experiment configuration (bad grid, surface outside domain, ...)."""


class NumericalFault(SolverError):
    """Runtime numerical failure: NaN fields, unrecoverable tube violation, ..."""


class IncompleteTubeError(NumericalFault):
    """An interpolation or difference stencil touched an inactive node.

    Carries the offending grid node so tube-radius management can react.
    """

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class MedialAxisError(NumericalFault):
    """Closest point query at (or too near) a medial-axis singularity."""


class StarvationError(NumericalFault):
    """Too few footpoints near a node for any local reconstruction."""
