"""Exception hierarchy shared by every module.

All domain failures derive from :class:`PlannerError` so the CLI can map them
to exit code 1 without catching programming errors.
"""


class PlannerError(Exception):
    """Base class for domain errors."""


class DimensionMismatchError(PlannerError, ValueError):
    pass


class InfeasibleGeometryError(PlannerError, ValueError):
    pass


class SamplingExhaustedError(PlannerError, RuntimeError):
    pass


class EmptyDatasetError(PlannerError, ValueError):
    pass


class ShapeMismatchError(PlannerError, ValueError):
    pass


class DivergenceError(PlannerError, FloatingPointError):
    pass


class InvalidConfigError(PlannerError, ValueError):
    pass


class InfeasibleQueryError(PlannerError, ValueError):
    pass
