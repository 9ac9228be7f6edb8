"""Exception hierarchy shared across the pipeline stages."""


class QuadfieldError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(QuadfieldError):
    exit_code = 2


class GeometryError(QuadfieldError):
    exit_code = 2


class MeshError(QuadfieldError):
    exit_code = 3


class SolverError(QuadfieldError):
    exit_code = 3


class TopologyError(QuadfieldError):
    exit_code = 4


class TracingError(QuadfieldError):
    exit_code = 5


class LimitCycleError(TracingError):
    exit_code = 5


class DecompositionError(QuadfieldError):
    exit_code = 6
