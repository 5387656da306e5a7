"""Exception hierarchy.

Each error carries the CLI exit code of its category: 1 usage, 2 data, 3 numerical.
"""


class RydhopError(Exception):
    exit_code = 2
    category = "data"


class UsageError(RydhopError):
    exit_code = 1
    category = "usage"


class ConfigError(UsageError):
    pass


class DataError(RydhopError):
    exit_code = 2
    category = "data"


class GridMismatchError(DataError):
    pass


class LibraryError(DataError):
    pass


class InfeasibleCellError(LibraryError):
    pass


class InsufficientDataError(DataError):
    pass


class NumericalError(RydhopError):
    exit_code = 3
    category = "numerical"


class SamplerError(NumericalError):
    """Thomas-Fermi rejection sampler exceeded its attempt budget."""


class PlacementError(NumericalError):
    """No blockade-compatible seed position found within the attempt budget."""


class CoincidentPositionError(NumericalError):
    """Two positions closer than the minimum resolvable distance."""


class ConvergenceError(NumericalError):
    pass


class FitError(NumericalError):
    pass


class OutOfGridError(FitError):
    pass


class NormalizationError(NumericalError):
    pass


class SizeCapError(NumericalError):
    pass
