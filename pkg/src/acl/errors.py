"""Exception hierarchy shared by all modules.

Each class carries the process exit code the command-line front end uses
when the error escapes a subcommand.
"""


class ACLError(Exception):
    exit_code = 4


class DataError(ACLError, ValueError):
    """Malformed input: wrong shapes, empty datasets, unreadable files."""

    exit_code = 3


class DimensionError(DataError):
    pass


class IncompatibleSketchError(DataError):
    """Sketches produced by different feature maps cannot be merged."""


class IncomparableMapsError(DataError):
    """Two feature maps do not share their frequencies and dither."""


class DegenerateFunctionError(ACLError, ValueError):
    """The periodic function has a vanishing first Fourier coefficient."""


class UnsupportedAnalyticSketchError(ACLError, ValueError):
    """Closed-form Gaussian sketches only exist for complex exponentials."""


class InfeasibleTaskError(ACLError, ValueError):
    pass


class InfeasibleSeparationError(ACLError, ValueError):
    pass
