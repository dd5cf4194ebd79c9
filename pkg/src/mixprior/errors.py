"""Exception hierarchy.

The command-line front end maps these onto process exit codes: validation
problems exit with 2, numerical breakdowns with 3.
"""


class MixpriorError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(MixpriorError):
    """Malformed input, incompatible shapes, or bad configuration."""


class NumericalError(MixpriorError):
    """Numerical breakdown: non-finite model output, degenerate normalizers,
    or a violated convergence guarantee."""
