"""Exception hierarchy shared by the library and the CLI."""


class FuplabError(Exception):
    """Base class; the CLI maps it to exit code 1."""


class ValidationError(FuplabError, ValueError):
    """Bad input or configuration; the CLI maps it to exit code 2."""


class IncompatibleError(ValidationError):
    """Two objects that must share a grid or base do not."""


class OutOfBoundsError(ValidationError):
    """Geometry leaves its bounding box."""


class InconsistencyError(FuplabError):
    """A derived constant lands outside its admissible range."""


class ResolutionError(FuplabError):
    """A grid-refinement check failed; the discretization is too coarse."""


class ConvergenceError(FuplabError):
    """An iterative solver or quadrature did not reach its tolerance."""
