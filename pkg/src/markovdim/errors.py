"""Exception taxonomy for the toolkit.

Every failure mode that callers are expected to branch on gets its own
class; all inherit from :class:`MarkovDimError` so blanket handling stays
possible at the CLI boundary.
"""


class MarkovDimError(Exception):
    """Base class for all toolkit errors."""


class DomainError(MarkovDimError):
    """A parameter lies outside its mathematically valid range."""


class BoundaryError(MarkovDimError):
    """An orbit point landed on (or within tolerance of) a branch endpoint."""


class MixingError(MarkovDimError):
    """A subsystem is not primitive (not Markov-mixing), so pressure is undefined on it."""


class CompositionError(MarkovDimError):
    """Potentials or subsystems that do not belong together were combined."""


class UnboundedError(MarkovDimError):
    """A scalar minimization failed to bracket a minimum within the search budget."""


class WorkLimitError(MarkovDimError):
    """An enumeration exceeded its declared work cap."""


class DegenerateError(MarkovDimError):
    """A root solve has no sign change at the smallest truncation level."""


class ConvergenceError(MarkovDimError):
    """An iterative solver hit its iteration cap before reaching tolerance."""


class InsufficientSampleError(MarkovDimError):
    """Too few Monte-Carlo samples survived a retention filter."""


class ConfigError(MarkovDimError):
    """A config file failed schema or consistency checks."""

    def __init__(self, message: str, *, path: str | None = None, field: str | None = None):
        self.path = path
        self.field = field
        loc = []
        if path:
            loc.append(f"file={path}")
        if field:
            loc.append(f"field={field}")
        super().__init__(message + (f" [{', '.join(loc)}]" if loc else ""))
