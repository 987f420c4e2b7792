"""Exception hierarchy shared by all obslab modules."""


class ObslabError(Exception):
    """Base class for every error raised by the package."""


class DomainError(ObslabError, ValueError):
    """An argument lies outside the domain of an operation."""


class ValidationError(ObslabError, ValueError):
    """A measure or configuration violates a structural invariant."""


class NormalizationError(ValidationError):
    """Measure weights do not sum to one."""


class MeasureParseError(ObslabError, ValueError):
    """A measure file could not be parsed."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class UnsupportedOperation(ObslabError, TypeError):
    """The system does not provide the requested operation."""


class ConstructionError(ObslabError, ValueError):
    """A system could not be built from the given parameters."""


class OrbitError(ObslabError, RuntimeError):
    """An orbit left the phase space or the integrator became unstable."""


class DiagnosticError(ObslabError, ValueError):
    """Not enough data to produce a trustworthy estimate."""


class UndersampledError(DiagnosticError):
    """Block statistics are too sparse at the requested order."""

    def __init__(self, message, max_reliable_k):
        self.max_reliable_k = max_reliable_k
        super().__init__(f"{message} (max reliable order: {max_reliable_k})")


class LatticeTooLarge(ObslabError, ValueError):
    """The reduction lattice exceeds the enumeration cap."""


class ConfigError(ObslabError, ValueError):
    """An experiment configuration is invalid."""
