"""Exception types shared across the package."""


class ToomlabError(Exception):
    """Base class for all package-specific errors."""


class RuleValidationError(ToomlabError):
    """A rule violates a structural requirement (monotonicity, constancy, shape)."""


class CertificateFormatError(ToomlabError):
    """A certificate is malformed (wrong shapes/fields), as opposed to merely invalid."""


class ConfigError(ToomlabError):
    """A run configuration is inconsistent (bad dims, schema violation, ...)."""


class ResourceLimitError(ToomlabError):
    """A request exceeds a hard size cap (e.g. exact computations on too many sites)."""


class NumericalError(ToomlabError):
    """An iterative numerical procedure failed to converge."""
