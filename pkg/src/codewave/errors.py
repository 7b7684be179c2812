"""Exception types shared across the package."""


class CodewaveError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(CodewaveError, ValueError):
    """Invalid or conflicting configuration (bad flags, mixed dimensions, ...)."""


class IndexFormatError(CodewaveError, ValueError):
    """An index or report file violates its schema."""


class ModelFormatError(CodewaveError, ValueError):
    """A persisted model file is corrupt or has the wrong magic/version."""


class ProtocolError(CodewaveError, RuntimeError):
    """A demand-store message violates the wire protocol or store state."""


class TransportError(CodewaveError, OSError):
    """The demand store is unreachable. Deposits are idempotent by signature,
    so callers may retry safely."""
