"""Exception hierarchy shared across the package."""


class PoolscreenError(Exception):
    """Base class for all package-specific errors."""


class DomainError(PoolscreenError, ValueError):
    """A numeric argument is outside the mathematically valid domain."""


class ConfigError(PoolscreenError, ValueError):
    """A plan, session, or table configuration is invalid."""


class ProtocolError(PoolscreenError, RuntimeError):
    """An interaction violates the query/outcome protocol (unknown or
    duplicate query ids, missing outcomes, advancing a finished run)."""


class SessionLoadError(PoolscreenError, ValueError):
    """A persisted session document is unreadable or fails replay."""
