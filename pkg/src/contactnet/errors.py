class ConfigError(ValueError):
    """Raised for invalid configuration values (sizes, vocab, loss weights)."""


class SchemaError(ValueError):
    """Raised when an on-disk dataset violates the documented schema."""
