"""Exporter error types."""


class ExportError(Exception):
    """Base class for exporter failures."""


class ConfigError(ExportError):
    """Missing checkpoint, unknown class name, or contradictory options."""


class SchemaError(ExportError):
    """A produced artifact would violate the interchange schema."""
