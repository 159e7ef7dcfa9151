"""Shared exception base for the engine."""


class EngineError(Exception):
    """Base class for all errors raised by this package."""
