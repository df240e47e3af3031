"""Collaborative optimization with signed-distance surrogates of feasibility."""

__version__ = "0.1.0"

from .errors import ConfigError, InputError, NumericError

__all__ = ["ConfigError", "InputError", "NumericError", "__version__"]
