"""Exception types shared across the toolkit."""


class ConfigError(ValueError):
    """A configuration object or file is malformed or inconsistent."""


class InputError(ValueError):
    """Runtime data passed to an operation violates its preconditions."""


class NumericError(RuntimeError):
    """A numeric procedure produced non-finite values or failed to factor."""
