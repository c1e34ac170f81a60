"""Exception types shared across the package."""


class ConfigError(Exception):
    """Invalid configuration: bad shapes, unknown keys, out-of-range values.

    The CLI maps this to exit code 2.
    """


class NumericalError(RuntimeError):
    """A computation produced non-finite values and cannot safely continue."""
