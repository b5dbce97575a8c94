"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems exit with 2,
numeric failures with 3.
"""


class ConfigurationError(Exception):
    """Invalid configuration: bad parameter values, malformed config files,
    cross-field constraint violations."""


class NumericError(Exception):
    """Numeric failure during computation: singular covariance, NaN loss."""


class CheckpointError(ConfigurationError):
    """Malformed checkpoint file: bad magic, version mismatch, truncation."""
