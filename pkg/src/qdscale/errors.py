"""Exceptions shared across the package.

ConfigurationError covers bad configs and violated call contracts (exit code 2
at the CLI); NumericError covers non-finite values and other numerical
failures (exit code 3).
"""


class ConfigurationError(Exception):
    pass


class NumericError(Exception):
    pass
