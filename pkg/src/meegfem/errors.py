"""Exception taxonomy shared across the package.

ConfigError covers anything wrong with user-supplied configuration or input
files and maps to CLI exit code 2. NumericalError covers solver-level
failures (non-convergence, incompatible right-hand sides, singular element
geometry discovered during assembly) and maps to exit code 3.
"""


class Error(Exception):
    """Base class for all package errors."""


class ConfigError(Error):
    """Invalid configuration, missing keys, or malformed input files."""


class MeshError(ConfigError):
    """Malformed or inconsistent mesh / conductivity input."""


class NumericalError(Error):
    """Numerical failure: non-convergence, incompatibility, degeneracy."""
