"""Exception types shared across the package.

The command line maps these onto exit codes: configuration problems exit
with 2, kernel/tensor admissibility failures with 3, solver failures with 4.
"""


class NlelastError(Exception):
    """Base class for all package errors."""


class ConfigError(NlelastError):
    """Invalid or inconsistent user configuration."""


class AdmissibilityError(NlelastError):
    """A kernel hypothesis, ellipticity, or compatibility gate failed."""


class SolveError(NlelastError):
    """An iterative or direct solve did not produce a usable solution."""


class QuadratureError(NlelastError):
    """A quadrature rule could not be constructed or did not converge."""
