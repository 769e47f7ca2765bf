"""Exception hierarchy shared by the library and the command line.

Every class carries the process exit code the CLI maps it to.
"""
from typing import Optional


class ScatteringError(Exception):
    """Base class for all errors raised by the toolkit"""

    exit_code = 3


class ConfigError(ScatteringError, ValueError):
    """Invalid configuration: missing section, bad range, overflow guard"""

    exit_code = 2


class DomainError(ScatteringError, ValueError):
    """Argument outside the mathematical domain of an operation"""

    exit_code = 2


class SingularityError(DomainError):
    """Evaluation at a singular point (z = 0 for the Riccati-Hankel functions)"""


class TableFormatError(ScatteringError, ValueError):
    """Malformed or incomplete potential table"""

    exit_code = 2

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalError(ScatteringError, RuntimeError):
    """Integrator failure, Wronskian constancy failure or loss of accuracy"""

    exit_code = 3


class PoleError(NumericalError):
    """Singular Jost matrix at real k"""


class HypothesisViolation(NumericalError):
    """det F(k) = 0 in the upper half plane where the construction needs it invertible"""


class RegularityViolation(NumericalError):
    """det W[u,u*] is not positive somewhere on the grid"""


class DegeneracyError(NumericalError):
    """Degenerate near-origin constants or a degenerate closed form"""


class GridRefinementError(NumericalError):
    """Phase curves jump between neighbouring k points"""


class UnphysicalCaseError(ScatteringError, ValueError):
    """Singularity-index pattern the transformation does not cover"""

    exit_code = 4
