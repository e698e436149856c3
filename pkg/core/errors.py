"""
FIE Benchmark - Exceptions
Every error the library raises derives from FieBenchError so the CLI can map
it to an exit code in one place.
"""

from typing import Any, Optional


class FieBenchError(Exception):
    """Base class for all library errors"""


class DomainError(FieBenchError, ValueError):
    """An argument lies outside the domain of an operation"""


class UnsupportedFamilyError(FieBenchError, TypeError):
    """A comparison-function family or cost/certificate pairing is not supported"""


class UnsupportedModelError(FieBenchError, TypeError):
    """The system model lacks the derivative hooks a gradient-based routine needs"""


class NumericalError(FieBenchError, ArithmeticError):
    """A numerical quantity became invalid (e.g. nonpositive innovation covariance)"""


class OracleGridTooLargeError(DomainError):
    """The brute-force grid would exceed the evaluation budget"""


class SolverFailureError(FieBenchError, RuntimeError):
    """
    Every start of the FIE solver diverged

    Carries the diagnostics of the last attempt and, when raised from a
    growing-horizon run, the time index that failed.
    """

    def __init__(self, message: str, diagnostics: Any = None, t: Optional[int] = None):
        super().__init__(message)
        self.diagnostics = diagnostics
        self.t = t


class CertificateError(FieBenchError):
    """A cost specification failed its RGAS certificate check"""

    def __init__(self, message: str, verdict: Any = None):
        super().__init__(message)
        self.verdict = verdict
