"""
Exception hierarchy for the DI-QSDC simulator.

Every error raised by the library derives from SimulationError and carries an
error_type category so callers (the CLI in particular) can map failures to
diagnostics without string matching.
"""


class SimulationError(Exception):
    """Base exception for simulator errors."""
    def __init__(self, message: str, error_type: str = "general"):
        """
        Initialize SimulationError with message and error type.

        Args:
            message: Error message describing the issue
            error_type: Category of error for handling purposes
        """
        super().__init__(message)
        self.error_type = error_type


class ConfigInvalidError(SimulationError):
    """Exception for configurations that violate protocol invariants."""
    def __init__(self, message: str, error_type: str = "config_invalid"):
        """
        Initialize ConfigInvalidError.

        Args:
            message: Error message describing the violated invariant
            error_type: Category override for more specific subclasses
        """
        super().__init__(message, error_type)


class OddLengthError(ConfigInvalidError):
    """Exception for a checked message whose length n + c is odd."""
    def __init__(self, message: str):
        super().__init__(message, "odd_length")


class SizeMismatchError(SimulationError):
    """Exception for encoder inputs whose lengths do not match the registry."""
    def __init__(self, message: str):
        super().__init__(message, "size_mismatch")


class InsufficientRoundsError(SimulationError):
    """Exception for a CHSH estimate with an empty correlator cell."""
    def __init__(self, message: str):
        super().__init__(message, "insufficient_rounds")


class InconsistentTransitionError(SimulationError):
    """Exception for a Bell-state transition no encoding rule produces."""
    def __init__(self, message: str):
        super().__init__(message, "inconsistent_transition")


class PairLifecycleError(SimulationError):
    """Exception for operations on consumed or unknown EPR pairs."""
    def __init__(self, message: str):
        super().__init__(message, "pair_lifecycle")


class ReportWriteError(SimulationError):
    """Exception for report or summary files that could not be written."""
    def __init__(self, message: str):
        super().__init__(message, "io")
