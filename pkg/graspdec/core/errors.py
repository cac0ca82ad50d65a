"""
Exception hierarchy for graspdec.

Every error carries the process exit code the CLI reports for it:
2 input/validation, 3 I/O, 4 numerical failure.
"""

EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4


class GraspdecError(Exception):
    exit_code = 1


class ConfigError(GraspdecError):
    exit_code = EXIT_VALIDATION


class ValidationError(GraspdecError):
    exit_code = EXIT_VALIDATION

    def __init__(self, message: str, violations: list | None = None):
        super().__init__(message)
        self.violations = list(violations or [])


class DesignError(ValidationError):
    pass


class SignalTooShortError(ValidationError):
    def __init__(self, length: int, minimum: int):
        super().__init__(f"Signal of {length} samples is too short: filtfilt needs at least {minimum} samples")
        self.length = length
        self.minimum = minimum


class EpochBoundaryError(ValidationError):
    def __init__(self, trial_id: int, message: str):
        super().__init__(f"trial {trial_id}: {message}")
        self.trial_id = trial_id


class DegenerateTrialError(ValidationError):
    pass


class InsufficientDataError(ValidationError):
    pass


class ProtocolError(ValidationError):
    pass


class SimulationConfigError(ConfigError):
    pass


class NumericalError(GraspdecError):
    exit_code = EXIT_NUMERICAL


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, GraspdecError):
        return exc.exit_code
    if isinstance(exc, OSError):
        return EXIT_IO
    return 1
