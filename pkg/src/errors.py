# src/errors.py
from typing import Optional


class SofaError(Exception):
    """Base error; `exit_code` is what the CLI returns for it."""
    exit_code = 1


class InputError(SofaError, ValueError):
    exit_code = 2


class AclSyntaxError(InputError):
    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class RuleCompileError(InputError):
    def __init__(self, message: str, line_no: Optional[int] = None):
        self.line_no = line_no
        prefix = f"line {line_no}: " if line_no else ""
        super().__init__(prefix + message)


class SchemeConfigError(InputError):
    pass


class FieldDomainError(SchemeConfigError):
    pass


class MismatchError(InputError):
    pass


class FormatVersionError(InputError):
    pass


class GesError(InputError):
    pass


class LevelError(GesError):
    pass


class NoiseBudgetError(GesError):
    pass


class CalibrationError(SofaError, RuntimeError):
    pass


class VerificationError(SofaError):
    exit_code = 3


class IntegrityError(SofaError):
    exit_code = 4
