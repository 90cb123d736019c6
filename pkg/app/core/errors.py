"""Exception hierarchy shared by the lab; each class carries its CLI exit code."""

from __future__ import annotations

from typing import Optional


class LabError(Exception):
    exit_code = 1


class ConfigError(LabError):
    """Malformed configuration or command-line usage."""

    exit_code = 2

    def __init__(self, message: str, key: Optional[str] = None) -> None:
        super().__init__(message)
        self.key = key


class InvalidParameterError(LabError, ValueError):
    """A documented precondition of an operation does not hold."""

    exit_code = 2


class RegimeError(LabError):
    """The computation left the numerical regime where it is meaningful."""

    exit_code = 3


class SyncError(LabError):
    exit_code = 1


class UnsupportedCaseError(LabError, NotImplementedError):
    exit_code = 2
