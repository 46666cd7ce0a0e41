"""Exception types shared across the package."""

from __future__ import annotations


class DomainError(ValueError):
    """An argument lies outside the domain an operation accepts."""


class FormatError(ValueError):
    """A dataset, model or manifest file is malformed."""

    def __init__(self, message: str, offset: int | None = None) -> None:
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericalError(ArithmeticError):
    """A computation produced a singular system or non-finite values."""
