"""Exception types shared across the package."""

from __future__ import annotations


class FocusLimeError(Exception):
    """Base class for all package errors."""


class ContractViolation(FocusLimeError, ValueError):
    """An operation was called with arguments that break its preconditions."""


class ConfigError(FocusLimeError, ValueError):
    pass


class BudgetExhausted(FocusLimeError):
    """The token budget cannot cover the next query.

    ``partial`` holds whatever was completed before the budget ran out (a list of
    predictions for batches, a partial mean for AOPC, ...). ``index`` is the
    position of the first item that was not issued.
    """

    def __init__(self, message: str = "token budget exhausted", *, partial=None, index: int | None = None):
        super().__init__(message)
        self.partial = partial
        self.index = index


class ModelError(FocusLimeError):
    """Base for failures of the model backend itself."""


class NetworkError(ModelError):
    pass


class UnparseableResponse(ModelError):
    pass


class BatchQueryError(ModelError):
    """One or more items of a batch failed; ``errors`` maps index -> exception."""

    def __init__(self, errors: dict[int, Exception], partial: list):
        first = min(errors)
        super().__init__(f"{len(errors)} batch item(s) failed, first at index {first}: {errors[first]}")
        self.errors = errors
        self.partial = partial


class DegenerateFocus(FocusLimeError):
    """A focus mask has no active coordinates, so there is nothing to perturb."""


class InsufficientSamples(FocusLimeError):
    pass


class NoEvidence(FocusLimeError):
    pass
