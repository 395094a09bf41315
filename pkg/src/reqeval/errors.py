"""Exception types shared across the package."""

from __future__ import annotations


class ReqEvalError(Exception):
    """Base class for all domain errors."""


# --- document parsing ---

class MalformedDocument(ReqEvalError):
    """The document is not syntactically valid."""


class SchemaViolation(ReqEvalError):
    """A required field is missing or has the wrong type."""


class UnknownPrerequisite(ReqEvalError):
    """A requirement lists a prerequisite id that does not exist."""


class UnknownCategory(ReqEvalError):
    """A requirement category outside the eight known names."""


class CycleDetected(ReqEvalError):
    def __init__(self, cycle: list[int]):
        super().__init__(f"prerequisite cycle: {cycle}")
        self.cycle = cycle


class NonContiguousSteps(ReqEvalError):
    """Trajectory step indices are not 0,1,2,..."""


class EmptyTrajectory(ReqEvalError):
    pass


class LedgerMismatch(ReqEvalError):
    def __init__(self, step: int, field: str, expected: float, found: float):
        super().__init__(
            f"step {step}: {field} expected {expected!r}, found {found!r}"
        )
        self.step = step
        self.field = field
        self.expected = expected
        self.found = found


# --- workspace ---

class RootNotFound(ReqEvalError):
    pass


class NotACodeFile(ReqEvalError):
    pass


class PathNotInWorkspace(ReqEvalError):
    pass


# --- evidence / search ---

class EmptyIndex(ReqEvalError):
    pass


class EmptyQuery(ReqEvalError):
    pass


class MissingTrajectory(ReqEvalError):
    """Retrieve was called in a black-box setting."""


# --- judging ---

class BackendUnavailable(ReqEvalError):
    """The judgment backend could not be reached."""


class MalformedJudgment(ReqEvalError):
    """No verdict token found after exhausting retries."""


# --- metrics ---

class EmptyVector(ReqEvalError):
    pass


class KeyMismatch(ReqEvalError):
    pass


class KeyWithoutTask(ReqEvalError):
    pass


class FewerThanTwoJudges(ReqEvalError):
    pass


class EmptyInput(ReqEvalError):
    pass


class ZeroBaseline(ReqEvalError):
    pass
