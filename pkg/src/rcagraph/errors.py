"""Exception families raised across the package.

One class per error named in a module contract; the CLI maps families to
distinct exit codes (see cli module docs).
"""


class RcaError(Exception):
    """Base class for all package errors."""


class ParseError(RcaError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class DuplicateEventId(RcaError):
    pass


class NoMatchingTemplate(RcaError):
    pass


class PreconditionViolated(RcaError):
    pass


class DimensionMismatch(RcaError):
    pass


class ShapeMismatch(RcaError):
    pass


class DegenerateData(RcaError):
    pass


class InsufficientVocabulary(RcaError):
    pass


class EmptyKnowledgeBase(RcaError):
    pass


class AlarmNotInGraph(RcaError):
    pass


class UnknownFailureId(RcaError):
    pass


class InvalidParams(RcaError):
    pass


class EmptyCases(RcaError):
    pass


class ChecksumMismatch(RcaError):
    pass
