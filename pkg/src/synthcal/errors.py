"""Exception hierarchy.

Every error raised on bad input derives from :class:`DomainError`, which the
command-line front end maps to exit status 1.
"""


class DomainError(ValueError):
    """Input outside an operation's domain."""


class DegenerateSyntheticError(DomainError):
    """Synthetic mean sits on 0 or 1, so a variance-normalized discrepancy is undefined."""


class SampleTooSmallError(DomainError):
    """A constructor was handed fewer observations than it needs."""


class DatasetError(DomainError):
    """Dataset file failed validation."""

    def __init__(self, message, question_id=None, field=None):
        where = []
        if question_id is not None:
            where.append(f"question {question_id!r}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.question_id = question_id
        self.field = field


class ResultsError(DomainError):
    """Results file missing or unreadable."""


class TemplateError(DomainError):
    """Prompt template could not be rendered."""

    def __init__(self, message, slot=None):
        super().__init__(message)
        self.slot = slot


class ExtractionError(DomainError):
    """Completion contains no double-bracket answer."""


class InvalidAnswerError(ExtractionError):
    """Double-bracket answers exist but none is a valid choice."""


class EndpointError(DomainError):
    """Chat endpoint unreachable or returned an error after all retries."""
