from __future__ import annotations


class ZsreError(Exception):
    """Base class for every error raised by the extraction pipeline."""


# Corpus


class ParseError(ZsreError, ValueError):
    def __init__(self, path: str, line: int, column: int, reason: str):
        self.path = path
        self.line = line
        self.column = column
        self.reason = reason
        super().__init__(
            f"Could not parse {path} at line {line}, column {column}: {reason}"
        )


class SchemaError(ZsreError, ValueError):
    def __init__(self, doc_id: str, field: str, reason: str):
        self.doc_id = doc_id
        self.field = field
        self.reason = reason
        super().__init__(f"Document {doc_id!r}, field {field!r}: {reason}")


class UnknownDocument(ZsreError, KeyError):
    def __init__(self, doc_id: str):
        self.doc_id = doc_id
        super().__init__(f"No document with id {doc_id!r} in the dataset.")

    def __str__(self) -> str:
        return self.args[0]


# Side information


class ServiceError(ZsreError):
    """
    Raised when a remote service keeps failing after all retries.
    completed_records is filled in by batch operations so callers know how
    much work was persisted before the failure.
    """

    def __init__(self, status: int | None, body: str,
                 completed_records: int | None = None):
        self.status = status
        self.body = body
        self.completed_records = completed_records
        super().__init__(f"Service request failed (status={status}): {body}")


class EmptyCompletion(ZsreError, ValueError):
    pass


class FormatError(ZsreError, ValueError):
    pass


class OfflineError(ZsreError):
    """A network call was needed while running in offline mode."""


# Embedding


class EmptyField(ZsreError, ValueError):
    pass


class DimensionMismatch(ZsreError, ValueError):
    def __init__(self, expected: int, actual: int):
        self.expected = expected
        self.actual = actual
        super().__init__(
            f"Expected vectors of dimension {expected}, got {actual}."
        )


class NonFiniteVector(ZsreError, ValueError):
    pass


class EmbeddingCacheError(ZsreError, ValueError):
    pass


# Scoring


class ZeroVector(ZsreError, ValueError):
    pass


class RangeError(ZsreError, ValueError):
    pass


class MissingEmbedding(ZsreError, KeyError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"No embedding available for {name!r}.")

    def __str__(self) -> str:
        return self.args[0]


class WeightsError(ZsreError, ValueError):
    pass


# Evaluation


class SizeError(ZsreError, ValueError):
    pass


class LabelOutOfSet(ZsreError, ValueError):
    pass


class CoverageError(ZsreError):
    def __init__(self, missing: list[str]):
        self.missing = list(missing)
        shown = ", ".join(self.missing[:10])
        more = "" if len(self.missing) <= 10 else f" (+{len(self.missing) - 10} more)"
        super().__init__(f"Missing inputs: {shown}{more}")


# Orchestration


class ConfigError(ZsreError, ValueError):
    pass


class StageError(ZsreError):
    def __init__(self, stage: str, cause: str | BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"Stage {stage!r} failed: {cause}")
