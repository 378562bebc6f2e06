"""Exception types shared across the package."""


class MultiragError(Exception):
    """Base class for all package errors."""


class CorpusError(MultiragError):
    pass


class DuplicateChunkError(CorpusError):
    def __init__(self, chunk_id: str):
        super().__init__(f"duplicate chunk id: {chunk_id!r}")
        self.chunk_id = chunk_id


class UnknownChunkError(CorpusError):
    def __init__(self, chunk_id: str):
        super().__init__(f"unknown chunk id: {chunk_id!r}")
        self.chunk_id = chunk_id


class MalformedLineError(CorpusError):
    def __init__(self, path: str, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = path
        self.line_no = line_no


class EmbeddingError(MultiragError):
    pass


class DimensionMismatchError(EmbeddingError):
    """A batch (or pair of vectors) mixes embedding dimensions."""


class ZeroVectorError(EmbeddingError):
    """An embedding with zero Euclidean norm was produced or supplied."""


class TransportError(MultiragError):
    """HTTP transport failed after exhausting retries."""


class GenerationError(MultiragError):
    pass


class LogprobsMissingError(GenerationError):
    """The backend response carries no per-token log probabilities."""


class EmptyCompletionError(GenerationError):
    """The backend returned an empty completion."""


class TemplateError(MultiragError):
    """Prompt template is missing a required placeholder."""


class ConfigError(MultiragError):
    """Run configuration failed validation."""


class StageError(MultiragError):
    """Wraps a failure with the pipeline stage it occurred in."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
