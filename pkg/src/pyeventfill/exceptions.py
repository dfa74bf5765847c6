"""Custom exceptions for pyeventfill."""

from pathlib import Path


class PyEventFillError(Exception):
    """Base exception for all pyeventfill errors."""


class ValidationError(PyEventFillError):
    """Raised when input validation fails."""


class TemplateParseError(ValidationError):
    """Raised when an event template cannot be parsed.

    Attributes:
        position: Character offset in the raw template where parsing failed.
    """

    def __init__(self, message: str, position: int) -> None:
        super().__init__(f"{message} (at character {position})")
        self.position = position


class BoundsError(ValidationError):
    """Raised when a span or index falls outside its sentence or grid."""


class ShapeError(ValidationError):
    """Raised when tensor widths or matrix shapes do not agree."""


class SequenceTooLongError(ValidationError):
    """Raised when a sentence exceeds the encoder's maximum length.

    Attributes:
        limit: Maximum number of subword tokens the backend accepts.
    """

    def __init__(self, length: int, limit: int) -> None:
        super().__init__(
            f"Sentence has {length} subword tokens, backend limit is {limit}; "
            "candidate-bearing sentences are never truncated"
        )
        self.length = length
        self.limit = limit


class ConfigurationError(PyEventFillError):
    """Raised when a model, backend or run configuration is inconsistent."""


class LeakageError(ConfigurationError):
    """Raised when evaluation-ontology labels appear in a transfer training stream."""


class OntologyError(PyEventFillError):
    """Raised when an event type, role or mapping label cannot be found."""


class DataError(PyEventFillError):
    """Raised when a corpus cannot be loaded or lacks required annotations."""


class IngestionError(DataError):
    """Raised when a single input file is unreadable or corrupt.

    Attributes:
        path: The offending file.
    """

    def __init__(self, message: str, path: Path | str) -> None:
        super().__init__(f"{message}: {path}")
        self.path = Path(path)


class TrainingAbortedError(PyEventFillError):
    """Raised when training hits a non-finite loss.

    Attributes:
        manifest_path: Where the diagnostic run manifest was written, if anywhere.
    """

    def __init__(self, message: str, manifest_path: Path | None = None) -> None:
        super().__init__(message)
        self.manifest_path = manifest_path
