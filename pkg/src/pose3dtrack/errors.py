"""Exception hierarchy shared across the engine."""


class PoseTrackError(Exception):
    """Base class for all engine errors."""


class ParseError(PoseTrackError):
    """Malformed input file; carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(PoseTrackError):
    """A parsed value violates a data-model invariant."""


class EmptySupportError(PoseTrackError):
    """No valid depth pixel available where one is required."""


class SequencingError(PoseTrackError):
    """Frames fed to the tracker out of order."""


class ScenarioError(PoseTrackError):
    """Invalid or unknown synthetic scenario."""


class EvaluationError(PoseTrackError):
    """Evaluation cannot proceed (empty ground truth, skeleton mismatch, ...)."""
