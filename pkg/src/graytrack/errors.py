"""Exception types shared across the package."""


class GraytrackError(Exception):
    """Base class for every error raised by graytrack."""


class InvalidConfig(GraytrackError, ValueError):
    pass


class DegenerateView(GraytrackError):
    """The camera centre lies inside (or tangent to) the target sphere."""


class NoConvergence(GraytrackError):
    pass


class DegenerateGeometry(GraytrackError):
    """The localisation Jacobian is rank deficient at every tried start."""


class ShapeError(GraytrackError, ValueError):
    pass


class NoLabels(GraytrackError):
    pass


class EmptyDataset(GraytrackError):
    pass


class TrackTooShort(GraytrackError):
    pass


class EmptySequence(GraytrackError, ValueError):
    pass


class AlignmentError(GraytrackError, ValueError):
    pass


class KeyMismatch(GraytrackError, KeyError):
    pass


class _LineError(GraytrackError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ParseError(_LineError):
    pass


class SchemaError(_LineError):
    pass


class InvariantError(_LineError):
    pass


class StageError(GraytrackError):
    """Wraps the first failure of a pipeline stage with its name and context."""

    def __init__(self, stage, message, path=None):
        self.stage = stage
        self.path = path
        where = f" ({path})" if path else ""
        super().__init__(f"[{stage}]{where} {message}")
