"""Exception types shared across the library."""


class DualAdvError(Exception):
    """Base class for all library errors."""


class InputShapeError(DualAdvError):
    """Input array shape does not match what the model expects."""


class InvalidThreshold(DualAdvError):
    """Edge binarization threshold outside [0, 1]."""


class InvalidParameter(DualAdvError):
    """A scalar hyperparameter is out of its valid range."""


class ArchitectureUnsupported(DualAdvError):
    """Model lacks the structure an interpreter needs (e.g. GAP + linear head)."""


class TrainingDiverged(DualAdvError):
    """Training loss became non-finite."""


class SolveDiverged(DualAdvError):
    """An inner optimization produced a non-finite objective."""


class AttackAborted(DualAdvError):
    """Attack loop failed mid-run; carries the partial trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class MissingClassPrototype(DualAdvError):
    """No class embedding prototype available for the requested class."""


class ShapeError(DualAdvError):
    """Two arrays that must agree in shape do not."""


class EmptyInput(DualAdvError):
    """An aggregate was requested over an empty collection."""


class TrainingError(DualAdvError):
    """Detector training received degenerate data."""


class InsufficientData(DualAdvError):
    """Dataset filtering left fewer images than requested."""
