"""Exception and warning types raised across the toolkit."""


class EduSegError(Exception):
    """Base class for all toolkit errors."""


class FormatError(EduSegError, ValueError):
    """Malformed input text (bracketed trees, corpus records)."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class ValidationError(EduSegError, ValueError):
    """A value violates a structural invariant (spans, labels, boundaries)."""


class AlignmentError(EduSegError, ValueError):
    """Two sequences that must line up do not."""


class ModelError(EduSegError):
    """A model file or fitted model is inconsistent or incompatible."""


class StateError(EduSegError, RuntimeError):
    """An object is used in a state that does not allow the operation."""


class DegenerateDataWarning(UserWarning):
    """Training data contains a single label only."""


class MembershipError(EduSegError, LookupError):
    """A tree node was passed to a tree it does not belong to."""
