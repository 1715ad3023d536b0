"""Exception types shared across the workbench."""


class WorkbenchError(Exception):
    """Base class for all cloudresp errors."""

    code = "internal"


class InvalidArgumentError(WorkbenchError):
    """An argument violates a documented precondition."""

    code = "invalid-argument"


class NotFoundError(WorkbenchError):
    """A named resource (region, lag, record id, ...) does not exist."""

    code = "not-found"


class FormatError(WorkbenchError):
    """A file fails its magic/version/schema check."""

    code = "format-error"


class CorruptFileError(FormatError):
    """A file parses far enough to prove it is damaged (truncation, bad shape)."""

    code = "corrupt-file"


class ShapeError(InvalidArgumentError):
    """Array shapes or grid levels are incompatible."""

    code = "shape-mismatch"


class DegenerateReferenceError(WorkbenchError):
    """Training data has no variance to fit a distribution-shift reference."""

    code = "degenerate-reference"


class EmptySiteError(WorkbenchError):
    """No grid vertex falls within a tipping site's radius."""

    code = "empty-site"


class DivergedError(WorkbenchError):
    """Training produced a non-finite loss."""

    code = "diverged"

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class StateError(WorkbenchError):
    """An operation was requested before the state it depends on exists."""

    code = "stage-not-computed"
