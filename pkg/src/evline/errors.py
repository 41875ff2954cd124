"""Exception hierarchy shared across the package."""


class EvlineError(Exception):
    """Base class for all errors raised by this package."""


class CalibrationError(EvlineError):
    """Undistortion failed to converge or intrinsics are invalid."""


class DegenerateTransferError(EvlineError):
    """Line transfer produced a (near-)zero line vector."""


class ClusterRejectedError(EvlineError):
    """A cluster cannot supply enough events for line extraction."""


class LineFitError(EvlineError):
    """Line fitting is impossible (too few or coincident points)."""


class DegenerateSystemError(EvlineError):
    """The stacked linear system has no usable rows."""


class PartialWindowError(EvlineError):
    """Fewer events remain than the requested window size.

    Carries the partial window so the caller can decide to process it.
    """

    def __init__(self, window, requested):
        super().__init__(
            f"only {len(window)} events remain, {requested} requested"
        )
        self.window = window
        self.requested = requested


class ParseError(EvlineError):
    """A text input file failed to parse; carries the offending line number."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no
