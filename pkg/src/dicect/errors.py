"""Exception types shared across the toolkit."""


class ShapeError(ValueError):
    """Array dimensions do not match the geometry or each other."""


class FormatError(ValueError):
    """A file or config does not parse or fails schema validation."""


class TransportError(RuntimeError):
    """Communication with an external agent process failed (I/O, timeout,
    malformed frame, version mismatch). The handle is dead afterwards."""


class AgentRemoteError(RuntimeError):
    """The external agent reported an error frame; the message is the
    agent's own diagnostic."""


class NumericalError(RuntimeError):
    """A numerical stage produced unusable results (non-finite values,
    undefined metric, degenerate solve)."""


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage label and whatever
    per-iteration trace existed when the failure happened."""

    def __init__(self, stage, cause, trace=None):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.trace = trace
