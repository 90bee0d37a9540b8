"""Error taxonomy. Every error carries a machine-readable ``code``."""

from __future__ import annotations


class UncomError(Exception):
    """Base class for all engine errors."""

    code = "error"

    def __init__(self, message: str = "", **details):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.details = details

    def to_jsonable(self) -> dict:
        out = {"code": self.code, "message": self.message}
        out.update(self.details)
        return out


class InvariantError(UncomError):
    """A domain type invariant was violated at construction time."""

    code = "invariant_violation"


class DecodeError(UncomError):
    """JSON decoding failed.

    ``code`` distinguishes malformed JSON, structural (schema) mismatches and
    invariant violations; ``path`` points at the offending JSON location.
    """

    code = "decode_error"

    def __init__(self, code: str, path: str, message: str):
        super().__init__(f"{message} at {path}", path=path)
        self.code = code
        self.path = path

    def __str__(self) -> str:  # "xmin < xmax violated at $.bbox"
        return self.message


# --- extraction ---------------------------------------------------------

class EmptyTranscriptError(UncomError):
    code = "empty_transcript"


class NoActionError(UncomError):
    code = "no_action"


class AdapterUnavailableError(UncomError):
    code = "adapter_unavailable"


class BetweenUnsupportedError(UncomError):
    code = "between_unsupported"


# --- gesture geometry ----------------------------------------------------

class DegeneratePointingError(UncomError):
    code = "degenerate_pointing"


class NoHandDetectedError(UncomError):
    code = "no_hand_detected"


class NoDetectionsError(UncomError):
    code = "no_detections"


class DepthOutOfBoundsError(UncomError):
    code = "depth_out_of_bounds"


# --- table map -----------------------------------------------------------

class NoEmptyCellError(UncomError):
    code = "no_empty_cell"


# --- pipeline ------------------------------------------------------------

class NoFramesError(UncomError):
    code = "no_frames"


class ObjectNotFoundError(UncomError):
    code = "object_not_found"


class TargetNotFoundError(UncomError):
    code = "target_not_found"


class TableNotFoundError(UncomError):
    code = "table_not_found"


class MissingMentionError(UncomError):
    code = "missing_mention"


class NoGestureError(UncomError):
    code = "no_gesture"


class PipelineError(UncomError):
    """Wraps any upstream error with the pipeline step that raised it."""

    code = "pipeline_error"

    def __init__(self, step: str, cause: UncomError):
        super().__init__(f"{step}: {cause.message}", step=step)
        self.step = step
        self.cause = cause

    def to_jsonable(self) -> dict:
        return {
            "code": self.code,
            "step": self.step,
            "cause": self.cause.to_jsonable(),
            "message": self.message,
        }


# --- providers -----------------------------------------------------------

class UnknownFrameError(UncomError):
    code = "unknown_frame"


class MissingRecordingError(UncomError):
    """Fixture miss. ``details`` name the (capability, frame, prompt) key."""

    code = "missing_recording"


class BridgeUnavailableError(UncomError):
    code = "bridge_unavailable"


class BridgeProtocolError(UncomError):
    code = "bridge_protocol_error"
