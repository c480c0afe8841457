"""Exception hierarchy shared by all dtchan modules.

Every library-raised error derives from DtcError so callers (and the CLI)
can map failures to exit codes without matching on builtins.
"""


class DtcError(Exception):
    """Base class for all dtchan errors."""


class DegenerateSegment(DtcError):
    """Segment endpoints coincide; no direction is defined."""


class PlacementFailed(DtcError):
    """Random scenario placement could not satisfy constraints."""


class OutOfGrid(DtcError):
    """A point or object lies outside the grid extent."""


class UtInsideScatterer(DtcError):
    """Receiver position falls inside a cuboid volume."""


class IndexOutOfRange(DtcError):
    """Subcarrier or antenna index outside the configured range."""


class ZeroChannel(DtcError):
    """Operation undefined for an all-zero channel matrix."""


class ZeroColumn(DtcError):
    """Per-subcarrier metric undefined for a zero reference column."""


class ShapeMismatch(DtcError):
    """Operand dimensions (or validity masks) do not agree."""


class InvalidDensity(DtcError):
    """Pilot density outside (0, 1]."""


class LayoutMismatch(DtcError):
    """Patch/crop layout does not tile the given grid."""


class EmptyRegion(DtcError):
    """Metric requested over an empty valid region."""


class EmptyInput(DtcError):
    """Operation requires at least one value."""


class EmptyRoi(DtcError):
    """No points inside the region of interest."""


class NoCluster(DtcError):
    """Clustering labelled every point as noise."""


class FormatError(DtcError):
    """Binary container is corrupt or truncated.

    Carries the byte offset at which decoding failed.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
