"""Error types shared across the package."""


class MimicError(Exception):
    """Base class for all library errors."""


class DataError(MimicError):
    """Malformed or inconsistent input data (files, parameters, streams)."""


class BlobSizeMismatch(DataError):
    """A binary blob holds a different number of elements than the metadata claims."""


class InvalidModel(DataError):
    """Model arrays violate a structural invariant (index range, duplicates, shape)."""


class TooFewVertices(DataError):
    """Requested synthetic model is too small to host the landmark and eye vertices."""


class DegenerateConfiguration(MimicError):
    """Geometry does not constrain the solve (coplanar reference, collinear landmarks)."""


class NumericalFailure(MimicError):
    """A solver could not produce a finite answer even after damping."""


class EmptyClip(DataError):
    """An operation that needs at least one frame received none."""


class ModelMismatch(DataError):
    """Tracked parameters and profile come from models with different dimensions."""


class InvalidStats(DataError):
    """Pose statistics cannot be used for retargeting (zero or non-finite scale)."""


class ProtocolError(MimicError):
    """A wire message violates the session protocol.

    `code` is one of the wire error codes so services can answer with a
    structured Error message instead of dropping the connection.
    """

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
