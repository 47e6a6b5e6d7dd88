"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array shapes incompatible with the requested operation."""


class FormatError(ValueError):
    """Corrupt or unsupported model file; carries the byte offset where parsing failed."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DecodeError(ValueError):
    """Image bytes could not be decoded."""


class ManifestError(ValueError):
    """Dataset directory did not yield a usable manifest."""


class TrainingDiverged(RuntimeError):
    """Loss became NaN/Inf; training aborts rather than continuing silently."""
