"""Exception hierarchy shared by every fruitsize module."""


class FruitSizeError(Exception):
    """Base class for all library errors."""


class InvalidInputError(FruitSizeError, ValueError):
    pass


class InvalidDepthError(InvalidInputError):
    """A pixel or point carries a non-positive depth."""

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"non-positive depth at index {index}")


class EmptyMaskError(FruitSizeError, ValueError):
    pass


class InsufficientEvidenceError(FruitSizeError, ValueError):
    """Not enough boundary pixels for a Hough vote."""


class InsufficientPointsError(FruitSizeError, ValueError):
    pass


class DegenerateGeometryError(FruitSizeError, ValueError):
    """Coplanar / collinear input where a sphere is required."""


class SchemaError(FruitSizeError, ValueError):
    """Manifest or detection file violates the on-disk schema."""


class ManifestFileError(FruitSizeError, OSError):
    """A raster referenced by a manifest is missing or unreadable."""

    def __init__(self, path, frame_id=None, reason="missing file"):
        self.path = path
        self.frame_id = frame_id
        where = f" (frame {frame_id!r})" if frame_id is not None else ""
        super().__init__(f"{reason}: {path}{where}")


class ReferentialError(SchemaError):
    """A detection references a frame that is not in the manifest."""


class PlacementError(FruitSizeError, RuntimeError):
    """The synthetic scene generator could not place all fruits."""
