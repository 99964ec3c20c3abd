"""Exception hierarchy shared across the package."""


class Mono3dError(Exception):
    """Base class for all package-specific errors."""


class NonPositiveDepthError(Mono3dError):
    """A point at or behind the camera plane was projected or back-projected."""


class DegenerateCuboidError(Mono3dError):
    """Cuboid vertices do not determine an orientation (zero direction average)."""


class DegenerateEdgeError(Mono3dError):
    """A projected vertical edge is too short to recover a usable depth."""

    def __init__(self, edge_index: int, pixel_height: float, h_min: float):
        self.edge_index = edge_index
        self.pixel_height = pixel_height
        super().__init__(
            f"vertical edge {edge_index}: projected height {pixel_height:.3f} px "
            f"is below the minimum of {h_min:.3f} px"
        )


class OutOfRangeError(Mono3dError):
    """A query point lies outside the grid coverage."""


class ParseError(Mono3dError):
    """Malformed input file; carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class FormatError(Mono3dError):
    """Binary or image payload does not match the declared format."""


class UndefinedMetricError(Mono3dError):
    """A metric was requested over an empty set."""
