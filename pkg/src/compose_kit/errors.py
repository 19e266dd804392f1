"""Domain errors shared across the toolkit.

Domain errors are conditions a caller can provoke with valid-looking data
(a light-free environment map, a truncated file).  They are distinct from
programmer errors, which surface as ValueError/TypeError.
"""

__all__ = ["ComposeKitError", "NoDominantLight", "FormatError"]


class ComposeKitError(Exception):
    """Base class for domain errors raised by this package."""


class NoDominantLight(ComposeKitError):
    """The environment map has no single dominant light to fit.

    Raised when the peak-to-mean luminance ratio falls below the dominance
    threshold (near-uniform illumination) or the map carries no energy.
    """


class FormatError(ComposeKitError):
    """A file or byte stream does not match its declared image format."""
