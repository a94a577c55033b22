"""Exception types shared across the toolkit."""


class PixelscopeError(Exception):
    """Base class for all toolkit errors."""


class ManifestError(PixelscopeError):
    """Malformed or inconsistent dataset manifest."""


class ImageLoadError(PixelscopeError):
    """Image could not be decoded or violates its record's annotations."""


class ValidationError(PixelscopeError):
    """Invalid arguments or data passed to an operation."""
