"""Error types shared across modules and mapped to API error codes by the service."""


class EmptySketchError(ValueError):
    """Raised when an input image contains no ink."""


class EmptyShapeError(ValueError):
    """Raised when an operation needs at least one present part and got none."""


class BadSelectionError(ValueError):
    """Raised when a part selection is out of range or empty where disallowed."""


class SessionNotFoundError(KeyError):
    """Raised when an editing session id is unknown."""
