"""Exception hierarchy.

The CLI maps each family to its own exit code, so callers can tell an
unreadable file from a corrupt payload from a bad argument.
"""


class RawJpegError(Exception):
    """Base class for all package errors."""


class ImageFormatError(RawJpegError, ValueError):
    """A raw image file could not be parsed (wrong depth, channels, header)."""


class ContainerError(RawJpegError, ValueError):
    """Malformed JPEG marker structure."""


class PayloadError(RawJpegError, ValueError):
    """The adapter COM payload is corrupt, truncated, or of an unknown version."""


class FitError(RawJpegError, RuntimeError):
    """Parameter fitting diverged (non-finite loss)."""
