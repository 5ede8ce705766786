"""Exception hierarchy.

``InputError`` covers anything the caller can fix (bad bytes, bad CSV,
degenerate data) and maps to CLI exit code 1. ``InvariantError`` means the
pipeline itself broke a guarantee and maps to exit code 2.
"""

from __future__ import annotations


class GaitlabError(Exception):
    pass


class InputError(GaitlabError, ValueError):
    pass


class InvariantError(GaitlabError, AssertionError):
    pass


# --- wire codec -------------------------------------------------------------

class FrameError(InputError):
    """Base class for a frame that failed to decode."""


class BadMagic(FrameError):
    pass


class BadCrc(FrameError):
    pass


class BadDeviceId(FrameError):
    pass


class Truncated(FrameError):
    pass


class EncodeError(InputError):
    pass


# --- sessions ---------------------------------------------------------------

class EmptyChannel(InputError):
    pass


class ClockSkew(InputError):
    pass


class SchemaMismatch(InputError):
    def __init__(self, column: str, detail: str = ""):
        self.column = column
        msg = f"schema mismatch at column {column!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


# --- features / data --------------------------------------------------------

class TooShort(InputError):
    pass


class TooFewSteps(InputError):
    pass


class EmptyAfterCleaning(InputError):
    pass


# --- models -----------------------------------------------------------------

class ModelFormatError(InputError):
    pass


class VersionMismatch(ModelFormatError):
    pass


class ChecksumError(ModelFormatError):
    pass


class LeakageError(InvariantError):
    pass
