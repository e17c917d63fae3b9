"""Exception hierarchy shared by the lab."""
from __future__ import annotations


class LabError(Exception):
    """Base class for every error raised by the lab."""


class InvalidInputError(LabError, ValueError):
    """Input violates a documented precondition (shape, sign, missing metric, ...)."""


class ReducibleBaseError(InvalidInputError):
    """The base generator has more than one communicating class."""


class DeskScaleError(LabError):
    """The requested computation exceeds the enumeration or transport limits."""
