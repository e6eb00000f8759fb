"""Multi-channel proximity, mobility and communication network analysis."""

from proxnet.core import (
    EmptyInputError,
    FormatError,
    GeoPoint,
    InsufficientDataError,
    InvalidParameterError,
    KeyMismatchError,
    TimeBin,
    bin_index,
    haversine,
    weekly_bin,
)

__version__ = "0.1.0"

__all__ = [
    "EmptyInputError",
    "FormatError",
    "GeoPoint",
    "InsufficientDataError",
    "InvalidParameterError",
    "KeyMismatchError",
    "TimeBin",
    "bin_index",
    "haversine",
    "weekly_bin",
]
