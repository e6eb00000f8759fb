"""Shared types, time binning and geodesic helpers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timezone
from zoneinfo import ZoneInfo, ZoneInfoNotFoundError

EARTH_RADIUS_M = 6_371_000.0
DEFAULT_TZ = "Europe/Copenhagen"

UserId = str
Timestamp = int


class InvalidParameterError(ValueError):
    pass


class EmptyInputError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


class FormatError(ValueError):
    pass


class KeyMismatchError(KeyError):
    pass


@dataclass(frozen=True, order=True)
class TimeBin:
    index: int
    width_s: int
    origin_s: int = 0

    def __post_init__(self):
        if self.width_s <= 0:
            raise InvalidParameterError(f"bin width must be positive, got {self.width_s}")

    @property
    def start_s(self) -> int:
        return self.origin_s + self.index * self.width_s

    @property
    def end_s(self) -> int:
        return self.start_s + self.width_s

    @classmethod
    def of(cls, t: int, width_s: int, origin_s: int = 0) -> "TimeBin":
        return cls(bin_index(t, width_s, origin_s), width_s, origin_s)


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if math.isnan(self.lat) or math.isnan(self.lon):
            raise InvalidParameterError("NaN coordinate")
        if not -90.0 <= self.lat <= 90.0:
            raise InvalidParameterError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise InvalidParameterError(f"longitude out of range: {self.lon}")


def bin_index(t: int, width_s: int, origin_s: int = 0) -> int:
    """Index of the fixed-width bin holding ``t`` (floor division)."""
    if width_s <= 0:
        raise InvalidParameterError(f"bin width must be positive, got {width_s}")
    return (t - origin_s) // width_s


def get_zone(tz: str) -> ZoneInfo:
    try:
        return ZoneInfo(tz)
    except (ZoneInfoNotFoundError, ValueError, TypeError) as exc:
        raise InvalidParameterError(f"unknown timezone: {tz!r}") from exc


def weekly_bin(t: int, tz: str = DEFAULT_TZ) -> tuple[int, int]:
    """Return ``(day_of_week, hour)`` of ``t`` in local civil time, Monday = 0."""
    local = datetime.fromtimestamp(t, tz=timezone.utc).astimezone(get_zone(tz))
    return local.weekday(), local.hour


def haversine(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters on a spherical Earth."""
    return haversine_deg(a.lat, a.lon, b.lat, b.lon)


def haversine_deg(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    p1 = math.radians(lat1)
    p2 = math.radians(lat2)
    dphi = p2 - p1
    dlmb = math.radians(lon2 - lon1)
    h = math.sin(dphi / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))
