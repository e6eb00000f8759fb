"""Channel file parsing, validation and dataset loading.

Every channel is a UTF-8 CSV file with a fixed header.  Rows that fail
validation are rejected and listed in an :class:`ErrorReport`; they are never
dropped silently and never clamped into range.
"""

from __future__ import annotations

import bisect
import csv
import io
import math
import os
import re
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import IO, Iterable, Mapping, NamedTuple, Sequence, Union

from proxnet.core import FormatError, GeoPoint, InvalidParameterError

RSSI_MIN = -120
RSSI_MAX = 0

CHANNELS = ("bluetooth", "wifi", "location", "comm", "survey")

HEADERS = {
    "bluetooth": ("user_id", "timestamp_s", "seen_device", "rssi_dbm"),
    "wifi": ("user_id", "timestamp_s", "ap_id", "rssi_dbm"),
    "location": ("user_id", "timestamp_s", "lat_deg", "lon_deg", "accuracy_m"),
    "comm": ("user_id", "timestamp_s", "peer_hash", "channel", "direction", "duration_s"),
    "survey": ("user_id", "item_id", "score"),
}
ROSTER_HEADER = ("user_id", "device_id")

FILENAMES = {kind: f"{kind}.csv" for kind in CHANNELS}
ROSTER_FILENAME = "roster.csv"

_INT_RE = re.compile(r"^-?[0-9]+$")


class BluetoothScan(NamedTuple):
    observer: str
    t: int
    seen: str
    rssi: int | None = None


class WifiReading(NamedTuple):
    user: str
    t: int
    ap: str
    rssi: int


class LocationFix(NamedTuple):
    user: str
    t: int
    lat: float
    lon: float
    accuracy: float

    @property
    def point(self) -> GeoPoint:
        return GeoPoint(self.lat, self.lon)


class CommEvent(NamedTuple):
    user: str
    t: int
    peer: str
    channel: str  # "call" | "sms"
    direction: str  # "incoming" | "outgoing" | "missed"
    duration: int = 0


class SurveyAnswer(NamedTuple):
    user: str
    item: str
    score: int


Record = Union[BluetoothScan, WifiReading, LocationFix, CommEvent, SurveyAnswer]


class RowError(NamedTuple):
    line: int
    reason: str
    detail: str


@dataclass
class ErrorReport:
    kind: str
    total_rows: int = 0
    accepted: int = 0
    errors: list[RowError] = field(default_factory=list)

    @property
    def rejected(self) -> int:
        return len(self.errors)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "total_rows": self.total_rows,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "errors": [e._asdict() for e in self.errors],
        }


class _RowInvalid(Exception):
    def __init__(self, reason, detail):
        super().__init__(detail)
        self.reason = reason
        self.detail = detail


def _text(value, name):
    if not value:
        raise _RowInvalid("missing", f"{name} is empty")
    return value


def _int(value, name):
    if not _INT_RE.match(value):
        raise _RowInvalid("parse", f"{name} is not a base-10 integer: {value!r}")
    return int(value)


def _float(value, name):
    try:
        x = float(value)
    except ValueError:
        raise _RowInvalid("parse", f"{name} is not a number: {value!r}") from None
    if not math.isfinite(x):
        raise _RowInvalid("range", f"{name} is not finite: {value!r}")
    return x


def _timestamp(value):
    t = _int(value, "timestamp_s")
    if t < 0:
        raise _RowInvalid("range", f"negative timestamp: {t}")
    return t


def _rssi(value, name="rssi_dbm"):
    r = _int(value, name)
    if not RSSI_MIN <= r <= RSSI_MAX:
        raise _RowInvalid("range", f"{name} outside [{RSSI_MIN}, {RSSI_MAX}]: {r}")
    return r


def _bluetooth(row):
    user, t, seen, rssi = row
    return BluetoothScan(
        _text(user, "user_id"),
        _timestamp(t),
        _text(seen, "seen_device"),
        _rssi(rssi) if rssi != "" else None,
    )


def _wifi(row):
    user, t, ap, rssi = row
    return WifiReading(_text(user, "user_id"), _timestamp(t), _text(ap, "ap_id"), _rssi(rssi))


def _location(row):
    user, t, lat, lon, acc = row
    lat_v = _float(lat, "lat_deg")
    lon_v = _float(lon, "lon_deg")
    acc_v = _float(acc, "accuracy_m")
    if not -90.0 <= lat_v <= 90.0:
        raise _RowInvalid("range", f"latitude outside [-90, 90]: {lat_v}")
    if not -180.0 <= lon_v <= 180.0:
        raise _RowInvalid("range", f"longitude outside [-180, 180]: {lon_v}")
    if acc_v <= 0:
        raise _RowInvalid("range", f"accuracy must be positive: {acc_v}")
    return LocationFix(_text(user, "user_id"), _timestamp(t), lat_v, lon_v, acc_v)


def _comm(row):
    user, t, peer, channel, direction, duration = row
    if channel not in ("call", "sms"):
        raise _RowInvalid("parse", f"unknown channel: {channel!r}")
    if direction not in ("incoming", "outgoing", "missed"):
        raise _RowInvalid("parse", f"unknown direction: {direction!r}")
    d = _int(duration, "duration_s")
    if d < 0:
        raise _RowInvalid("range", f"negative duration: {d}")
    if direction == "missed" and channel != "call":
        raise _RowInvalid("invariant", "missed direction is only valid for calls")
    if (channel == "sms" or direction == "missed") and d != 0:
        raise _RowInvalid("invariant", f"{channel}/{direction} must have zero duration")
    return CommEvent(_text(user, "user_id"), _timestamp(t), _text(peer, "peer_hash"), channel, direction, d)


def _survey(row):
    user, item, score = row
    s = _int(score, "score")
    if not 1 <= s <= 5:
        raise _RowInvalid("range", f"score outside [1, 5]: {s}")
    return SurveyAnswer(_text(user, "user_id"), _text(item, "item_id"), s)


_PARSERS = {
    "bluetooth": _bluetooth,
    "wifi": _wifi,
    "location": _location,
    "comm": _comm,
    "survey": _survey,
}


def _read_bytes(stream) -> bytes:
    if isinstance(stream, (bytes, bytearray)):
        return bytes(stream)
    data = stream.read()
    if isinstance(data, str):
        return data.encode("utf-8")
    return data


def _split_lines(data: bytes) -> list[bytes]:
    lines = data.split(b"\n")
    if lines and lines[-1] == b"":
        lines.pop()
    return [ln[:-1] if ln.endswith(b"\r") else ln for ln in lines]


def _check_header(raw: bytes, expected: Sequence[str], what: str) -> None:
    try:
        header = tuple(next(csv.reader([raw.decode("utf-8-sig")])))
    except (UnicodeDecodeError, StopIteration):
        header = ()
    if header != tuple(expected):
        raise FormatError(f"{what}: expected header {','.join(expected)!r}, got {raw[:200]!r}")


def parse_channel(stream: IO | bytes, kind: str) -> tuple[list[Record], ErrorReport]:
    """Parse one channel file.

    Returns the accepted records in file order together with an
    :class:`ErrorReport`.  A wrong or missing header is fatal and raises
    :class:`FormatError`; every other defect is a per-row report entry.
    """
    if kind not in _PARSERS:
        raise InvalidParameterError(f"unknown channel kind: {kind!r}")
    parser = _PARSERS[kind]
    expected = HEADERS[kind]
    lines = _split_lines(_read_bytes(stream))
    if not lines:
        raise FormatError(f"{kind}: empty file, header missing")
    _check_header(lines[0], expected, kind)

    report = ErrorReport(kind)
    records: list[Record] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        report.total_rows += 1
        try:
            try:
                text = raw.decode("utf-8")
            except UnicodeDecodeError:
                raise _RowInvalid("encoding", "row is not valid UTF-8") from None
            try:
                row = next(csv.reader([text]), [])
            except csv.Error as exc:
                raise _RowInvalid("parse", str(exc)) from None
            if len(row) != len(expected):
                raise _RowInvalid("field_count", f"expected {len(expected)} fields, got {len(row)}")
            records.append(parser(row))
        except _RowInvalid as exc:
            report.errors.append(RowError(lineno, exc.reason, exc.detail))
        else:
            report.accepted += 1
    return records, report


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_channel(records: Iterable[Record], kind: str) -> bytes:
    """Inverse of :func:`parse_channel` for valid records."""
    if kind not in HEADERS:
        raise InvalidParameterError(f"unknown channel kind: {kind!r}")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADERS[kind])
    for rec in records:
        writer.writerow([_fmt(v) for v in rec])
    return buf.getvalue().encode("utf-8")


def deduplicate(records: Iterable[Record]) -> list[Record]:
    """Drop exact duplicates, keeping the first occurrence of each record."""
    return list(dict.fromkeys(records))


def load_roster(stream: IO | bytes) -> tuple[frozenset[str], dict[str, str]]:
    """Parse ``roster.csv`` into the participant set and a device -> user map."""
    lines = _split_lines(_read_bytes(stream))
    if not lines:
        raise FormatError("roster: empty file, header missing")
    _check_header(lines[0], ROSTER_HEADER, "roster")
    users = set()
    devices: dict[str, str] = {}
    for lineno, raw in enumerate(lines[1:], start=2):
        try:
            row = next(csv.reader([raw.decode("utf-8")]), [])
        except (UnicodeDecodeError, csv.Error) as exc:
            raise FormatError(f"roster line {lineno}: {exc}") from None
        if len(row) != 2 or not row[0]:
            raise FormatError(f"roster line {lineno}: expected user_id,device_id")
        user, device = row
        users.add(user)
        if device:
            owner = devices.setdefault(device, user)
            if owner != user:
                raise FormatError(f"roster line {lineno}: device {device!r} assigned to {owner!r} and {user!r}")
    return frozenset(users), devices


def _sort_key(rec):
    return (rec[0], rec[1])


@dataclass(frozen=True)
class Dataset:
    """Immutable, per-channel sorted record collections."""

    bluetooth: tuple[BluetoothScan, ...] = ()
    wifi: tuple[WifiReading, ...] = ()
    location: tuple[LocationFix, ...] = ()
    comm: tuple[CommEvent, ...] = ()
    survey: tuple[SurveyAnswer, ...] = ()
    participants: frozenset[str] = frozenset()
    device_owner: Mapping[str, str] = field(default_factory=lambda: MappingProxyType({}))
    reports: Mapping[str, ErrorReport] = field(default_factory=lambda: MappingProxyType({}))

    def channel(self, kind: str) -> tuple:
        if kind not in CHANNELS:
            raise InvalidParameterError(f"unknown channel kind: {kind!r}")
        return getattr(self, kind)

    def is_external(self, device: str) -> bool:
        return device not in self.device_owner

    def external_devices(self) -> frozenset[str]:
        return frozenset(s.seen for s in self.bluetooth if s.seen not in self.device_owner)

    def unique_devices(self) -> int:
        return len({s.seen for s in self.bluetooth})

    def users(self, kind: str) -> list[str]:
        return sorted({r[0] for r in self.channel(kind)})

    def records_for(self, kind: str, user: str, start: int | None = None, end: int | None = None) -> tuple:
        """Records of ``user`` with ``start <= t < end`` via binary search."""
        recs = self.channel(kind)
        if kind == "survey":
            return tuple(r for r in recs if r.user == user)
        lo_t = start if start is not None else -1
        hi_key = (user, end) if end is not None else (user + "\x00", -1)
        lo = bisect.bisect_left(recs, (user, lo_t), key=_sort_key)
        hi = bisect.bisect_left(recs, hi_key, key=_sort_key)
        return recs[lo:hi]


PathLike = Union[str, os.PathLike]


def load_dataset(paths: Mapping[str, PathLike], roster: PathLike | None = None) -> Dataset:
    """Parse, deduplicate and sort the given channel files.

    ``paths`` maps channel kind to file path; absent channels stay empty.
    Bluetooth sightings of devices missing from the roster are kept (they
    count towards device statistics) and treated as external downstream.
    """
    present = {k: p for k, p in paths.items() if p is not None}
    if not present:
        raise InvalidParameterError("no channel files given")
    for kind in present:
        if kind not in CHANNELS:
            raise InvalidParameterError(f"unknown channel kind: {kind!r}")

    participants: frozenset[str] = frozenset()
    devices: dict[str, str] = {}
    if roster is not None:
        with open(roster, "rb") as fh:
            participants, devices = load_roster(fh)

    channels = {}
    reports = {}
    for kind, path in present.items():
        with open(path, "rb") as fh:
            records, report = parse_channel(fh, kind)
        records = deduplicate(records)
        if kind == "survey":
            records.sort(key=lambda r: (r.user, r.item))
        else:
            # stable: keeps contiguous WiFi readings of one scan in file order
            records.sort(key=_sort_key)
        channels[kind] = tuple(records)
        reports[kind] = report

    if roster is None:
        participants = frozenset(u for recs in channels.values() for u in {r[0] for r in recs})

    return Dataset(
        participants=participants,
        device_owner=MappingProxyType(devices),
        reports=MappingProxyType(reports),
        **channels,
    )


def channel_paths(directory: PathLike) -> dict[str, str]:
    """Standard channel file locations inside ``directory`` that exist."""
    found = {}
    for kind, name in FILENAMES.items():
        p = os.path.join(directory, name)
        if os.path.exists(p):
            found[kind] = p
    return found
