"""Seeded multi-channel trace generator with a planted ground truth.

Agents live on a local plane around a campus.  Each agent has a home; every
community (study line) has a classroom; all agents share a canteen and a few
evening venues.  Time is discretized into bins: an agent is either at a site
or travelling in each bin.  Agents at the same site are co-present, and that
co-presence is exactly what the Bluetooth channel records when the detection
range covers the seat spread.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from collections import defaultdict
from dataclasses import asdict, dataclass, field, fields
from datetime import date, datetime, timedelta
from typing import Mapping

import numpy as np

from proxnet.btnet import BinnedNetwork, coarsen, symmetrize
from proxnet.core import EARTH_RADIUS_M, TimeBin, get_zone
from proxnet.ingest import (
    FILENAMES,
    ROSTER_FILENAME,
    BluetoothScan,
    CommEvent,
    LocationFix,
    SurveyAnswer,
    WifiReading,
    serialize_channel,
)
from proxnet.surveys import TRAITS, key_csv

HOME, CLASS, CANTEEN, VENUE = "home", "class", "canteen", "venue"


class SynthConfigError(ValueError):
    def __init__(self, violations):
        super().__init__("invalid synth config: " + "; ".join(violations))
        self.violations = list(violations)


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 20
    n_days: int = 7
    bin_s: int = 300
    start_date: str = "2013-10-14"
    tz: str = "Europe/Copenhagen"
    seed: int = 0

    # social graph: planted partition
    n_communities: int = 4
    p_intra: float = 0.4
    p_inter: float = 0.03

    # geography
    center_lat: float = 55.786
    center_lon: float = 12.523
    site_spacing_m: float = 1000.0
    n_venues: int = 2
    seat_jitter_m: float = 2.0
    speed_mps: float = 5.0

    # WiFi: an ap_grid_n x ap_grid_n grid of APs centred on every site
    ap_grid_n: int = 3
    ap_spacing_m: float = 15.0
    rssi_ref_dbm: float = -40.0
    path_loss_exp: float = 2.5
    rssi_noise_db: float = 2.0
    rssi_floor_dbm: float = -90.0

    # Bluetooth
    bt_range_m: float = 10.0
    bt_detect_prob: float = 1.0
    n_external_devices: int = 200
    external_sighting_prob: float = 0.1

    # location fixes
    coarse_fix_prob: float = 0.05
    fix_noise_scale: float = 0.0

    # schedule
    skip_class_prob: float = 0.05
    evening_out_prob: float = 0.3
    weekend_out_prob: float = 0.4

    # communication, per tie and day
    calls_per_day: float = 0.3
    sms_per_day: float = 0.6
    external_contacts: int = 3
    missed_prob: float = 0.1
    call_median_s: float = 48.0
    call_sigma: float = 1.2

    # survey
    items_per_trait: int = 2

    def violations(self) -> list[str]:
        v = []
        for name in ("n_users", "n_days", "n_communities", "ap_grid_n", "items_per_trait"):
            if getattr(self, name) < 1:
                v.append(f"{name} must be >= 1")
        if self.n_users < 2:
            v.append("n_users must be >= 2")
        if self.bin_s < 1 or 3600 % self.bin_s:
            v.append("bin_s must be a positive divisor of 3600")
        for name in (
            "p_intra", "p_inter", "bt_detect_prob", "external_sighting_prob", "coarse_fix_prob",
            "skip_class_prob", "evening_out_prob", "weekend_out_prob", "missed_prob",
        ):
            if not 0.0 <= getattr(self, name) <= 1.0:
                v.append(f"{name} must be in [0, 1]")
        for name in ("rssi_noise_db", "seat_jitter_m", "fix_noise_scale", "calls_per_day", "sms_per_day"):
            if getattr(self, name) < 0:
                v.append(f"{name} must be >= 0")
        for name in ("site_spacing_m", "speed_mps", "ap_spacing_m", "path_loss_exp", "call_median_s", "bt_range_m"):
            if getattr(self, name) <= 0:
                v.append(f"{name} must be > 0")
        if self.n_venues < 0 or self.n_external_devices < 0 or self.external_contacts < 0:
            v.append("counts must be >= 0")
        if self.site_spacing_m <= 2 * (self.ap_range_m() + self.ap_grid_n * self.ap_spacing_m):
            v.append("site_spacing_m too small: AP coverage of neighbouring sites would overlap")
        try:
            date.fromisoformat(self.start_date)
        except ValueError:
            v.append(f"start_date is not an ISO date: {self.start_date!r}")
        try:
            get_zone(self.tz)
        except ValueError:
            v.append(f"unknown timezone {self.tz!r}")
        return v

    def validate(self) -> None:
        v = self.violations()
        if v:
            raise SynthConfigError(v)

    def ap_range_m(self) -> float:
        """Distance at which the noiseless RSSI drops to the detection floor."""
        return 10 ** ((self.rssi_ref_dbm - self.rssi_floor_dbm) / (10 * self.path_loss_exp))

    @classmethod
    def from_dict(cls, d: Mapping) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise SynthConfigError([f"unknown config key {k!r}" for k in unknown])
        return cls(**d)


def expected_rssi(cfg: SynthConfig, distance_m) -> np.ndarray:
    """Log-distance path loss, distances clamped to 1 m."""
    d = np.maximum(np.asarray(distance_m, dtype=float), 1.0)
    return cfg.rssi_ref_dbm - 10 * cfg.path_loss_exp * np.log10(d)


def peer_hash(identity: str) -> str:
    return hashlib.sha1(identity.encode("utf-8")).hexdigest()[:16]


def user_id(i: int) -> str:
    return f"u{i:03d}"


def device_id(i: int) -> str:
    return f"bt{i:03d}"


@dataclass
class Site:
    id: int
    kind: str
    x: float
    y: float
    lat: float
    lon: float


@dataclass
class Stay:
    site: int
    start_bin: int
    end_bin: int  # exclusive
    first_fix_t: int | None = None
    last_fix_t: int | None = None


@dataclass
class GroundTruth:
    bin_s: int
    start_s: int
    n_bins: int
    users: list[str]
    sites: list[dict]
    copresence: list[tuple[int, int, list[str]]]  # (bin, site, users present), >= 2 users
    stays: dict[str, list[Stay]]
    ties: list[tuple[str, str]]
    contacts: dict[str, dict[str, list[str]]]
    counts: dict[str, int]
    per_user_counts: dict[str, dict[str, int]]
    wifi_occupied_bins: dict[str, int]
    traits: dict[str, dict[str, float]] = field(default_factory=dict)

    @property
    def start_bin(self) -> int:
        return self.start_s // self.bin_s

    def copresence_pairs(self):
        """Yield ``(global_bin, (a, b), site)`` for every co-present pair."""
        for b, site, users in self.copresence:
            for i, a in enumerate(users):
                for c in users[i + 1:]:
                    yield self.start_bin + b, (a, c), site

    def to_dict(self) -> dict:
        d = asdict(self)
        d["copresence"] = [[b, s, list(u)] for b, s, u in self.copresence]
        d["ties"] = [list(t) for t in self.ties]
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "GroundTruth":
        d = dict(d)
        d["copresence"] = [(b, s, list(u)) for b, s, u in d["copresence"]]
        d["ties"] = [tuple(t) for t in d["ties"]]
        d["stays"] = {u: [Stay(**s) for s in v] for u, v in d["stays"].items()}
        return cls(**d)


def oracle_networks(gt: GroundTruth, width_s: int | None = None) -> list[BinnedNetwork]:
    """Planted co-presence per bin, optionally coarsened to a multiple of the generator's bin."""
    per_bin = defaultdict(set)
    for b, pair, _ in gt.copresence_pairs():
        per_bin[b].add(pair)
    nets = [symmetrize(per_bin[b], TimeBin(b, gt.bin_s, 0)) for b in sorted(per_bin)]
    if width_s is None or width_s == gt.bin_s:
        return nets
    if width_s % gt.bin_s:
        raise ValueError(f"width {width_s} is not a multiple of the generator bin {gt.bin_s}")
    return coarsen(nets, width_s // gt.bin_s)


@dataclass
class SynthOutput:
    files: dict[str, bytes]  # file name -> content
    ground_truth: GroundTruth
    manifest: dict

    def write(self, directory) -> dict[str, str]:
        os.makedirs(directory, exist_ok=True)
        paths = {}
        for name, data in sorted(self.files.items()):
            path = os.path.join(directory, name)
            with open(path, "wb") as fh:
                fh.write(data)
            paths[name] = path
        return paths


def _dumps(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8")


class _World:
    def __init__(self, cfg: SynthConfig, rng: np.random.Generator):
        self.cfg = cfg
        kinds = [(HOME, i) for i in range(cfg.n_users)]
        kinds += [(CLASS, c) for c in range(cfg.n_communities)]
        kinds += [(CANTEEN, 0)] + [(VENUE, v) for v in range(cfg.n_venues)]
        side = math.ceil(math.sqrt(len(kinds)))
        cells = rng.permutation(side * side)[: len(kinds)]
        self.sites: list[Site] = []
        self.index: dict[tuple[str, int], int] = {}
        for sid, ((kind, k), cell) in enumerate(zip(kinds, cells)):
            x = (cell % side - (side - 1) / 2) * cfg.site_spacing_m
            y = (cell // side - (side - 1) / 2) * cfg.site_spacing_m
            lat, lon = self.to_latlon(x, y)
            self.sites.append(Site(sid, kind, float(x), float(y), lat, lon))
            self.index[(kind, k)] = sid

        offs = (np.arange(cfg.ap_grid_n) - (cfg.ap_grid_n - 1) / 2) * cfg.ap_spacing_m
        self.aps = []  # (ap_id, site, x, y)
        for s in self.sites:
            k = 0
            for dy in offs:
                for dx in offs:
                    self.aps.append((f"ap{s.id:03d}{k:02d}", s.id, s.x + dx, s.y + dy))
                    k += 1
        self.ap_xy = np.array([(a[2], a[3]) for a in self.aps])
        self.ap_site = np.array([a[1] for a in self.aps])
        self.site_xy = np.array([(s.x, s.y) for s in self.sites])

    def to_latlon(self, x: float, y: float) -> tuple[float, float]:
        lat = self.cfg.center_lat + math.degrees(y / EARTH_RADIUS_M)
        lon = self.cfg.center_lon + math.degrees(x / (EARTH_RADIUS_M * math.cos(math.radians(self.cfg.center_lat))))
        return round(lat, 7), round(lon, 7)


def _local_ts(day: date, hour: float, zone) -> int:
    dt = datetime(day.year, day.month, day.day, tzinfo=zone) + timedelta(hours=hour)
    # wall-clock arithmetic across DST resolved by the zone's fold=0 rule
    return int(dt.timestamp())


def _day_plan(cfg, world, u, community, weekday, rng):
    """Ordered (site, arrival local hour) list for one user and day."""
    home = world.index[(HOME, u)]
    plan = [(home, 0.0)]
    if weekday < 5:
        if rng.random() >= cfg.skip_class_prob:
            room = world.index[(CLASS, community)]
            plan += [(room, 9.0), (world.index[(CANTEEN, 0)], 12.0), (room, 13.0), (home, 16.0)]
        if cfg.n_venues and rng.random() < cfg.evening_out_prob:
            venue = world.index[(VENUE, int(rng.integers(cfg.n_venues)))]
            plan += [(venue, 19.0), (home, 22.0)]
    elif cfg.n_venues and rng.random() < cfg.weekend_out_prob:
        venue = world.index[(VENUE, int(rng.integers(cfg.n_venues)))]
        plan += [(venue, 14.0), (home, 18.0)]
    return plan


def _timeline(cfg, world, plans, start_s, n_bins):
    """Per-bin site index (-1 while travelling) and travel positions for one user."""
    stays = []
    for site, t in plans:
        b = (t - start_s) // cfg.bin_s
        if stays and stays[-1][0] == site:
            continue
        stays.append([site, b])
    bounds = [s[1] for s in stays[1:]] + [n_bins]
    segs = [[s[0], s[1], e] for s, e in zip(stays, bounds) if e > s[1]]
    site_of = np.full(n_bins, -1, dtype=int)
    travel_xy = {}
    result = []
    for i, (site, b0, b1) in enumerate(segs):
        end = b1
        if i + 1 < len(segs):
            nxt = segs[i + 1][0]
            a, z = world.site_xy[site], world.site_xy[nxt]
            dist = float(np.hypot(*(z - a)))
            k = max(1, math.ceil(dist / (cfg.speed_mps * cfg.bin_s)))
            k = min(k, b1 - b0 - 1)
            end = b1 - k
            for j in range(1, k + 1):
                frac = j / (k + 1)
                travel_xy[end + j - 1] = a + frac * (z - a)
        site_of[b0:end] = site
        result.append(Stay(site, b0, end))
    return site_of, travel_xy, result


def generate(cfg: SynthConfig) -> SynthOutput:
    """Generate all channel files plus ground truth and manifest for ``cfg``."""
    cfg.validate()
    root = np.random.SeedSequence(cfg.seed)
    layout_ss, days_ss, comm_ss, survey_ss, phase_ss = root.spawn(5)
    layout_rng = np.random.default_rng(layout_ss)
    world = _World(cfg, layout_rng)
    zone = get_zone(cfg.tz)
    day0 = date.fromisoformat(cfg.start_date)
    start_s = _local_ts(day0, 0, zone)
    end_s = _local_ts(day0 + timedelta(days=cfg.n_days), 0, zone)
    n_bins = (end_s - start_s) // cfg.bin_s
    users = [user_id(i) for i in range(cfg.n_users)]
    community = [i % cfg.n_communities for i in range(cfg.n_users)]

    # social ties: planted partition
    ties = []
    for i in range(cfg.n_users):
        for j in range(i + 1, cfg.n_users):
            p = cfg.p_intra if community[i] == community[j] else cfg.p_inter
            if layout_rng.random() < p:
                ties.append((users[i], users[j]))

    # schedules, one sub-seed per simulated day
    day_rngs = [np.random.default_rng(s) for s in days_ss.spawn(cfg.n_days)]
    plans = {u: [] for u in range(cfg.n_users)}
    for d in range(cfg.n_days):
        day = day0 + timedelta(days=d)
        for u in range(cfg.n_users):
            for site, hour in _day_plan(cfg, world, u, community[u], day.weekday(), day_rngs[d]):
                plans[u].append((site, _local_ts(day, hour, zone)))

    site_of = np.empty((cfg.n_users, n_bins), dtype=int)
    travel = {}
    stays = {}
    for u in range(cfg.n_users):
        site_of[u], travel[u], stays[users[u]] = _timeline(cfg, world, plans[u], start_s, n_bins)

    phase_rng = np.random.default_rng(phase_ss)
    bt_phase = phase_rng.integers(0, cfg.bin_s, cfg.n_users)
    wifi_phase = phase_rng.integers(0, cfg.bin_s, cfg.n_users)
    loc_phase = phase_rng.integers(0, cfg.bin_s, cfg.n_users)

    bt: list[BluetoothScan] = []
    wifi: list[WifiReading] = []
    loc: list[LocationFix] = []
    copresence = []
    stay_iter = {u: iter(stays[users[u]]) for u in range(cfg.n_users)}
    current_stay = {u: next(stay_iter[u], None) for u in range(cfg.n_users)}
    # per-user seat offset, redrawn at every stay
    seat = {}
    bins_per_day = [0] * cfg.n_days
    for d in range(cfg.n_days):
        bins_per_day[d] = (_local_ts(day0 + timedelta(days=d + 1), 0, zone) - start_s) // cfg.bin_s

    d = 0
    for b in range(n_bins):
        while b >= bins_per_day[d]:
            d += 1
        rng = day_rngs[d]
        t0 = start_s + b * cfg.bin_s
        pos = np.empty((cfg.n_users, 2))
        for u in range(cfg.n_users):
            s = site_of[u, b]
            if s >= 0:
                st = current_stay[u]
                while st is not None and not (st.start_bin <= b < st.end_bin):
                    st = current_stay[u] = next(stay_iter[u], None)
                key = (u, st.start_bin)
                if key not in seat:
                    ang = rng.random() * 2 * math.pi
                    rad = cfg.seat_jitter_m * math.sqrt(rng.random())
                    seat = {k: v for k, v in seat.items() if k[0] != u}
                    seat[key] = (rad * math.cos(ang), rad * math.sin(ang))
                pos[u] = world.site_xy[s] + seat[key]
            else:
                pos[u] = travel[u][b]

        # co-presence and Bluetooth
        at_site = defaultdict(list)
        for u in range(cfg.n_users):
            if site_of[u, b] >= 0:
                at_site[site_of[u, b]].append(u)
        for s in sorted(at_site):
            group = at_site[s]
            if len(group) > 1:
                copresence.append((b, int(s), [users[u] for u in group]))
        for u in range(cfg.n_users):
            t = int(t0 + bt_phase[u])
            s = site_of[u, b]
            if s >= 0:
                for v in at_site[s]:
                    if v == u:
                        continue
                    dist = float(np.hypot(*(pos[u] - pos[v])))
                    if dist <= cfg.bt_range_m and rng.random() < cfg.bt_detect_prob:
                        r = expected_rssi(cfg, dist) + rng.normal(0, cfg.rssi_noise_db)
                        bt.append(BluetoothScan(users[u], t, device_id(v), int(np.clip(round(float(r)), -120, 0))))
            if cfg.n_external_devices and rng.random() < cfg.external_sighting_prob:
                ext = f"ext{int(rng.integers(cfg.n_external_devices)):04d}"
                bt.append(BluetoothScan(users[u], t, ext, int(rng.integers(-95, -60))))

        # WiFi
        for u in range(cfg.n_users):
            t = int(t0 + wifi_phase[u])
            s = site_of[u, b]
            if s >= 0:
                idx = np.nonzero(world.ap_site == s)[0]
            else:
                near = np.hypot(*(world.site_xy - pos[u]).T) <= world.cfg.site_spacing_m / 2
                idx = np.nonzero(np.isin(world.ap_site, np.nonzero(near)[0]))[0]
            if len(idx) == 0:
                continue
            dists = np.hypot(*(world.ap_xy[idx] - pos[u]).T)
            rssi = expected_rssi(cfg, dists)
            if cfg.rssi_noise_db > 0:
                rssi = rssi + rng.normal(0, cfg.rssi_noise_db, len(idx))
            rssi = np.clip(np.round(rssi), -120, 0)
            for k, r in zip(idx, rssi):
                if r >= cfg.rssi_floor_dbm:
                    wifi.append(WifiReading(users[u], t, world.aps[k][0], int(r)))

        # location fixes
        for u in range(cfg.n_users):
            t = int(t0 + loc_phase[u])
            coarse = rng.random() < cfg.coarse_fix_prob
            acc = float(rng.uniform(100, 1000) if coarse else rng.uniform(5, 40))
            acc = round(acc, 1)
            x, y = pos[u]
            if cfg.fix_noise_scale > 0:
                x += rng.normal(0, cfg.fix_noise_scale * acc)
                y += rng.normal(0, cfg.fix_noise_scale * acc)
            lat, lon = world.to_latlon(float(x), float(y))
            loc.append(LocationFix(users[u], t, lat, lon, acc))
            if site_of[u, b] >= 0:
                st = current_stay[u]
                if st.first_fix_t is None:
                    st.first_fix_t = t
                st.last_fix_t = t

    comm, contacts = _communications(cfg, users, ties, start_s, zone, day0, np.random.default_rng(comm_ss))
    survey, key, traits = _survey(cfg, users, np.random.default_rng(survey_ss))

    channels = {
        "bluetooth": sorted(bt, key=lambda r: (r.observer, r.t, r.seen)),
        "wifi": sorted(wifi, key=lambda r: (r.user, r.t)),
        "location": sorted(loc, key=lambda r: (r.user, r.t)),
        "comm": sorted(comm, key=lambda r: (r.user, r.t, r.peer, r.channel, r.direction)),
        "survey": survey,
    }
    counts = {k: len(v) for k, v in channels.items()}
    per_user = {k: {u: 0 for u in users} for k in channels}
    for k, recs in channels.items():
        for r in recs:
            per_user[k][r[0]] += 1
    occupied = {(r.user, r.t // 600) for r in channels["wifi"]}
    wifi_bins = {u: 0 for u in users}
    for u, _ in occupied:
        wifi_bins[u] += 1

    gt = GroundTruth(
        bin_s=cfg.bin_s,
        start_s=start_s,
        n_bins=n_bins,
        users=users,
        sites=[asdict(s) for s in world.sites],
        copresence=copresence,
        stays=stays,
        ties=ties,
        contacts=contacts,
        counts=counts,
        per_user_counts=per_user,
        wifi_occupied_bins=wifi_bins,
        traits=traits,
    )
    manifest = {
        "seed": cfg.seed,
        "config": asdict(cfg),
        "counts": counts,
        "per_user": per_user,
        "wifi_occupied_bins": wifi_bins,
        "n_bins": n_bins,
        "start_s": start_s,
    }
    roster = "user_id,device_id\n" + "".join(f"{u},{device_id(i)}\n" for i, u in enumerate(users))
    files = {FILENAMES[k]: serialize_channel(v, k) for k, v in channels.items()}
    files[ROSTER_FILENAME] = roster.encode("utf-8")
    files["key.csv"] = key_csv(key).encode("utf-8")
    files["manifest.json"] = _dumps(manifest)
    files["ground_truth.json"] = _dumps(gt.to_dict())
    return SynthOutput(files, gt, manifest)


_CALL_HOURS = np.array([1, 1, 0, 0, 0, 0, 1, 2, 4, 5, 6, 6, 4, 5, 6, 7, 8, 10, 8, 6, 5, 4, 3, 2], dtype=float)
_SMS_HOURS = np.array([4, 3, 2, 1, 0, 0, 1, 3, 5, 6, 6, 6, 4, 6, 6, 6, 6, 6, 4, 6, 9, 10, 9, 7], dtype=float)


def _communications(cfg, users, ties, start_s, zone, day0, rng):
    events = []
    contacts = {u: {"call": set(), "sms": set()} for u in users}
    pairs = list(ties)
    for u in users:
        for k in range(cfg.external_contacts):
            pairs.append((u, f"x{u}{k}"))

    def when(day, hours):
        h = int(rng.choice(24, p=hours / hours.sum()))
        return _local_ts(day, h, zone) + int(rng.integers(3600))

    for d in range(cfg.n_days):
        day = day0 + timedelta(days=d)
        for a, b in pairs:
            for _ in range(int(rng.poisson(cfg.calls_per_day))):
                src, dst = (a, b) if rng.random() < 0.5 else (b, a)
                t = when(day, _CALL_HOURS)
                missed = rng.random() < cfg.missed_prob
                dur = 0 if missed else int(round(cfg.call_median_s * math.exp(rng.normal(0, cfg.call_sigma))))
                if src in contacts:
                    events.append(CommEvent(src, t, peer_hash(dst), "call", "outgoing", dur))
                    contacts[src]["call"].add(peer_hash(dst))
                if dst in contacts:
                    direction = "missed" if missed else "incoming"
                    events.append(CommEvent(dst, t, peer_hash(src), "call", direction, dur if not missed else 0))
                    contacts[dst]["call"].add(peer_hash(src))
            for _ in range(int(rng.poisson(cfg.sms_per_day))):
                src, dst = (a, b) if rng.random() < 0.5 else (b, a)
                t = when(day, _SMS_HOURS)
                if src in contacts:
                    events.append(CommEvent(src, t, peer_hash(dst), "sms", "outgoing", 0))
                    contacts[src]["sms"].add(peer_hash(dst))
                if dst in contacts:
                    events.append(CommEvent(dst, t, peer_hash(src), "sms", "incoming", 0))
                    contacts[dst]["sms"].add(peer_hash(src))
    return events, {u: {k: sorted(v) for k, v in c.items()} for u, c in contacts.items()}


def _survey(cfg, users, rng):
    key = {}
    for t in TRAITS:
        for k in range(cfg.items_per_trait):
            key[f"{t}{k + 1:02d}"] = (t, k % 2 == 1)
    answers = []
    traits = {}
    for u in users:
        latent = {t: float(np.clip(rng.normal(3.3, 0.6), 1, 5)) for t in TRAITS}
        traits[u] = latent
        for item in sorted(key):
            t, rev = key[item]
            raw = int(np.clip(round(latent[t] + rng.normal(0, 0.5)), 1, 5))
            answers.append(SurveyAnswer(u, item, 6 - raw if rev else raw))
    return answers, key, traits
