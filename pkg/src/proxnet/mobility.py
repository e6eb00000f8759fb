"""Location analytics: accuracy CDF, radius of gyration, KDE, stops, transitions, hexbins."""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from proxnet.core import (
    EARTH_RADIUS_M,
    EmptyInputError,
    GeoPoint,
    InsufficientDataError,
    InvalidParameterError,
    haversine_deg,
)
from proxnet.ingest import LocationFix

DEFAULT_ACCURACY_MAX_M = 200.0
DEFAULT_STOP_D_M = 50.0
DEFAULT_STOP_T_S = 600
DEFAULT_MERGE_RADIUS_M = 100.0
N_BANDWIDTHS = 30


def filter_accuracy(fixes: Iterable[LocationFix], max_m: float | None = DEFAULT_ACCURACY_MAX_M) -> list[LocationFix]:
    if max_m is None:
        return list(fixes)
    return [f for f in fixes if f.accuracy <= max_m]


def by_user(fixes: Iterable[LocationFix]) -> dict[str, list[LocationFix]]:
    out = defaultdict(list)
    for f in fixes:
        out[f.user].append(f)
    return {u: sorted(v, key=lambda f: f.t) for u, v in sorted(out.items())}


@dataclass(frozen=True)
class AccuracyCdf:
    thresholds: np.ndarray
    fractions: np.ndarray

    def at(self, x: float) -> float:
        """Fraction of samples with accuracy <= ``x``."""
        i = np.searchsorted(self.thresholds, x, side="right")
        return float(self.fractions[i - 1]) if i else 0.0


def accuracy_cdf(fixes: Sequence[LocationFix]) -> AccuracyCdf:
    if len(fixes) == 0:
        raise EmptyInputError("accuracy CDF of no fixes")
    acc = np.sort(np.array([f.accuracy for f in fixes], dtype=float))
    values, counts = np.unique(acc, return_counts=True)
    return AccuracyCdf(values, np.cumsum(counts) / len(acc))


def _centroid(lats, lons) -> tuple[float, float]:
    return math.fsum(lats) / len(lats), math.fsum(lons) / len(lons)


def radius_of_gyration(fixes: Sequence[LocationFix]) -> float:
    """RMS haversine distance of the fixes from their mean lat/lon, in km."""
    if not fixes:
        raise EmptyInputError("radius of gyration of no fixes")
    lat_c, lon_c = _centroid([f.lat for f in fixes], [f.lon for f in fixes])
    sq = math.fsum(haversine_deg(f.lat, f.lon, lat_c, lon_c) ** 2 for f in fixes)
    return math.sqrt(sq / len(fixes)) / 1000.0


class GaussianKDE:
    """One-dimensional Gaussian kernel density estimate with a fixed bandwidth."""

    def __init__(self, values, bandwidth: float):
        if bandwidth <= 0:
            raise InvalidParameterError("bandwidth must be positive")
        self.values = np.asarray(values, dtype=float)
        self.bandwidth = float(bandwidth)

    def __call__(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        z = (x[:, None] - self.values[None, :]) / self.bandwidth
        dens = np.exp(-0.5 * z * z).sum(axis=1) / (len(self.values) * self.bandwidth * math.sqrt(2 * math.pi))
        return dens


def loo_log_likelihood(values, bandwidth: float) -> float:
    """Mean leave-one-out log-likelihood of ``values`` under a Gaussian KDE."""
    x = np.asarray(values, dtype=float)
    n = len(x)
    z = (x[:, None] - x[None, :]) / bandwidth
    logk = -0.5 * z * z
    np.fill_diagonal(logk, -np.inf)
    ll = logsumexp(logk, axis=1) - math.log((n - 1) * bandwidth * math.sqrt(2 * math.pi))
    return float(np.mean(ll))


def default_bandwidths(values, n: int = N_BANDWIDTHS) -> np.ndarray:
    x = np.asarray(values, dtype=float)
    spread = float(np.ptp(x))
    if spread == 0:
        spread = max(abs(float(x[0])), 1.0)
    return np.geomspace(spread * 1e-3, spread, n)


def kde(values, bandwidths=None) -> tuple[GaussianKDE, float]:
    """Gaussian KDE whose bandwidth maximizes leave-one-out log-likelihood.

    Parameters
    ----------
    values : array_like
        At least five samples.
    bandwidths : array_like, optional
        Candidate grid; defaults to 30 log-spaced values spanning three
        decades below the sample range.

    Returns
    -------
    (GaussianKDE, float)
        The fitted density and the selected bandwidth.
    """
    x = np.asarray(values, dtype=float)
    if len(x) < 5:
        raise InsufficientDataError(f"KDE needs at least 5 values, got {len(x)}")
    grid = default_bandwidths(x) if bandwidths is None else np.asarray(bandwidths, dtype=float)
    if grid.size == 0 or np.any(grid <= 0):
        raise InvalidParameterError("bandwidth candidates must be positive")
    scores = [loo_log_likelihood(x, h) for h in grid]
    # first maximum: ties resolve to the smallest candidate
    best = float(grid[int(np.argmax(scores))])
    return GaussianKDE(x, best), best


def silverman_bandwidth(values) -> float:
    x = np.asarray(values, dtype=float)
    n = len(x)
    sd = np.std(x, ddof=1)
    iqr = np.subtract(*np.percentile(x, [75, 25]))
    return 0.9 * min(sd, iqr / 1.34) * n ** (-0.2)


def rg_density(rg_km, log_space: bool = True, bandwidths=None) -> tuple[GaussianKDE, float]:
    """KDE of radii of gyration, by default over log10(km)."""
    x = np.asarray(rg_km, dtype=float)
    if log_space:
        x = np.log10(x[x > 0])
    return kde(x, bandwidths)


@dataclass(frozen=True)
class StopLocation:
    user: str
    centroid: GeoPoint
    start: int
    end: int
    member_count: int

    @property
    def duration(self) -> int:
        return self.end - self.start


def _close(user, members, min_duration):
    if members[-1].t - members[0].t < min_duration:
        return None
    lat, lon = _centroid([f.lat for f in members], [f.lon for f in members])
    return StopLocation(user, GeoPoint(lat, lon), members[0].t, members[-1].t, len(members))


def extract_stops(
    fixes: Sequence[LocationFix], d_m: float = DEFAULT_STOP_D_M, t_s: float = DEFAULT_STOP_T_S
) -> list[StopLocation]:
    """Sequential stop detection over one user's time-sorted fixes.

    A candidate grows with consecutive fixes as long as the new fix, and every
    earlier member, stays within ``d_m`` of the updated running centroid.  When
    a fix breaks the candidate it seeds the next one; candidates spanning at
    least ``t_s`` seconds become stops.
    """
    if not d_m > 0 or not t_s > 0:
        raise InvalidParameterError(f"stop distance and duration must be positive, got D={d_m}, T={t_s}")
    stops = []
    members: list[LocationFix] = []
    sum_lat = sum_lon = 0.0
    for f in fixes:
        if members:
            n = len(members) + 1
            lat_c, lon_c = (sum_lat + f.lat) / n, (sum_lon + f.lon) / n
            fits = haversine_deg(f.lat, f.lon, lat_c, lon_c) <= d_m and all(
                haversine_deg(m.lat, m.lon, lat_c, lon_c) <= d_m for m in members
            )
            if fits:
                members.append(f)
                sum_lat += f.lat
                sum_lon += f.lon
                continue
            stop = _close(f.user, members, t_s)
            if stop is not None:
                stops.append(stop)
        members = [f]
        sum_lat, sum_lon = f.lat, f.lon
    if members:
        stop = _close(members[0].user, members, t_s)
        if stop is not None:
            stops.append(stop)
    return stops


@dataclass(frozen=True)
class TransitionGraph:
    centroids: tuple[GeoPoint, ...]  # indexed by cluster id
    weights: Mapping[tuple[int, int], int]
    assignment: Mapping[tuple[str, int], int]  # (user, stop start) -> cluster

    @property
    def total_weight(self) -> int:
        return sum(self.weights.values())


def _single_linkage(points: Sequence[GeoPoint], radius_m: float) -> list[int]:
    parent = list(range(len(points)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(points)):
        for j in range(i + 1, len(points)):
            if haversine_deg(points[i].lat, points[i].lon, points[j].lat, points[j].lon) <= radius_m:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
    roots = [find(i) for i in range(len(points))]
    relabel: dict[int, int] = {}
    return [relabel.setdefault(r, len(relabel)) for r in roots]


def transition_graph(
    stops: Iterable[StopLocation], merge_radius_m: float = DEFAULT_MERGE_RADIUS_M
) -> TransitionGraph:
    """Merge stop centroids by single linkage and count consecutive-stop transitions.

    Each user's consecutive stop pair adds one to the directed edge between
    their clusters, self-transitions included.
    """
    per_user = defaultdict(list)
    for s in stops:
        per_user[s.user].append(s)
    ordered = [s for u in sorted(per_user) for s in sorted(per_user[u], key=lambda s: s.start)]
    labels = _single_linkage([s.centroid for s in ordered], merge_radius_m)

    members = defaultdict(list)
    for s, c in zip(ordered, labels):
        members[c].append(s.centroid)
    centroids = tuple(
        GeoPoint(*_centroid([p.lat for p in members[c]], [p.lon for p in members[c]])) for c in range(len(members))
    )
    assignment = {(s.user, s.start): c for s, c in zip(ordered, labels)}
    weights: Counter[tuple[int, int]] = Counter()
    for u in sorted(per_user):
        seq = [assignment[(u, s.start)] for s in sorted(per_user[u], key=lambda s: s.start)]
        weights.update(zip(seq, seq[1:]))
    return TransitionGraph(centroids, dict(sorted(weights.items())), assignment)


SQRT3 = math.sqrt(3.0)


def project(lats, lons, lat0: float, lon0: float) -> tuple[np.ndarray, np.ndarray]:
    """Equirectangular projection to meters around ``(lat0, lon0)``."""
    lats = np.asarray(lats, dtype=float)
    lons = np.asarray(lons, dtype=float)
    x = np.radians(lons - lon0) * math.cos(math.radians(lat0)) * EARTH_RADIUS_M
    y = np.radians(lats - lat0) * EARTH_RADIUS_M
    return x, y


def hex_round(qf: np.ndarray, rf: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Round fractional axial coordinates to the containing hexagon."""
    sf = -qf - rf
    q, r, s = np.round(qf), np.round(rf), np.round(sf)
    dq, dr, ds = np.abs(q - qf), np.abs(r - rf), np.abs(s - sf)
    fix_q = (dq > dr) & (dq > ds)
    fix_r = ~fix_q & (dr > ds)
    q = np.where(fix_q, -r - s, q)
    r = np.where(fix_r, -q - s, r)
    return q.astype(int), r.astype(int)


def xy_to_hex(x, y, size: float) -> tuple[np.ndarray, np.ndarray]:
    """Pointy-top axial coordinates of planar points; ``size`` is center-to-corner."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    qf = (SQRT3 / 3 * x - y / 3) / size
    rf = (2 / 3 * y) / size
    return hex_round(qf, rf)


def hex_center(q: int, r: int, size: float) -> tuple[float, float]:
    return size * SQRT3 * (q + r / 2), size * 1.5 * r


def hexbin(fixes: Sequence[LocationFix], cell_size_m: float) -> dict[tuple[int, int], int]:
    """Count fixes per pointy-top hexagon of a local projection centered on the data centroid."""
    if not cell_size_m > 0:
        raise InvalidParameterError("hex cell size must be positive")
    if not fixes:
        return {}
    lats = [f.lat for f in fixes]
    lons = [f.lon for f in fixes]
    lat0, lon0 = _centroid(lats, lons)
    x, y = project(lats, lons, lat0, lon0)
    q, r = xy_to_hex(x, y, cell_size_m)
    return dict(sorted(Counter(zip(q.tolist(), r.tolist())).items()))
