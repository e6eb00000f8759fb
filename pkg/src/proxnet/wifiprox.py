"""Proximity inference from WiFi scan similarity, scored against Bluetooth.

Scans of two users falling in the same 10-minute bin are compared pair-wise;
the pair is considered proximate in that bin if at least one comparison
passes the measure's threshold.
"""

from __future__ import annotations

import csv
import io
import itertools
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence, Union

from proxnet.btnet import BinnedNetwork, symmetrize
from proxnet.core import InvalidParameterError, TimeBin, bin_index
from proxnet.ingest import WifiReading

WIFI_BIN_S = 600

OVERLAP_COUNT = "overlap_count"
OVERLAP_COEFFICIENT = "overlap_coefficient"
MEAN_MANHATTAN = "mean_manhattan"
STRONGEST_AP = "strongest_ap"
MEASURES = (OVERLAP_COUNT, OVERLAP_COEFFICIENT, MEAN_MANHATTAN, STRONGEST_AP)

DEFAULT_SWEEPS = {
    OVERLAP_COUNT: [1, 2, 3, 4, 5, 6, 7, 8, 9, 10],
    OVERLAP_COEFFICIENT: [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
    MEAN_MANHATTAN: [0, 1, 2, 3, 4, 5, 6, 8, 10, 12, 15, 20],
    STRONGEST_AP: [True],
}


@dataclass(frozen=True)
class WifiScan:
    user: str
    t: int
    readings: Mapping[str, int]

    def __post_init__(self):
        if not self.readings:
            raise InvalidParameterError("a WiFi scan needs at least one reading")


Scan = Union[WifiScan, Mapping[str, int]]


def _readings(x: Scan) -> Mapping[str, int]:
    return x.readings if isinstance(x, WifiScan) else x


def assemble_scans(readings: Iterable[WifiReading]) -> list[WifiScan]:
    """Group consecutive readings sharing ``(user, t)`` into scans.

    A repeated AP within one scan keeps its strongest RSSI.
    """
    scans = []
    for (user, t), group in itertools.groupby(readings, key=lambda r: (r.user, r.t)):
        aps: dict[str, int] = {}
        for r in group:
            if r.ap not in aps or r.rssi > aps[r.ap]:
                aps[r.ap] = r.rssi
        scans.append(WifiScan(user, t, aps))
    return scans


GroupedScans = dict[int, dict[str, list[WifiScan]]]


def group_scans(
    readings: Iterable[WifiReading], width_s: int = WIFI_BIN_S, origin_s: int = 0
) -> GroupedScans:
    """Assemble scans and file them under ``bin -> user -> scans``."""
    grouped: dict[int, dict[str, list[WifiScan]]] = defaultdict(lambda: defaultdict(list))
    for scan in assemble_scans(readings):
        grouped[bin_index(scan.t, width_s, origin_s)][scan.user].append(scan)
    return {b: {u: grouped[b][u] for u in sorted(grouped[b])} for b in sorted(grouped)}


def coverage(grouped: GroupedScans) -> dict[int, frozenset[str]]:
    """Users holding at least one scan, per bin."""
    return {b: frozenset(users) for b, users in grouped.items()}


def overlap_count(x: Scan, y: Scan) -> int:
    return len(_readings(x).keys() & _readings(y).keys())


def overlap_coefficient(x: Scan, y: Scan) -> float:
    rx, ry = _readings(x), _readings(y)
    if not rx or not ry:
        raise InvalidParameterError("overlap coefficient is undefined for an empty scan")
    return len(rx.keys() & ry.keys()) / min(len(rx), len(ry))


def mean_manhattan(x: Scan, y: Scan) -> float | None:
    """Mean absolute RSSI difference (dB) over shared APs; ``None`` if none are shared."""
    rx, ry = _readings(x), _readings(y)
    shared = rx.keys() & ry.keys()
    if not shared:
        return None
    return sum(abs(rx[ap] - ry[ap]) for ap in shared) / len(shared)


def strongest_ap(x: Scan) -> str:
    r = _readings(x)
    if not r:
        raise InvalidParameterError("strongest AP is undefined for an empty scan")
    # max RSSI, ties to the lexicographically smallest id
    return min(r, key=lambda ap: (-r[ap], ap))


def strongest_ap_match(x: Scan, y: Scan) -> bool:
    return strongest_ap(x) == strongest_ap(y)


@dataclass(frozen=True)
class SimilarityMeasure:
    kind: str
    threshold: float | int | bool

    def __post_init__(self):
        k, th = self.kind, self.threshold
        if k == OVERLAP_COUNT:
            if isinstance(th, bool) or int(th) != th or th < 1:
                raise InvalidParameterError(f"overlap count threshold must be an integer >= 1, got {th!r}")
        elif k == OVERLAP_COEFFICIENT:
            if not 0 < th <= 1:
                raise InvalidParameterError(f"overlap coefficient threshold must be in (0, 1], got {th!r}")
        elif k == MEAN_MANHATTAN:
            if th < 0:
                raise InvalidParameterError(f"Manhattan distance threshold must be >= 0, got {th!r}")
        elif k == STRONGEST_AP:
            if th is not True and th != 1:
                raise InvalidParameterError("strongest AP measure only takes threshold True")
        else:
            raise InvalidParameterError(f"unknown similarity measure: {k!r}")

    def accepts(self, score) -> bool:
        """Whether a best-over-scan-pairs score (see :func:`pair_scores`) passes."""
        if score is None:
            return False
        if self.kind == OVERLAP_COUNT:
            return score >= self.threshold
        if self.kind == OVERLAP_COEFFICIENT:
            return score >= self.threshold
        if self.kind == MEAN_MANHATTAN:
            return score <= self.threshold
        return bool(score)

    def compare(self, x: Scan, y: Scan) -> bool:
        """Single scan-pair comparison."""
        return self.accepts(scan_pair_score(self.kind, x, y))


def scan_pair_score(kind: str, x: Scan, y: Scan):
    """Raw similarity of two scans; ``None`` when the measure needs a shared AP and there is none."""
    if kind == OVERLAP_COUNT:
        return overlap_count(x, y)
    if overlap_count(x, y) == 0:
        return None
    if kind == OVERLAP_COEFFICIENT:
        return overlap_coefficient(x, y)
    if kind == MEAN_MANHATTAN:
        return mean_manhattan(x, y)
    if kind == STRONGEST_AP:
        return strongest_ap_match(x, y)
    raise InvalidParameterError(f"unknown similarity measure: {kind!r}")


def _better(kind, a, b):
    if a is None:
        return b
    if b is None:
        return a
    if kind == MEAN_MANHATTAN:
        return min(a, b)
    return max(a, b)


def _candidate_pairs(users: Mapping[str, list[WifiScan]]) -> set[tuple[str, str]]:
    by_ap = defaultdict(set)
    for user, scans in users.items():
        for s in scans:
            for ap in s.readings:
                by_ap[ap].add(user)
    pairs = set()
    for holders in by_ap.values():
        if len(holders) > 1:
            pairs.update(itertools.combinations(sorted(holders), 2))
    return pairs


def pair_scores(grouped: GroupedScans, kind: str) -> dict[int, dict[tuple[str, str], object]]:
    """Best score over all scan pairs for each user pair and bin.

    Only pairs sharing at least one AP somewhere in the bin are scored; every
    other pair has overlap count 0 and fails every threshold.  Because each
    threshold test is monotone in the score, a pair passes a threshold iff its
    best score does.
    """
    if kind not in MEASURES:
        raise InvalidParameterError(f"unknown similarity measure: {kind!r}")
    out = {}
    for b, users in grouped.items():
        scores = {}
        for u, v in sorted(_candidate_pairs(users)):
            best = None
            for x in users[u]:
                for y in users[v]:
                    best = _better(kind, best, scan_pair_score(kind, x, y))
            if best is not None:
                scores[(u, v)] = best
        if scores:
            out[b] = scores
    return out


def networks_from_scores(
    scores: Mapping[int, Mapping[tuple[str, str], object]],
    measure: SimilarityMeasure,
    width_s: int = WIFI_BIN_S,
    origin_s: int = 0,
) -> list[BinnedNetwork]:
    nets = []
    for b in sorted(scores):
        edges = [p for p, s in scores[b].items() if measure.accepts(s)]
        if edges:
            nets.append(symmetrize(edges, TimeBin(b, width_s, origin_s)))
    return nets


def infer_network(
    grouped: GroupedScans, measure: SimilarityMeasure, width_s: int = WIFI_BIN_S, origin_s: int = 0
) -> list[BinnedNetwork]:
    """Per-bin networks with an edge wherever some scan pair passes ``measure``."""
    return networks_from_scores(pair_scores(grouped, measure.kind), measure, width_s, origin_s)


class EvalRow(NamedTuple):
    threshold: float | int | bool
    tp: int
    fp: int
    fn: int
    ppv: float | None
    recall: float | None


@dataclass(frozen=True)
class EvalReport:
    measure: str
    rows: tuple[EvalRow, ...]

    def to_dict(self) -> dict:
        return {"measure": self.measure, "rows": [r._asdict() for r in self.rows]}

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(["measure", *EvalRow._fields])
        for r in self.rows:
            w.writerow([self.measure, *("" if v is None else v for v in r)])
        return buf.getvalue()


def _edge_bins(nets: Iterable[BinnedNetwork]) -> set[tuple[int, tuple[str, str]]]:
    return {(n.bin.index, e) for n in nets for e in n.edges}


def _binning(nets: Sequence[BinnedNetwork]) -> set[tuple[int, int]]:
    return {(n.bin.width_s, n.bin.origin_s) for n in nets}


def confusion(
    wifi_nets: Sequence[BinnedNetwork],
    bt_nets: Sequence[BinnedNetwork],
    cover: Mapping[int, frozenset[str]] | None = None,
) -> tuple[int, int, int]:
    """``(TP, FP, FN)`` counted over (bin, pair) events inside the candidate universe."""
    if len(_binning(wifi_nets) | _binning(bt_nets)) > 1:
        raise InvalidParameterError("WiFi and Bluetooth networks use different binning")
    predicted = _edge_bins(wifi_nets)
    truth = _edge_bins(bt_nets)
    if cover is not None:
        def inside(ev):
            users = cover.get(ev[0], ())
            return ev[1][0] in users and ev[1][1] in users
        predicted = set(filter(inside, predicted))
        truth = set(filter(inside, truth))
    tp = len(predicted & truth)
    return tp, len(predicted - truth), len(truth - predicted)


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def evaluate(
    wifi_nets: Mapping[object, Sequence[BinnedNetwork]],
    bt_nets: Sequence[BinnedNetwork],
    measure: str,
    cover: Mapping[int, frozenset[str]] | None = None,
) -> EvalReport:
    """Precision (PPV) and recall of WiFi-inferred networks, one row per threshold.

    ``wifi_nets`` maps each threshold to its inferred networks.  With
    ``cover`` given, only (bin, pair) events where both users have WiFi data
    count; PPV with no positive calls (and recall with no reference events)
    is reported as ``None``.
    """
    rows = []
    for th in sorted(wifi_nets):
        tp, fp, fn = confusion(wifi_nets[th], bt_nets, cover)
        rows.append(EvalRow(th, tp, fp, fn, _ratio(tp, tp + fp), _ratio(tp, tp + fn)))
    return EvalReport(measure, tuple(rows))


def evaluate_measure(
    grouped: GroupedScans,
    bt_nets: Sequence[BinnedNetwork],
    kind: str,
    thresholds: Sequence | None = None,
    width_s: int = WIFI_BIN_S,
    origin_s: int = 0,
) -> EvalReport:
    """Sweep one measure's thresholds against the Bluetooth reference."""
    thresholds = DEFAULT_SWEEPS[kind] if thresholds is None else thresholds
    scores = pair_scores(grouped, kind)
    nets = {
        th: networks_from_scores(scores, SimilarityMeasure(kind, th), width_s, origin_s) for th in thresholds
    }
    return evaluate(nets, bt_nets, kind, coverage(grouped))

