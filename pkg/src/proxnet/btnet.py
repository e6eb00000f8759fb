"""Bluetooth sightings to per-bin proximity networks and windowed aggregates."""

from __future__ import annotations

import csv
import io
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from proxnet.core import InvalidParameterError, TimeBin, bin_index
from proxnet.ingest import BluetoothScan

DEFAULT_BIN_S = 300

Edge = tuple[str, str]


def canonical(a: str, b: str) -> Edge:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class BinnedNetwork:
    bin: TimeBin
    edges: frozenset[Edge]
    nodes: frozenset[str]

    def __post_init__(self):
        for a, b in self.edges:
            if a >= b:
                raise InvalidParameterError(f"edge {(a, b)} is a self-loop or not canonical")
            if a not in self.nodes or b not in self.nodes:
                raise InvalidParameterError(f"edge {(a, b)} has an endpoint outside the node set")

    @property
    def width_s(self) -> int:
        return self.bin.width_s


@dataclass(frozen=True)
class WeightedNetwork:
    window: tuple[int, int]  # [start bin, end bin)
    weights: Mapping[Edge, int]
    width_s: int = DEFAULT_BIN_S
    origin_s: int = 0

    @property
    def edges(self) -> frozenset[Edge]:
        return frozenset(self.weights)

    @property
    def nodes(self) -> frozenset[str]:
        return frozenset(u for e in self.weights for u in e)

    @property
    def start_s(self) -> int:
        return self.origin_s + self.window[0] * self.width_s


def build_directed_observations(
    scans: Iterable[BluetoothScan],
    device_owner: Mapping[str, str],
    width_s: int = DEFAULT_BIN_S,
    origin_s: int = 0,
    rssi_min: int | None = None,
) -> dict[int, set[tuple[str, str]]]:
    """Collect per-bin directed ``(observer, observed)`` participant pairs.

    Sightings of devices not in ``device_owner`` (external devices) and
    self-sightings produce no pair.  When ``rssi_min`` is set, sightings
    weaker than it, or without an RSSI, are ignored.
    """
    if width_s <= 0:
        raise InvalidParameterError(f"bin width must be positive, got {width_s}")
    out: dict[int, set[tuple[str, str]]] = defaultdict(set)
    for s in scans:
        owner = device_owner.get(s.seen)
        if owner is None or owner == s.observer:
            continue
        if rssi_min is not None and (s.rssi is None or s.rssi < rssi_min):
            continue
        out[bin_index(s.t, width_s, origin_s)].add((s.observer, owner))
    return dict(out)


def symmetrize(pairs: Iterable[tuple[str, str]], bin: TimeBin) -> BinnedNetwork:
    """Undirected network of one bin: ``{i, j}`` iff ``i -> j`` or ``j -> i``.

    Accepts its own output edges, so it is idempotent.
    """
    edges = frozenset(canonical(a, b) for a, b in pairs if a != b)
    nodes = frozenset(u for e in edges for u in e)
    return BinnedNetwork(bin, edges, nodes)


def bin_networks(
    directed: Mapping[int, Iterable[tuple[str, str]]], width_s: int = DEFAULT_BIN_S, origin_s: int = 0
) -> list[BinnedNetwork]:
    """Symmetrize every bin; bins without edges are omitted."""
    nets = []
    for idx in sorted(directed):
        net = symmetrize(directed[idx], TimeBin(idx, width_s, origin_s))
        if net.edges:
            nets.append(net)
    return nets


def build_networks(
    scans: Iterable[BluetoothScan],
    device_owner: Mapping[str, str],
    width_s: int = DEFAULT_BIN_S,
    origin_s: int = 0,
    rssi_min: int | None = None,
) -> list[BinnedNetwork]:
    directed = build_directed_observations(scans, device_owner, width_s, origin_s, rssi_min)
    return bin_networks(directed, width_s, origin_s)


def _check_binning(nets: Sequence[BinnedNetwork]) -> tuple[int, int] | None:
    keys = {(n.bin.width_s, n.bin.origin_s) for n in nets}
    if len(keys) > 1:
        raise InvalidParameterError(f"networks use mixed binning: {sorted(keys)}")
    return next(iter(keys)) if keys else None


def aggregate(
    nets: Sequence[BinnedNetwork],
    window: tuple[int, int] | None = None,
    width_s: int | None = None,
    origin_s: int | None = None,
) -> WeightedNetwork:
    """Weight each edge by the number of bins in ``window`` where it is active.

    ``window`` is a half-open ``[start, end)`` range of bin indices; by
    default it spans all given bins.
    """
    binning = _check_binning(nets)
    if binning is not None:
        width_s = binning[0] if width_s is None else width_s
        origin_s = binning[1] if origin_s is None else origin_s
        if (width_s, origin_s) != binning:
            raise InvalidParameterError("requested binning differs from the networks' binning")
    width_s = DEFAULT_BIN_S if width_s is None else width_s
    origin_s = 0 if origin_s is None else origin_s
    if window is None:
        idx = [n.bin.index for n in nets]
        window = (min(idx), max(idx) + 1) if idx else (0, 0)
    start, end = window
    weights: Counter[Edge] = Counter()
    for n in nets:
        if start <= n.bin.index < end:
            weights.update(n.edges)
    return WeightedNetwork((start, end), dict(sorted(weights.items())), width_s, origin_s)


def aggregate_windows(nets: Sequence[BinnedNetwork], window_bins: int) -> list[WeightedNetwork]:
    """Aggregate consecutive, epoch-aligned windows of ``window_bins`` bins each.

    Only windows containing at least one active bin are returned.
    """
    if window_bins < 1:
        raise InvalidParameterError("window must span at least one bin")
    binning = _check_binning(nets)
    if binning is None:
        return []
    groups: dict[int, list[BinnedNetwork]] = defaultdict(list)
    for n in nets:
        groups[n.bin.index // window_bins].append(n)
    return [
        aggregate(groups[w], (w * window_bins, (w + 1) * window_bins), *binning) for w in sorted(groups)
    ]


def coarsen(nets: Sequence[BinnedNetwork], factor: int) -> list[BinnedNetwork]:
    """Merge groups of ``factor`` consecutive bins into wider bins (edge union)."""
    if factor < 1:
        raise InvalidParameterError("coarsening factor must be >= 1")
    binning = _check_binning(nets)
    if binning is None:
        return []
    width, origin = binning
    grouped: dict[int, set[Edge]] = defaultdict(set)
    for n in nets:
        grouped[n.bin.index // factor].update(n.edges)
    return [symmetrize(grouped[i], TimeBin(i, width * factor, origin)) for i in sorted(grouped)]


@dataclass(frozen=True)
class BinActivity:
    bins: tuple[int, ...]
    node_counts: tuple[int, ...]
    edge_counts: tuple[int, ...]

    @property
    def mean_nodes(self) -> float:
        return sum(self.node_counts) / len(self.node_counts) if self.node_counts else 0.0

    @property
    def mean_edges(self) -> float:
        return sum(self.edge_counts) / len(self.edge_counts) if self.edge_counts else 0.0


def bin_activity_stats(nets: Sequence[BinnedNetwork], window: tuple[int, int] | None = None) -> BinActivity:
    """Per-bin active node and edge counts.

    Without ``window`` only the given bins are averaged.  With a window, every
    bin index in ``[start, end)`` counts, empty ones contributing zeros.
    """
    by_idx = {n.bin.index: n for n in nets}
    idx = sorted(by_idx) if window is None else list(range(*window))
    nodes = tuple(len(by_idx[i].nodes) if i in by_idx else 0 for i in idx)
    edges = tuple(len(by_idx[i].edges) if i in by_idx else 0 for i in idx)
    return BinActivity(tuple(idx), nodes, edges)


def unique_links(nets: Iterable[BinnedNetwork]) -> int:
    return len(set().union(*(n.edges for n in nets)))


def edge_list_csv(nets: Sequence[BinnedNetwork] | WeightedNetwork) -> str:
    """Export as ``bin_start_s,user_a,user_b[,weight]`` CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if isinstance(nets, WeightedNetwork):
        w.writerow(["bin_start_s", "user_a", "user_b", "weight"])
        for (a, b), weight in sorted(nets.weights.items()):
            w.writerow([nets.start_s, a, b, weight])
    else:
        w.writerow(["bin_start_s", "user_a", "user_b"])
        for n in sorted(nets, key=lambda n: n.bin.index):
            for a, b in sorted(n.edges):
                w.writerow([n.bin.start_s, a, b])
    return buf.getvalue()


def read_edge_list(text: str) -> dict[Edge, int]:
    """Read an edge-list CSV back as ``edge -> weight``.

    Unweighted files count one per row, so a per-bin export reads back as its
    aggregate over all bins.
    """
    rows = csv.reader(io.StringIO(text))
    header = next(rows, None)
    if header is None or header[:3] != ["bin_start_s", "user_a", "user_b"]:
        raise InvalidParameterError(f"not an edge list, header {header!r}")
    weighted = len(header) > 3 and header[3] == "weight"
    weights: Counter[Edge] = Counter()
    for row in rows:
        if not row:
            continue
        if row[1] == row[2]:
            continue
        e = canonical(row[1], row[2])
        weights[e] += int(row[3]) if weighted else 1
    return dict(sorted(weights.items()))
