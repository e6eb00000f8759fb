"""Network statistics shared by all channels."""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from typing import NamedTuple, Union

import networkx as nx
import numpy as np

from proxnet.btnet import BinnedNetwork, WeightedNetwork, canonical
from proxnet.core import EmptyInputError, InvalidParameterError

Network = Union[nx.Graph, BinnedNetwork, WeightedNetwork, Mapping, Iterable]


def to_graph(net: Network) -> nx.Graph:
    """Undirected networkx view of any supported network representation.

    Mappings are read as ``edge -> weight``; other iterables as edge pairs.
    """
    if isinstance(net, nx.Graph):
        return net
    g = nx.Graph()
    if isinstance(net, BinnedNetwork):
        g.add_nodes_from(sorted(net.nodes))
        g.add_edges_from(sorted(net.edges))
    elif isinstance(net, WeightedNetwork):
        g.add_weighted_edges_from((a, b, w) for (a, b), w in sorted(net.weights.items()))
    elif isinstance(net, Mapping):
        g.add_weighted_edges_from((a, b, w) for (a, b), w in sorted(net.items()))
    else:
        g.add_edges_from(net)
    return g


def _edge_set(net: Network) -> frozenset[tuple]:
    if isinstance(net, (BinnedNetwork, WeightedNetwork)):
        return net.edges
    if isinstance(net, nx.Graph):
        return frozenset(canonical(a, b) for a, b in net.edges())
    return frozenset(canonical(a, b) for a, b in net)


def _weights(net: WeightedNetwork | Mapping) -> Mapping[tuple, int]:
    return net.weights if isinstance(net, WeightedNetwork) else net


@dataclass(frozen=True)
class Distribution:
    """Discrete distribution over ``x``.

    ``p`` holds densities per ``unit`` of the support, so ``p * unit`` is the
    probability mass.  For integer-valued data ``unit`` is 1 and densities
    equal masses.  Cumulative distributions hold ``P(X >= x)`` in ``p``.
    """

    x: np.ndarray
    p: np.ndarray
    unit: float = 1.0
    cumulative: bool = False
    rescaled: bool = False

    @property
    def mass(self) -> np.ndarray:
        return self.p if self.cumulative else self.p * self.unit

    def mean(self) -> float:
        if self.cumulative:
            raise InvalidParameterError("mean of a cumulative distribution")
        if len(self.x) == 0:
            raise EmptyInputError("mean of an empty distribution")
        return float(np.sum(self.x * self.p) / np.sum(self.p))

    def to_cumulative(self) -> "Distribution":
        if self.cumulative:
            return self
        tail = np.cumsum(self.mass[::-1])[::-1]
        return Distribution(self.x, tail, self.unit, True, self.rescaled)

    def scaled(self, c: float) -> "Distribution":
        """Distribution of ``c * X`` (support stretched, densities shrunk)."""
        if c <= 0:
            raise InvalidParameterError("scale factor must be positive")
        p = self.p if self.cumulative else self.p / c
        return Distribution(self.x * c, p, self.unit * c, self.cumulative, self.rescaled)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "p"])
        for x, p in zip(self.x.tolist(), self.p.tolist()):
            w.writerow([x, p])
        return buf.getvalue()

    @classmethod
    def from_values(cls, values: Iterable[float], unit: float = 1.0, cumulative: bool = False) -> "Distribution":
        counts = Counter(values)
        n = sum(counts.values())
        if n == 0:
            return cls(np.array([], dtype=float), np.array([], dtype=float), unit, cumulative)
        xs = np.array(sorted(counts), dtype=float)
        mass = np.array([counts[x] for x in sorted(counts)], dtype=float) / n
        dist = cls(xs, mass / unit, unit)
        return dist.to_cumulative() if cumulative else dist


def degree_distribution(net: Network, cumulative: bool = False) -> Distribution:
    g = to_graph(net)
    return Distribution.from_values((d for _, d in g.degree()), cumulative=cumulative)


def weight_distribution(net: WeightedNetwork | Mapping, cumulative: bool = False) -> Distribution:
    return Distribution.from_values(_weights(net).values(), cumulative=cumulative)


def pooled_degree_distribution(nets: Iterable[Network], cumulative: bool = False) -> Distribution:
    """Degree distribution pooled over several networks (e.g. one per time window)."""
    degrees = [d for net in nets for _, d in to_graph(net).degree()]
    return Distribution.from_values(degrees, cumulative=cumulative)


def pooled_weight_distribution(nets: Iterable[WeightedNetwork | Mapping], cumulative: bool = False) -> Distribution:
    weights = [w for net in nets for w in _weights(net).values()]
    return Distribution.from_values(weights, cumulative=cumulative)


def rescale(dist: Distribution) -> Distribution:
    """Map the support to ``x / <x>`` and scale densities by ``<x>``.

    The result has mean 1, so rescaling twice changes nothing.
    """
    if dist.cumulative:
        raise InvalidParameterError("rescale expects a non-cumulative distribution")
    if len(dist.x) == 0:
        raise InvalidParameterError("rescale of an empty distribution")
    m = dist.mean()
    if m <= 0:
        raise InvalidParameterError(f"rescale needs a positive mean, got {m}")
    return Distribution(dist.x / m, dist.p * m, dist.unit / m, False, True)


@dataclass(frozen=True)
class NetworkSummary:
    n_nodes: int
    n_edges: int
    avg_degree: float
    avg_clustering: float
    giant_component_size: int
    avg_shortest_path: float | None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def average_clustering(g: nx.Graph, low_degree: str = "zero") -> float:
    """Mean local clustering; nodes of degree < 2 count as 0 or are excluded."""
    if low_degree not in ("zero", "exclude"):
        raise InvalidParameterError(f"low_degree must be 'zero' or 'exclude', got {low_degree!r}")
    cc = nx.clustering(g)
    if low_degree == "exclude":
        vals = [cc[n] for n in g if g.degree(n) >= 2]
    else:
        vals = list(cc.values())
    return math.fsum(vals) / len(vals) if vals else 0.0


def summarize(net: Network, low_degree: str = "zero") -> NetworkSummary:
    """Size, mean degree, mean clustering, and mean shortest path inside the giant component."""
    g = to_graph(net)
    n = g.number_of_nodes()
    if n == 0:
        raise EmptyInputError("summary of an empty network")
    e = g.number_of_edges()
    giant = max(nx.connected_components(g), key=lambda c: (len(c), sorted(map(str, c))))
    sub = g.subgraph(giant)
    path = nx.average_shortest_path_length(sub) if len(giant) > 1 else None
    return NetworkSummary(
        n_nodes=n,
        n_edges=e,
        avg_degree=2 * e / n,
        avg_clustering=average_clustering(g, low_degree),
        giant_component_size=len(giant),
        avg_shortest_path=path,
    )


def threshold_weak_links(net: WeightedNetwork | Mapping, min_weight: int) -> WeightedNetwork:
    """Drop edges observed fewer than ``min_weight`` times (and nodes left isolated)."""
    if min_weight < 1:
        raise InvalidParameterError("min_weight must be >= 1")
    kept = {e: w for e, w in sorted(_weights(net).items()) if w >= min_weight}
    if isinstance(net, WeightedNetwork):
        return WeightedNetwork(net.window, kept, net.width_s, net.origin_s)
    return WeightedNetwork((0, 0), kept)


def traffic_share_threshold(net: WeightedNetwork | Mapping, share: float = 0.8) -> int:
    """Smallest weight among the strongest edges that together carry ``share`` of all weight."""
    if not 0 < share <= 1:
        raise InvalidParameterError("share must be in (0, 1]")
    weights = sorted(_weights(net).values(), reverse=True)
    if not weights:
        raise EmptyInputError("traffic share of an empty network")
    target = share * sum(weights)
    acc = 0
    for w in weights:
        acc += w
        if acc >= target:
            return w
    return weights[-1]


class EdgeDiff(NamedTuple):
    only_a: frozenset
    only_b: frozenset
    shared: frozenset

    def counts(self) -> dict:
        return {"a_only": len(self.only_a), "b_only": len(self.only_b), "shared": len(self.shared)}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["user_a", "user_b", "membership"])
        rows = [(e, "a_only") for e in self.only_a] + [(e, "b_only") for e in self.only_b]
        rows += [(e, "shared") for e in self.shared]
        for (a, b), m in sorted(rows):
            w.writerow([a, b, m])
        return buf.getvalue()


def edge_set_diff(a: Network, b: Network) -> EdgeDiff:
    ea, eb = _edge_set(a), _edge_set(b)
    return EdgeDiff(ea - eb, eb - ea, ea & eb)
