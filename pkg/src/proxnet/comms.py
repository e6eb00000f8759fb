"""Call and SMS statistics."""

from __future__ import annotations

import math
import statistics
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from proxnet.core import DEFAULT_TZ, InvalidParameterError, get_zone, weekly_bin
from proxnet.ingest import CommEvent


@dataclass(frozen=True)
class RatioStats:
    mean_ratio: float | None
    n_users: int
    n_excluded: int  # users without outgoing events


@dataclass(frozen=True)
class CallStats:
    n_calls: int
    n_nonzero: int
    n_incoming: int
    n_outgoing: int
    n_missed: int
    mean_duration: float | None
    median_duration: float | None
    in_out: RatioStats


def in_out_ratio(events: Iterable[CommEvent], missed_as_incoming: bool = False) -> RatioStats:
    """Per-user incoming/outgoing ratio averaged over users with outgoing events."""
    inc = defaultdict(int)
    out = defaultdict(int)
    users = set()
    for e in events:
        users.add(e.user)
        if e.direction == "outgoing":
            out[e.user] += 1
        elif e.direction == "incoming" or (missed_as_incoming and e.direction == "missed"):
            inc[e.user] += 1
    ratios = [inc[u] / out[u] for u in sorted(users) if out[u] > 0]
    mean = math.fsum(ratios) / len(ratios) if ratios else None
    return RatioStats(mean, len(ratios), len(users) - len(ratios))


def call_stats(events: Iterable[CommEvent], missed_as_incoming: bool = False) -> CallStats:
    """Duration statistics over calls lasting longer than zero seconds, plus in/out ratio.

    Non-call events are ignored.  Empty input gives ``None`` statistics.
    """
    calls = [e for e in events if e.channel == "call"]
    durations = [e.duration for e in calls if e.duration > 0]
    return CallStats(
        n_calls=len(calls),
        n_nonzero=len(durations),
        n_incoming=sum(e.direction == "incoming" for e in calls),
        n_outgoing=sum(e.direction == "outgoing" for e in calls),
        n_missed=sum(e.direction == "missed" for e in calls),
        mean_duration=math.fsum(durations) / len(durations) if durations else None,
        median_duration=float(statistics.median(durations)) if durations else None,
        in_out=in_out_ratio(calls, missed_as_incoming),
    )


@dataclass(frozen=True)
class ContactProfile:
    user: str
    call_peers: frozenset[str] = field(default_factory=frozenset)
    text_peers: frozenset[str] = field(default_factory=frozenset)


def contact_sets(events: Iterable[CommEvent]) -> dict[str, ContactProfile]:
    """Unique peers per user and channel, both directions, missed calls included."""
    calls = defaultdict(set)
    texts = defaultdict(set)
    users = set()
    for e in events:
        users.add(e.user)
        if e.peer == e.user:
            continue
        (calls if e.channel == "call" else texts)[e.user].add(e.peer)
    return {
        u: ContactProfile(u, frozenset(calls.get(u, ())), frozenset(texts.get(u, ()))) for u in sorted(users)
    }


def channel_similarity(profile: ContactProfile) -> float | None:
    """Jaccard index of call and text contacts; ``None`` when both are empty."""
    union = profile.call_peers | profile.text_peers
    if not union:
        return None
    return len(profile.call_peers & profile.text_peers) / len(union)


def mean_similarity(profiles: Iterable[ContactProfile]) -> float | None:
    sims = [s for s in map(channel_similarity, profiles) if s is not None]
    return math.fsum(sims) / len(sims) if sims else None


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float | None:
    n = len(xs)
    if n != len(ys):
        raise InvalidParameterError("pearson needs equal-length sequences")
    if n < 2:
        return None
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    sxy = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    sxx = math.fsum((x - mx) ** 2 for x in xs)
    syy = math.fsum((y - my) ** 2 for y in ys)
    if sxx == 0 or syy == 0:
        return None
    return max(-1.0, min(1.0, sxy / math.sqrt(sxx * syy)))


def diversity_correlation(profiles: Iterable[ContactProfile]) -> float | None:
    """Pearson r between call and text contact-set sizes across users."""
    profiles = list(profiles)
    return pearson([len(p.call_peers) for p in profiles], [len(p.text_peers) for p in profiles])


@dataclass(frozen=True)
class WeeklyProfile:
    counts: np.ndarray  # 7 x 24 integer event counts, Monday = row 0
    n_users: int
    n_weeks: int

    @property
    def means(self) -> np.ndarray:
        return self.counts / (self.n_users * self.n_weeks)

    def exact_means(self) -> list[list[Fraction]]:
        den = self.n_users * self.n_weeks
        return [[Fraction(int(c), den) for c in row] for row in self.counts]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def weekly_profile(
    events: Iterable[CommEvent],
    tz: str = DEFAULT_TZ,
    n_users: int = 1,
    n_weeks: int = 1,
    channel: str | None = None,
) -> WeeklyProfile:
    """Mean events per user and week in each local (weekday, hour) bin."""
    if n_users < 1 or n_weeks < 1:
        raise InvalidParameterError("n_users and n_weeks must be >= 1")
    get_zone(tz)
    counts = np.zeros((7, 24), dtype=np.int64)
    for e in events:
        if channel is not None and e.channel != channel:
            continue
        d, h = weekly_bin(e.t, tz)
        counts[d, h] += 1
    return WeeklyProfile(counts, n_users, n_weeks)


def summary(events: Sequence[CommEvent], missed_as_incoming: bool = False) -> dict:
    """JSON-ready summary of call/text statistics and contact diversity."""
    cs = call_stats(events, missed_as_incoming)
    sms = [e for e in events if e.channel == "sms"]
    profiles = contact_sets(events)
    sims = {u: channel_similarity(p) for u, p in profiles.items()}
    return {
        "calls": {
            "n_calls": cs.n_calls,
            "n_nonzero_duration": cs.n_nonzero,
            "n_incoming": cs.n_incoming,
            "n_outgoing": cs.n_outgoing,
            "n_missed": cs.n_missed,
            "mean_duration_s": cs.mean_duration,
            "median_duration_s": cs.median_duration,
            "in_out_ratio": cs.in_out.mean_ratio,
            "in_out_users": cs.in_out.n_users,
            "in_out_excluded_users": cs.in_out.n_excluded,
        },
        "sms": {
            "n_sms": len(sms),
            "in_out_ratio": in_out_ratio(sms).mean_ratio,
        },
        "diversity_correlation": diversity_correlation(profiles.values()),
        "mean_similarity": mean_similarity(profiles.values()),
        "similarity": {u: s for u, s in sims.items()},
        "contacts": {
            u: {"n_call": len(p.call_peers), "n_text": len(p.text_peers)} for u, p in profiles.items()
        },
    }

