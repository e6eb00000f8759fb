"""Big Five personality scoring from 5-point Likert answers."""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import IO, Iterable, Mapping

from proxnet.core import FormatError, InsufficientDataError, InvalidParameterError, KeyMismatchError
from proxnet.ingest import SurveyAnswer

TRAITS = ("O", "C", "E", "A", "N")
TRAIT_NAMES = {
    "O": "openness",
    "C": "conscientiousness",
    "E": "extraversion",
    "A": "agreeableness",
    "N": "neuroticism",
}
KEY_HEADER = ("item_id", "trait", "reversed")
SCALE_MIN, SCALE_MAX = 1, 5


@dataclass(frozen=True)
class SurveyResponse:
    user: str
    answers: Mapping[str, int]

    def __post_init__(self):
        for item, score in self.answers.items():
            if not SCALE_MIN <= score <= SCALE_MAX:
                raise InvalidParameterError(f"{self.user}/{item}: score {score} outside [1, 5]")


ScoringKey = Mapping[str, tuple[str, bool]]


def validate_key(key: ScoringKey) -> None:
    seen = set()
    for item, (trait, _) in key.items():
        if trait not in TRAITS:
            raise InvalidParameterError(f"item {item!r}: unknown trait {trait!r}")
        seen.add(trait)
    missing = [t for t in TRAITS if t not in seen]
    if missing:
        raise InvalidParameterError(f"scoring key has no items for traits {missing}")


def read_key(stream: IO | str) -> dict[str, tuple[str, bool]]:
    """Parse ``key.csv`` (``item_id,trait,reversed``)."""
    text = stream if isinstance(stream, str) else stream.read()
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != KEY_HEADER:
        raise FormatError(f"scoring key: expected header {','.join(KEY_HEADER)!r}")
    key = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3 or row[2] not in ("0", "1", "true", "false"):
            raise FormatError(f"scoring key line {lineno}: malformed row {row!r}")
        key[row[0]] = (row[1], row[2] in ("1", "true"))
    validate_key(key)
    return key


def key_csv(key: ScoringKey) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(KEY_HEADER)
    for item in sorted(key):
        trait, rev = key[item]
        w.writerow([item, trait, int(rev)])
    return buf.getvalue()


def responses(answers: Iterable[SurveyAnswer]) -> list[SurveyResponse]:
    """Group survey rows by user; a repeated item keeps its last answer."""
    by_user: dict[str, dict[str, int]] = defaultdict(dict)
    for a in answers:
        by_user[a.user][a.item] = a.score
    return [SurveyResponse(u, by_user[u]) for u in sorted(by_user)]


def score_big_five(resp: SurveyResponse, key: ScoringKey, min_items: int = 1) -> dict[str, float | None]:
    """Mean answer per trait, reversed items counted as ``6 - score``.

    Traits with fewer than ``min_items`` answered items score ``None``.
    """
    per_trait: dict[str, list[int]] = {t: [] for t in TRAITS}
    for item, score in resp.answers.items():
        if item not in key:
            raise KeyMismatchError(f"{resp.user}: item {item!r} is not in the scoring key")
        trait, reversed_ = key[item]
        per_trait[trait].append(SCALE_MIN + SCALE_MAX - score if reversed_ else score)
    return {t: (sum(v) / len(v) if len(v) >= max(min_items, 1) else None) for t, v in per_trait.items()}


def trait_summary(scores: Mapping[str, Mapping[str, float | None]]) -> dict[str, tuple[float, float]]:
    """Cohort mean and population standard deviation per trait."""
    if len(scores) < 2:
        raise InsufficientDataError(f"trait summary needs at least 2 users, got {len(scores)}")
    out = {}
    for t in TRAITS:
        vals = [s[t] for s in scores.values() if s.get(t) is not None]
        if len(vals) < 2:
            raise InsufficientDataError(f"trait {t}: fewer than 2 scored users")
        mu = math.fsum(vals) / len(vals)
        sd = math.sqrt(math.fsum((v - mu) ** 2 for v in vals) / len(vals))
        out[t] = (mu, sd)
    return out
