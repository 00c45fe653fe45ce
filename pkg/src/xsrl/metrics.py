"""Strict triplet-match precision / recall / F1."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

DISTANCE_BUCKETS = ("0", "1", "2", "3", "4", ">=5")


def prf(correct: int, predicted: int, gold: int) -> tuple[float, float, float]:
    """Percentages; 0/0 is taken as 0."""
    p = 100.0 * correct / predicted if predicted else 0.0
    r = 100.0 * correct / gold if gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def distance_bucket(predicate: int, argument: int) -> str:
    d = abs(predicate - argument)
    return DISTANCE_BUCKETS[min(d, 5)]


@dataclass
class Score:
    correct: int = 0
    predicted: int = 0
    gold: int = 0

    @property
    def prf(self) -> tuple[float, float, float]:
        return prf(self.correct, self.predicted, self.gold)


@dataclass
class MetricsReport:
    precision: float
    recall: float
    f1: float
    per_label: dict[str, Score] = field(default_factory=dict)
    by_distance: dict[str, Score] = field(default_factory=dict)
    oracle_misses: int = 0
    counts: Score = field(default_factory=Score)

    def summary(self) -> str:
        return f"P={self.precision:.1f} R={self.recall:.1f} F1={self.f1:.1f}"

    def to_tsv(self) -> str:
        lines = ["# overall", "P\tR\tF1\toracle_misses",
                 f"{self.precision:.1f}\t{self.recall:.1f}\t{self.f1:.1f}\t{self.oracle_misses}",
                 "# per-label", "label\tP\tR\tF1\tgold"]
        for label in sorted(self.per_label):
            s = self.per_label[label]
            p, r, f = s.prf
            lines.append(f"{label}\t{p:.1f}\t{r:.1f}\t{f:.1f}\t{s.gold}")
        lines += ["# distance", "distance\tP\tR\tF1\tgold"]
        for bucket in DISTANCE_BUCKETS:
            s = self.by_distance.get(bucket, Score())
            p, r, f = s.prf
            lines.append(f"{bucket}\t{p:.1f}\t{r:.1f}\t{f:.1f}\t{s.gold}")
        return "\n".join(lines) + "\n"


Triple = tuple[int, int, str]


def score_triplets(predicted: Iterable[Iterable[Triple]], gold: Iterable[Iterable[Triple]],
                   oracle_misses: int = 0) -> MetricsReport:
    """Micro P/R/F1 over sentences; a prediction counts only if predicate,
    argument and label all match a gold triplet of the same sentence."""
    total = Score()
    per_label: dict[str, Score] = {}
    by_dist: dict[str, Score] = {b: Score() for b in DISTANCE_BUCKETS}
    for pred, gold_s in zip(predicted, gold):
        pred, gold_s = set(pred), set(gold_s)
        hit = pred & gold_s
        total.correct += len(hit)
        total.predicted += len(pred)
        total.gold += len(gold_s)
        for group, key in ((per_label, lambda t: t[2]), (by_dist, lambda t: distance_bucket(t[0], t[1]))):
            for name, n in Counter(map(key, hit)).items():
                group.setdefault(name, Score()).correct += n
            for name, n in Counter(map(key, pred)).items():
                group.setdefault(name, Score()).predicted += n
            for name, n in Counter(map(key, gold_s)).items():
                group.setdefault(name, Score()).gold += n
    p, r, f = total.prf
    return MetricsReport(p, r, f, per_label, by_dist, oracle_misses, total)
