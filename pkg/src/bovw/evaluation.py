"""Average precision and mAP with Oxford-style positive/ignore lists.

Ignored ("junk") documents are removed from the ranking before scoring;
positives missing from the ranking count as misses (the AP denominator is the
full positive count).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import FormatError, ValidationError
from .index import RankedList


@dataclass(frozen=True)
class GroundTruth:
    query_id: str
    positives: frozenset[str]
    ignores: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "positives", frozenset(self.positives))
        object.__setattr__(self, "ignores", frozenset(self.ignores))
        if not self.positives:
            raise ValidationError(f"query '{self.query_id}' has no positives")
        if self.positives & self.ignores:
            raise ValidationError(
                f"query '{self.query_id}' has docs marked both positive and ignored"
            )


def average_precision(ranking: RankedList, gt: GroundTruth) -> float:
    kept = [doc_id for doc_id, _ in ranking.items if doc_id not in gt.ignores]
    hits = 0
    total = 0.0
    for rank, doc_id in enumerate(kept, start=1):
        if doc_id in gt.positives:
            hits += 1
            total += hits / rank
    return total / len(gt.positives)


def mean_average_precision(
    rankings: Sequence[RankedList], gts: Sequence[GroundTruth]
) -> float:
    by_query = {gt.query_id: gt for gt in gts}
    if not rankings:
        raise ValidationError("no rankings to evaluate")
    aps = []
    for ranking in rankings:
        gt = by_query.get(ranking.query_id)
        if gt is None:
            raise ValidationError(f"no ground truth for query '{ranking.query_id}'")
        aps.append(average_precision(ranking, gt))
    return sum(aps) / len(aps)


def load_ground_truth(path: str | Path) -> dict[str, GroundTruth]:
    """Parse `<query_id>\\t<doc_id>\\t<label>` lines, label in {pos, ignore}."""
    positives: dict[str, set[str]] = {}
    ignores: dict[str, set[str]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise FormatError(f"{path}:{lineno}: expected 3 tab-separated fields")
            query_id, doc_id, label = parts
            if label == "pos":
                positives.setdefault(query_id, set()).add(doc_id)
                ignores.setdefault(query_id, set())
            elif label == "ignore":
                ignores.setdefault(query_id, set()).add(doc_id)
                positives.setdefault(query_id, set())
            else:
                raise FormatError(f"{path}:{lineno}: unknown label '{label}'")
    return {
        q: GroundTruth(query_id=q, positives=frozenset(p), ignores=frozenset(ignores[q]))
        for q, p in positives.items()
    }
