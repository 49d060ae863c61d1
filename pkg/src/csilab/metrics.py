"""Ranking metrics over scored interaction predictions.

Flat metrics (average precision, R-precision) score one ranked list;
grouped metrics average a per-group value over groups keyed by compound
or sequence id, skipping groups that contain no positive at all. Ties
are broken by stable input order, so every metric here is a pure
deterministic function of (scores, labels) in their given order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import NoEligibleGroups, NoPositives

__all__ = [
    "ScoredSet",
    "average_precision",
    "r_precision",
    "grouped_metric",
    "precision_at_1",
    "ranking_report",
]


@dataclass
class ScoredSet:
    """A list of (score, label) items, optionally tagged with a group key."""

    items: list[tuple[float, int]]
    group: str | None = None

    def __post_init__(self):
        if not self.items:
            raise ValueError("scored set needs at least one item")
        for score, label in self.items:
            if not math.isfinite(score):
                raise ValueError(f"non-finite score {score!r}")
            if label not in (0, 1):
                raise ValueError(f"label must be 0 or 1, got {label!r}")


def _ranked_labels(items) -> list[int]:
    # ties rank negatives first: a degenerate scorer that outputs one
    # constant must not collect credit from tie order, and the result
    # cannot depend on how the caller happened to arrange the items
    order = sorted(range(len(items)), key=lambda i: (-items[i][0], items[i][1]))
    return [items[i][1] for i in order]


def _ap(labels) -> float:
    hits = 0
    precisions = []
    for rank, label in enumerate(labels, start=1):
        if label:
            hits += 1
            precisions.append(hits / rank)
    if hits == 0:
        return 0.0
    return math.fsum(precisions) / hits


def _r_precision(labels) -> float:
    r = sum(labels)
    if r == 0:
        return 0.0
    return sum(labels[:r]) / r


def average_precision(s: ScoredSet) -> float:
    """Mean of precision-at-rank over the ranks holding positives."""
    labels = _ranked_labels(s.items)
    if not any(labels):
        raise NoPositives("average precision needs at least one positive")
    return _ap(labels)


def r_precision(s: ScoredSet) -> float:
    """Fraction of the top-R items that are positive, R = positive count."""
    labels = _ranked_labels(s.items)
    if not any(labels):
        raise NoPositives("r-precision needs at least one positive")
    return _r_precision(labels)


_METRICS = {"ap": _ap, "r-precision": _r_precision}


def grouped_metric(sets: list[ScoredSet], metric: str = "ap",
                   at_k: int | None = None) -> float:
    """Average a per-group metric over groups that contain a positive.

    Eligibility is judged on the full group; with ``at_k`` the metric is
    then computed on the top-k items only, so an eligible group whose
    positives all fall outside the cutoff scores 0.
    """
    if metric not in _METRICS:
        raise ValueError(f"unknown metric {metric!r}, expected one of {sorted(_METRICS)}")
    if at_k is not None and at_k < 1:
        raise ValueError(f"at_k must be positive, got {at_k}")
    per_label_list = _METRICS[metric]

    values = []
    for s in sets:
        if not any(label for _, label in s.items):
            continue
        labels = _ranked_labels(s.items)
        if at_k is not None:
            labels = labels[:at_k]
        values.append(per_label_list(labels))
    if not values:
        raise NoEligibleGroups("every group lacks positives")
    return math.fsum(values) / len(values)


def precision_at_1(sets: list[ScoredSet]) -> float:
    """Fraction of eligible groups whose top-ranked item is positive."""
    values = []
    for s in sets:
        if not any(label for _, label in s.items):
            continue
        values.append(float(_ranked_labels(s.items)[0]))
    if not values:
        raise NoEligibleGroups("every group lacks positives")
    return math.fsum(values) / len(values)


def _group_block(records, key_index: int) -> dict:
    groups: dict[str, list[tuple[float, int]]] = {}
    for rec in records:
        groups.setdefault(rec[key_index], []).append((rec[2], rec[3]))
    sets = [ScoredSet(groups[k], group=k) for k in sorted(groups)]
    eligible = sum(1 for s in sets if any(label for _, label in s.items))
    block = {"groups": len(sets), "eligible_groups": eligible,
             "skipped_groups": len(sets) - eligible}
    if eligible:
        block.update({
            "map": grouped_metric(sets, "ap"),
            "mean_r_precision": grouped_metric(sets, "r-precision"),
            "map_at_3": grouped_metric(sets, "ap", at_k=3),
            "precision_at_1": precision_at_1(sets),
        })
    return block


def ranking_report(records) -> dict:
    """Assemble the full metric report from scored pair predictions.

    ``records`` is a list of (compound_id, sequence_id, score, label)
    tuples. The report carries overall AP and R-precision plus grouped
    metrics keyed by compound and by sequence.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to evaluate")
    overall = ScoredSet([(score, label) for _, _, score, label in records])
    n_pos = sum(label for _, _, _, label in records)
    return {
        "overall": {
            "items": len(records),
            "positives": n_pos,
            "average_precision": average_precision(overall),
            "r_precision": r_precision(overall),
        },
        "by_compound": _group_block(records, 0),
        "by_sequence": _group_block(records, 1),
    }
