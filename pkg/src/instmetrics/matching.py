"""Assign prediction instances to reference instances.

Two matchers work off an :class:`~instmetrics.metrics.OverlapTable`:

* naive threshold matching keeps pairs whose score exceeds a threshold,
  resolving conflicts by highest score;
* maximize-many-to-one matching seeds each reference with its best
  prediction and merges further predictions while the merged score rises.

Ties on equal scores always go to the lower label.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .metrics import MetricKind, OverlapTable, overlap_score
from .volume import LABEL_DTYPE, MAX_LABEL, LabelMap, LabelMapError


class Matcher(str, Enum):
    NAIVE_THRESHOLD = "naive_threshold"
    MAXIMIZE_MANY_TO_ONE = "maximize_many_to_one"


@dataclass(frozen=True)
class MatchConfig:
    metric: MetricKind = MetricKind.IOU
    threshold: float = 0.5
    allow_many_to_one: bool = False
    matcher: Matcher = Matcher.NAIVE_THRESHOLD

    def __post_init__(self):
        object.__setattr__(self, "metric", MetricKind(self.metric))
        object.__setattr__(self, "matcher", Matcher(self.matcher))
        if self.metric is MetricKind.ASSD:
            raise ValueError("matching supports IOU or DSC only")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"match threshold must lie in [0, 1], got {self.threshold}")

    @property
    def many_to_one(self) -> bool:
        return self.allow_many_to_one or self.matcher is Matcher.MAXIMIZE_MANY_TO_ONE


@dataclass
class MatchResult:
    assignments: dict[int, int] = field(default_factory=dict)
    assignment_scores: dict[int, float] = field(default_factory=dict)
    unmatched_preds: list[int] = field(default_factory=list)
    unmatched_refs: list[int] = field(default_factory=list)
    # ref label -> merged score after the seed and after every accepted merge
    merge_history: dict[int, list[float]] = field(default_factory=dict)


def _finish(table: OverlapTable, assignments: dict[int, int], scores: dict[int, float],
            history: dict[int, list[float]] | None = None) -> MatchResult:
    taken = set(assignments.values())
    return MatchResult(
        assignments=dict(sorted(assignments.items())),
        assignment_scores={p: scores[p] for p in sorted(assignments)},
        unmatched_preds=sorted(p for p in table.pred_volumes if p not in assignments),
        unmatched_refs=sorted(r for r in table.ref_volumes if r not in taken),
        merge_history=history or {},
    )


def match_naive_threshold(table: OverlapTable, cfg: MatchConfig) -> MatchResult:
    """Threshold matching on the overlap table.

    A pair is a candidate when its score is strictly above ``cfg.threshold``.
    A prediction competes only for its best-scoring reference; per reference
    the best prediction wins, or every candidate when many-to-one is allowed.
    """
    if cfg.matcher is not Matcher.NAIVE_THRESHOLD:
        raise ValueError("match_naive_threshold needs matcher=naive_threshold")
    best: dict[int, tuple[float, int]] = {}
    for (p, r), inter in sorted(table.intersections.items()):
        score = overlap_score(cfg.metric, inter, table.pred_volumes[p], table.ref_volumes[r])
        if score <= cfg.threshold:
            continue
        # sorted iteration visits lower refs first, so ">" keeps the lower label on ties
        if p not in best or score > best[p][0]:
            best[p] = (score, r)

    contenders: dict[int, list[tuple[float, int]]] = defaultdict(list)
    for p, (score, r) in best.items():
        contenders[r].append((score, p))

    assignments, scores = {}, {}
    for r, cands in contenders.items():
        if not cfg.allow_many_to_one:
            cands = [min(cands, key=lambda sp: (-sp[0], sp[1]))]
        for score, p in cands:
            assignments[p] = r
            scores[p] = score
    return _finish(table, assignments, scores)


def match_maximize_many_to_one(table: OverlapTable, pred: LabelMap | None = None,
                               ref: LabelMap | None = None,
                               cfg: MatchConfig = MatchConfig(matcher=Matcher.MAXIMIZE_MANY_TO_ONE)) -> MatchResult:
    """Greedy per-reference merging of predictions.

    References are visited in ascending label order. Each one takes the best
    unassigned prediction with a positive score, then tries the remaining
    positive-score predictions in descending score order, keeping a merge only
    if the merged prediction scores strictly higher. Instance masks are
    disjoint, so merged intersections and volumes are sums of table entries;
    the maps themselves are not rescanned.
    """
    if cfg.matcher is not Matcher.MAXIMIZE_MANY_TO_ONE:
        raise ValueError("match_maximize_many_to_one needs matcher=maximize_many_to_one")
    per_ref: dict[int, list[tuple[int, int]]] = defaultdict(list)
    for (p, r), inter in table.intersections.items():
        per_ref[r].append((p, inter))

    assignments, scores, history = {}, {}, {}
    for r in sorted(table.ref_volumes):
        ref_vol = table.ref_volumes[r]
        cands = []
        for p, inter in per_ref.get(r, ()):
            if p in assignments:
                continue
            score = overlap_score(cfg.metric, inter, table.pred_volumes[p], ref_vol)
            if score > 0:
                cands.append((score, p, inter))
        if not cands:
            continue
        cands.sort(key=lambda c: (-c[0], c[1]))
        current, seed, inter_sum = cands[0]
        vol_sum = table.pred_volumes[seed]
        assignments[seed] = r
        scores[seed] = current
        steps = [current]
        for score, p, inter in cands[1:]:
            merged = overlap_score(cfg.metric, inter_sum + inter, vol_sum + table.pred_volumes[p], ref_vol)
            if merged > current:
                current = merged
                inter_sum += inter
                vol_sum += table.pred_volumes[p]
                assignments[p] = r
                scores[p] = score
                steps.append(current)
        history[r] = steps
    return _finish(table, assignments, scores, history)


def match(table: OverlapTable, cfg: MatchConfig, pred: LabelMap | None = None,
          ref: LabelMap | None = None) -> MatchResult:
    if cfg.matcher is Matcher.MAXIMIZE_MANY_TO_ONE:
        return match_maximize_many_to_one(table, pred, ref, cfg)
    return match_naive_threshold(table, cfg)


def apply_match(pred: LabelMap, ref: LabelMap, result: MatchResult) -> LabelMap:
    """Relabel ``pred`` so matched instances carry their reference label.

    Unmatched predictions get fresh labels above every reference label (and
    so above every matched output label), in ascending order of their original
    label. ``ref`` is left untouched.
    """
    if pred.shape != ref.shape:
        raise LabelMapError(f"shape mismatch: {pred.shape} vs {ref.shape}")
    labels, inverse = np.unique(pred.data, return_inverse=True)
    present = set(int(v) for v in labels if v != 0)
    claimed = set(result.assignments) | set(result.unmatched_preds)
    if claimed != present or set(result.assignments) & set(result.unmatched_preds):
        raise ValueError("match result does not cover the prediction labels exactly once")
    ref_labels = np.unique(ref.data)
    ref_present = set(int(v) for v in ref_labels if v != 0)
    if not set(result.assignments.values()) <= ref_present:
        raise ValueError("match result assigns to labels missing from the reference")

    top = int(ref_labels[-1])
    if top + len(result.unmatched_preds) > MAX_LABEL:
        raise OverflowError("no unused labels left for false positives")
    relabel = dict(result.assignments)
    for i, p in enumerate(sorted(result.unmatched_preds), start=1):
        relabel[p] = top + i
    new_values = np.array([relabel.get(int(v), 0) for v in labels], dtype=LABEL_DTYPE)
    return LabelMap(new_values[inverse].reshape(pred.shape), pred.spacing)
