"""Pipeline orchestration and panoptic scoring.

``evaluate`` runs approximation (semantic inputs only), matching (unless the
input is already matched) and instance evaluation on the maps cropped to
their joint bounding box. Scores follow

    RQ = TP / (TP + FP/2 + FN/2),  SQ_m = mean of m over TP pairs,
    PQ_m = SQ_m * RQ = sum of m over TP pairs / (TP + FP/2 + FN/2)

for m in {IOU, DSC}; SQ_ASSD is the mean ASSD over TP pairs.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .cca import CcaStrategy, approximate_instances, check_connectivity
from .matching import MatchConfig, Matcher, apply_match, match
from .metrics import (
    MetricKind,
    assd_arrays,
    build_overlap_table,
    dsc_from_counts,
    global_dsc,
    iou_from_counts,
)
from .volume import LabelMap, LabelMapError, binarize, crop, joint_bounding_box, label_boxes, select_classes

RESULT_KEYS = ("tp", "fp", "fn", "rq", "sq_iou", "pq_iou", "sq_dsc", "pq_dsc", "sq_assd", "gvdsc")
SCORE_KEYS = RESULT_KEYS[3:]


class InputMode(str, Enum):
    SEMANTIC = "semantic"
    UNMATCHED_INSTANCE = "unmatched_instance"
    MATCHED_INSTANCE = "matched_instance"


class EdgeCase(str, Enum):
    BOTH_EMPTY_SIM = "both_empty_sim"
    BOTH_EMPTY_DIST = "both_empty_dist"
    ONE_EMPTY_DIST = "one_empty_dist"
    NO_TP_DIST = "no_tp_dist"


@dataclass(frozen=True)
class EdgeCasePolicy:
    both_empty_similarity: float = math.nan
    both_empty_distance: float = math.nan
    one_empty_distance: float = math.inf


def resolve_edge_case(condition: EdgeCase | str, policy: EdgeCasePolicy = EdgeCasePolicy()) -> float:
    condition = EdgeCase(condition)
    if condition is EdgeCase.BOTH_EMPTY_SIM:
        return policy.both_empty_similarity
    if condition is EdgeCase.BOTH_EMPTY_DIST:
        return policy.both_empty_distance
    return policy.one_empty_distance


@dataclass(frozen=True)
class EvalConfig:
    mode: InputMode = InputMode.SEMANTIC
    match: MatchConfig = MatchConfig()
    eval_metric: MetricKind = MetricKind.IOU
    eval_threshold: float = 0.5
    connectivity: int | None = None
    cca_strategy: CcaStrategy = CcaStrategy.AUTO
    edge_policy: EdgeCasePolicy = EdgeCasePolicy()
    worker_count: int = 1
    crop_enabled: bool = True
    # semantic mode: labels forming the evaluated channel (None = any nonzero)
    class_labels: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", InputMode(self.mode))
        object.__setattr__(self, "eval_metric", MetricKind(self.eval_metric))
        object.__setattr__(self, "cca_strategy", CcaStrategy(self.cca_strategy))
        if self.eval_metric is MetricKind.ASSD:
            raise ValueError("the decision metric must be IOU or DSC")
        if not 0.0 <= self.eval_threshold <= 1.0:
            raise ValueError(f"eval threshold must lie in [0, 1], got {self.eval_threshold}")
        if self.worker_count < 1:
            raise ValueError("worker_count must be positive")


@dataclass(frozen=True)
class PairScore:
    ref_label: int
    iou: float
    dsc: float
    assd: float


@dataclass
class PanopticResult:
    tp: int
    fp: int
    fn: int
    rq: float
    sq_iou: float
    pq_iou: float
    sq_dsc: float
    pq_dsc: float
    sq_assd: float
    gvdsc: float
    per_pair: list[PairScore] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in RESULT_KEYS}


class _ScoredCase:
    """Pairs claimed by shared labels in a matched map, scored lazily.

    IOU/DSC come from the overlap table; ASSD is computed only for pairs that
    pass the decision threshold and cached, so threshold sweeps reuse it.
    """

    def __init__(self, pred: LabelMap, ref: LabelMap, cfg: EvalConfig):
        if pred.shape != ref.shape:
            raise LabelMapError(f"shape mismatch: {pred.shape} vs {ref.shape}")
        self.pred = pred
        self.ref = ref
        self.cfg = cfg
        table = build_overlap_table(pred, ref)
        self.n_pred = len(table.pred_volumes)
        self.n_ref = len(table.ref_volumes)
        self.pairs = {}
        for r in sorted(table.ref_volumes):
            if r not in table.pred_volumes:
                continue
            counts = (table.intersections.get((r, r), 0), table.pred_volumes[r], table.ref_volumes[r])
            self.pairs[r] = (iou_from_counts(*counts), dsc_from_counts(*counts))
        self.gvdsc_value = global_dsc(pred, ref, both_empty=math.nan)
        self._assd: dict[int, float] = {}
        self._boxes = None

    def _pair_assd(self, r: int) -> float:
        pb, rb = self._boxes[0][r], self._boxes[1][r]
        region = tuple(slice(min(a, b), max(c, d)) for a, b, c, d in zip(pb.lo, rb.lo, pb.hi, rb.hi))
        return assd_arrays(self.pred.data[region] == r, self.ref.data[region] == r, self.ref.spacing)

    def _fill_assd(self, labels: list[int]) -> None:
        todo = [r for r in labels if r not in self._assd]
        if not todo:
            return
        if self._boxes is None:
            self._boxes = (label_boxes(self.pred.data), label_boxes(self.ref.data))
        if self.cfg.worker_count > 1 and len(todo) > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.worker_count) as pool:
                values = list(pool.map(self._pair_assd, todo))
        else:
            values = [self._pair_assd(r) for r in todo]
        self._assd.update(zip(todo, values))

    def score(self, threshold: float, metric: MetricKind, policy: EdgeCasePolicy) -> PanopticResult:
        pick = 0 if metric is MetricKind.IOU else 1
        tp_labels = [r for r, vals in self.pairs.items() if vals[pick] >= threshold]
        self._fill_assd(tp_labels)
        tp = len(tp_labels)
        fp = self.n_pred - tp
        fn = self.n_ref - tp
        per_pair = [PairScore(r, *self.pairs[r], self._assd[r]) for r in tp_labels]
        gvdsc = self.gvdsc_value
        if math.isnan(gvdsc):
            gvdsc = resolve_edge_case(EdgeCase.BOTH_EMPTY_SIM, policy)

        if self.n_pred == 0 and self.n_ref == 0:
            sim = resolve_edge_case(EdgeCase.BOTH_EMPTY_SIM, policy)
            dist = resolve_edge_case(EdgeCase.BOTH_EMPTY_DIST, policy)
            return PanopticResult(0, 0, 0, sim, sim, sim, sim, sim, dist, gvdsc, [])

        denom = tp + 0.5 * fp + 0.5 * fn
        rq = tp / denom
        if tp == 0:
            cond = EdgeCase.ONE_EMPTY_DIST if (self.n_pred == 0 or self.n_ref == 0) else EdgeCase.NO_TP_DIST
            return PanopticResult(0, fp, fn, rq, math.nan, 0.0, math.nan, 0.0,
                                  resolve_edge_case(cond, policy), gvdsc, [])
        sq_iou = math.fsum(p.iou for p in per_pair) / tp
        sq_dsc = math.fsum(p.dsc for p in per_pair) / tp
        sq_assd = math.fsum(p.assd for p in per_pair) / tp
        return PanopticResult(tp, fp, fn, rq, sq_iou, sq_iou * rq, sq_dsc, sq_dsc * rq,
                              sq_assd, gvdsc, per_pair)


def evaluate_matched(pred_matched: LabelMap, ref: LabelMap, cfg: EvalConfig = EvalConfig()) -> PanopticResult:
    """Score a matched prediction map against the reference.

    A reference label also present in the prediction is a true positive when
    the decision metric reaches ``cfg.eval_threshold``; otherwise the
    reference is a false negative and the prediction a false positive.
    Prediction labels absent from the reference are false positives.
    """
    case = _ScoredCase(pred_matched, ref, cfg)
    return case.score(cfg.eval_threshold, cfg.eval_metric, cfg.edge_policy)


def _prepare(pred: LabelMap, ref: LabelMap, cfg: EvalConfig) -> tuple[LabelMap, LabelMap]:
    """Crop to the joint box; in semantic mode also select the channel and approximate instances."""
    if pred.shape != ref.shape:
        raise LabelMapError(f"shape mismatch: {pred.shape} vs {ref.shape}")
    check_connectivity(pred.dims, cfg.connectivity)
    if cfg.mode is InputMode.SEMANTIC:
        if cfg.class_labels is not None:
            pred, ref = select_classes(pred, cfg.class_labels), select_classes(ref, cfg.class_labels)
        else:
            pred, ref = binarize(pred), binarize(ref)
    if cfg.crop_enabled:
        box = joint_bounding_box(pred, ref)
        if not box.is_empty:
            pred, ref = crop(pred, box), crop(ref, box)
    if cfg.mode is InputMode.SEMANTIC:
        pred, ref = approximate_instances(pred, ref, cfg.connectivity, cfg.cca_strategy)
    return pred, ref


def _matched(pred: LabelMap, ref: LabelMap, match_cfg: MatchConfig) -> LabelMap:
    table = build_overlap_table(pred, ref)
    return apply_match(pred, ref, match(table, match_cfg, pred, ref))


def evaluate(pred: LabelMap, ref: LabelMap, cfg: EvalConfig = EvalConfig()) -> PanopticResult:
    pred, ref = _prepare(pred, ref, cfg)
    if cfg.mode is not InputMode.MATCHED_INSTANCE:
        pred = _matched(pred, ref, cfg.match)
    return evaluate_matched(pred, ref, cfg)


def sweep_thresholds(pred: LabelMap, ref: LabelMap, cfg: EvalConfig, thresholds: Sequence[float],
                     co_vary_match: bool = False) -> list[tuple[float, PanopticResult]]:
    """Evaluate at each threshold, approximating instances only once.

    Without ``co_vary_match`` the matching is also done once and only the
    evaluation threshold changes; with it, the naive matcher's threshold
    follows the evaluation threshold.
    """
    thresholds = [float(t) for t in thresholds]
    if any(not 0.0 <= t <= 1.0 for t in thresholds):
        raise ValueError("thresholds must lie in [0, 1]")
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be strictly ascending")
    pred, ref = _prepare(pred, ref, cfg)
    rows = []
    if cfg.mode is InputMode.MATCHED_INSTANCE or not co_vary_match \
            or cfg.match.matcher is Matcher.MAXIMIZE_MANY_TO_ONE:
        matched = pred if cfg.mode is InputMode.MATCHED_INSTANCE else _matched(pred, ref, cfg.match)
        case = _ScoredCase(matched, ref, cfg)
        for t in thresholds:
            rows.append((t, case.score(t, cfg.eval_metric, cfg.edge_policy)))
        return rows
    table = build_overlap_table(pred, ref)
    for t in thresholds:
        result = match(table, replace(cfg.match, threshold=t), pred, ref)
        case = _ScoredCase(apply_match(pred, ref, result), ref, cfg)
        rows.append((t, case.score(t, cfg.eval_metric, cfg.edge_policy)))
    return rows


# ---------------------------------------------------------------- aggregation


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    std: float
    n_finite: int
    n_total: int


def aggregate(results: Iterable[PanopticResult], keys: Sequence[str] = SCORE_KEYS) -> dict[str, MetricSummary]:
    """Mean and population std per metric over the finite values only."""
    results = list(results)
    if not results:
        raise ValueError("cannot aggregate an empty list of results")
    out = {}
    for key in keys:
        values = np.array([float(getattr(r, key)) for r in results], dtype=np.float64)
        finite = values[np.isfinite(values)]
        if finite.size:
            mean, std = float(np.mean(finite)), float(np.std(finite))
        else:
            mean = std = math.nan
        out[key] = MetricSummary(mean, std, int(finite.size), int(values.size))
    return out


def encode_value(value):
    """JSON-safe scalar: non-finite floats become "nan", "inf" or "-inf"."""
    if isinstance(value, float) and not math.isfinite(value):
        if math.isnan(value):
            return "nan"
        return "inf" if value > 0 else "-inf"
    return value
