"""Per-instance overlap and surface-distance metrics.

IOU and DSC are computed from an :class:`OverlapTable` built in one pass over
the two instance maps. ASSD works on surface voxels (foreground voxels with a
background or out-of-bounds neighbour) and pools both directed distance sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .cca import check_connectivity, face_connectivity, neighbor_offsets
from .volume import LabelMap, LabelMapError


class MetricKind(str, Enum):
    IOU = "iou"
    DSC = "dsc"
    ASSD = "assd"


@dataclass(frozen=True)
class InstancePairStats:
    pred_label: int
    ref_label: int
    intersection: int
    pred_volume: int
    ref_volume: int


@dataclass
class OverlapTable:
    """Voxel counts for every co-occurring (pred, ref) label pair."""

    intersections: dict[tuple[int, int], int] = field(default_factory=dict)
    pred_volumes: dict[int, int] = field(default_factory=dict)
    ref_volumes: dict[int, int] = field(default_factory=dict)

    def stats(self, pred_label: int, ref_label: int) -> InstancePairStats:
        return InstancePairStats(
            pred_label, ref_label,
            self.intersections.get((pred_label, ref_label), 0),
            self.pred_volumes[pred_label], self.ref_volumes[ref_label],
        )

    @property
    def entries(self) -> list[InstancePairStats]:
        return [self.stats(p, r) for p, r in sorted(self.intersections)]


def _volumes(flat: np.ndarray) -> dict[int, int]:
    labels, counts = np.unique(flat[flat > 0], return_counts=True)
    return {int(l): int(c) for l, c in zip(labels, counts)}


def build_overlap_table(pred: LabelMap, ref: LabelMap) -> OverlapTable:
    if pred.shape != ref.shape:
        raise LabelMapError(f"shape mismatch: {pred.shape} vs {ref.shape}")
    p = pred.data.ravel()
    r = ref.data.ravel()
    both = (p > 0) & (r > 0)
    intersections = {}
    if both.any():
        pairs, counts = np.unique(np.stack([p[both], r[both]], axis=1), axis=0, return_counts=True)
        intersections = {(int(a), int(b)): int(c) for (a, b), c in zip(pairs, counts)}
    return OverlapTable(intersections, _volumes(p), _volumes(r))


def iou_from_counts(intersection: int, pred_volume: int, ref_volume: int) -> float:
    union = pred_volume + ref_volume - intersection
    if union <= 0:
        raise ValueError("IOU is undefined for two empty masks")
    return intersection / union


def dsc_from_counts(intersection: int, pred_volume: int, ref_volume: int) -> float:
    total = pred_volume + ref_volume
    if total <= 0:
        raise ValueError("DSC is undefined for two empty masks")
    return 2 * intersection / total


def iou(stats: InstancePairStats) -> float:
    return iou_from_counts(stats.intersection, stats.pred_volume, stats.ref_volume)


def dsc(stats: InstancePairStats) -> float:
    return dsc_from_counts(stats.intersection, stats.pred_volume, stats.ref_volume)


def overlap_score(kind: MetricKind | str, intersection: int, pred_volume: int, ref_volume: int) -> float:
    kind = MetricKind(kind)
    if kind is MetricKind.IOU:
        return iou_from_counts(intersection, pred_volume, ref_volume)
    if kind is MetricKind.DSC:
        return dsc_from_counts(intersection, pred_volume, ref_volume)
    raise ValueError(f"{kind.value} is not an overlap metric")


# ----------------------------------------------------------------- surfaces


def surface_mask(mask: np.ndarray, conn: int | None = None) -> np.ndarray:
    """Boolean array marking foreground voxels with a background neighbour.

    Out-of-bounds counts as background. ``conn=None`` uses face adjacency.
    """
    mask = np.asarray(mask, dtype=bool)
    dims = mask.ndim
    conn = face_connectivity(dims) if conn is None else check_connectivity(dims, conn)
    padded = np.pad(mask, 1, constant_values=False)
    interior = np.ones(mask.shape, dtype=bool)
    for step in neighbor_offsets(dims, conn):
        step = step[3 - dims:]
        shifted = tuple(slice(1 + d, n + 1 + d) for d, n in zip(step, mask.shape))
        interior &= padded[shifted]
    return mask & ~interior


def surface_voxels(mask: LabelMap | np.ndarray, conn: int | None = None) -> np.ndarray:
    """Coordinates (k, dims) of surface voxels, in row-major order."""
    arr = mask.data if isinstance(mask, LabelMap) else np.asarray(mask)
    if arr.size and int(arr.max()) > 1:
        raise LabelMapError("surface_voxels expects a binary mask")
    return np.argwhere(surface_mask(arr > 0, conn))


def _directed_sum(src: np.ndarray, dst: np.ndarray) -> float:
    dist, _ = cKDTree(dst).query(src, k=1)
    return float(np.sum(dist))


def assd_arrays(a: np.ndarray, b: np.ndarray, spacing: Sequence[float] | None = None,
                conn: int | None = None) -> float:
    """ASSD between two boolean arrays of equal shape.

    Returns ``inf`` when exactly one mask is empty and ``nan`` when both are.
    """
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise LabelMapError(f"shape mismatch: {a.shape} vs {b.shape}")
    a_any, b_any = bool(a.any()), bool(b.any())
    if not a_any and not b_any:
        return math.nan
    if not a_any or not b_any:
        return math.inf
    scale = np.asarray(spacing if spacing is not None else (1.0,) * a.ndim, dtype=np.float64)
    sa = np.argwhere(surface_mask(a, conn)) * scale
    sb = np.argwhere(surface_mask(b, conn)) * scale
    total = _directed_sum(sa, sb) + _directed_sum(sb, sa)
    return total / (len(sa) + len(sb))


def assd(mask_a: LabelMap, mask_b: LabelMap, conn: int | None = None,
         spacing: Sequence[float] | None = None) -> float:
    """Average symmetric surface distance between two binary maps.

    Distances are Euclidean between voxel centres scaled by ``spacing``
    (defaults to ``mask_a.spacing``); the two directed sums are pooled and
    divided by the total number of surface voxels.
    """
    if mask_a.shape != mask_b.shape:
        raise LabelMapError(f"shape mismatch: {mask_a.shape} vs {mask_b.shape}")
    return assd_arrays(mask_a.data > 0, mask_b.data > 0,
                       spacing if spacing is not None else mask_a.spacing, conn)


def global_dsc(pred: LabelMap, ref: LabelMap, both_empty: float = math.nan) -> float:
    """Volumetric Dice of the binarized maps; ``both_empty`` when neither has foreground."""
    if pred.shape != ref.shape:
        raise LabelMapError(f"shape mismatch: {pred.shape} vs {ref.shape}")
    p = pred.data > 0
    r = ref.data > 0
    total = int(p.sum()) + int(r.sum())
    if total == 0:
        return both_empty
    return 2 * int(np.count_nonzero(p & r)) / total


def pair_metric(kind: MetricKind | str, pred_mask: LabelMap | None, ref_mask: LabelMap | None,
                stats: InstancePairStats | None = None, conn: int | None = None,
                spacing: Sequence[float] | None = None) -> float:
    kind = MetricKind(kind)
    if kind is MetricKind.ASSD:
        return assd(pred_mask, ref_mask, conn, spacing)
    if stats is None:
        p = pred_mask.data > 0
        r = ref_mask.data > 0
        stats = InstancePairStats(1, 1, int(np.count_nonzero(p & r)), int(p.sum()), int(r.sum()))
    return iou(stats) if kind is MetricKind.IOU else dsc(stats)
