"""Instance approximation by connected-component analysis.

Two labelling strategies are available (two-pass union-find and flood fill).
Both number components by the raster (row-major) position of their first
voxel, so their outputs are directly comparable.
"""

from __future__ import annotations

import itertools
import os
from enum import Enum
from functools import lru_cache

import numpy as np

from .volume import LabelMap, LabelMapError, binarize

if os.environ.get("INSTMETRICS_PURE_PYTHON"):
    from . import _cca_fallback as _kernels
    BACKEND = "python"
else:
    try:
        from . import _cca_kernels as _kernels
        BACKEND = "cython"
    except ImportError:
        from . import _cca_fallback as _kernels
        BACKEND = "python"

VALID_CONNECTIVITY = {2: (4, 8), 3: (6, 18, 26)}
DEFAULT_CONNECTIVITY = {2: 8, 3: 26}


class CcaStrategy(str, Enum):
    TWO_PASS_UNION_FIND = "two_pass_union_find"
    FLOOD_FILL = "flood_fill"
    AUTO = "auto"


def check_connectivity(dims: int, conn: int | None) -> int:
    """Return a concrete connectivity for ``dims``; ``None`` selects the default."""
    if dims not in VALID_CONNECTIVITY:
        raise LabelMapError(f"unsupported dimensionality {dims}")
    if conn is None:
        return DEFAULT_CONNECTIVITY[dims]
    if conn not in VALID_CONNECTIVITY[dims]:
        raise LabelMapError(f"connectivity {conn} is not valid for {dims}D maps")
    return conn


def face_connectivity(dims: int) -> int:
    return 4 if dims == 2 else 6


@lru_cache(maxsize=None)
def neighbor_offsets(dims: int, conn: int) -> np.ndarray:
    """All (dz, dy, dx) neighbour steps of a connectivity, as an (k, 3) intp array.

    2D neighbourhoods have dz == 0 so they apply to maps viewed as (1, ny, nx).
    """
    conn = check_connectivity(dims, conn)
    # number of nonzero components a step may have: 4/6 -> 1, 18 -> 2, 8/26 -> all
    max_nonzero = {4: 1, 6: 1, 18: 2, 8: 2, 26: 3}[conn]
    steps = []
    for step in itertools.product((-1, 0, 1), repeat=dims):
        nonzero = sum(1 for s in step if s)
        if 0 < nonzero <= max_nonzero:
            steps.append((0,) * (3 - dims) + step)
    out = np.array(steps, dtype=np.intp)
    out.flags.writeable = False
    return out


@lru_cache(maxsize=None)
def backward_offsets(dims: int, conn: int) -> np.ndarray:
    """The half of the neighbourhood already visited by a raster scan."""
    full = neighbor_offsets(dims, conn)
    out = np.array([s for s in full.tolist() if tuple(s) < (0, 0, 0)], dtype=np.intp)
    out.flags.writeable = False
    return out


def resolve_auto_strategy(dims: int, strategy: CcaStrategy | str = CcaStrategy.AUTO) -> CcaStrategy:
    """Flood fill for 2D, union-find for 3D; concrete strategies pass through."""
    strategy = CcaStrategy(strategy)
    if strategy is not CcaStrategy.AUTO:
        return strategy
    if dims == 2:
        return CcaStrategy.FLOOD_FILL
    if dims == 3:
        return CcaStrategy.TWO_PASS_UNION_FIND
    raise LabelMapError(f"unsupported dimensionality {dims}")


def label_array(fg: np.ndarray, conn: int | None = None,
                strategy: CcaStrategy | str = CcaStrategy.AUTO, kernels=None):
    """Label a boolean/0-1 numpy array; returns (uint32 labels, count)."""
    dims = fg.ndim
    conn = check_connectivity(dims, conn)
    strategy = resolve_auto_strategy(dims, strategy)
    kernels = kernels or _kernels
    vol = np.ascontiguousarray(fg, dtype=np.uint8)
    if dims == 2:
        vol = vol.reshape((1,) + vol.shape)
    if strategy is CcaStrategy.TWO_PASS_UNION_FIND:
        labels, count = kernels.two_pass_union_find(vol, backward_offsets(dims, conn))
    else:
        labels, count = kernels.flood_fill(vol, neighbor_offsets(dims, conn))
    return labels.reshape(fg.shape), count


def connected_components(label_map: LabelMap, conn: int | None = None,
                         strategy: CcaStrategy | str = CcaStrategy.AUTO) -> tuple[LabelMap, int]:
    """Label the connected foreground components of a binary map.

    Parameters
    ----------
    label_map
        Map with labels in {0, 1}.
    conn
        4/8 in 2D, 6/18/26 in 3D. ``None`` picks 8 (2D) or 26 (3D).
    strategy
        ``two_pass_union_find``, ``flood_fill`` or ``auto``.

    Returns
    -------
    (instances, count)
        Instance map with labels 1..count, numbered by first voxel in
        row-major order.
    """
    data = label_map.data
    if data.size and int(data.max()) > 1:
        raise LabelMapError("connected_components expects a binary map (labels 0/1)")
    labels, count = label_array(data.astype(bool), conn, strategy)
    return LabelMap(labels, label_map.spacing), count


def approximate_instances(pred: LabelMap, ref: LabelMap, conn: int | None = None,
                          strategy: CcaStrategy | str = CcaStrategy.AUTO) -> tuple[LabelMap, LabelMap]:
    if pred.shape != ref.shape:
        raise LabelMapError(f"shape mismatch: {pred.shape} vs {ref.shape}")
    pred_inst, _ = connected_components(binarize(pred), conn, strategy)
    ref_inst, _ = connected_components(binarize(ref), conn, strategy)
    return pred_inst, ref_inst
