"""Pure-Python/numpy stand-ins for the compiled kernels in ``_cca_kernels``.

Same signatures and outputs; used when the extension is not built or when
``INSTMETRICS_PURE_PYTHON`` is set.
"""

from collections import deque

import numpy as np


def _shifted_pairs(fg: np.ndarray, offset) -> tuple[tuple[slice, ...], tuple[slice, ...]]:
    # slices selecting (voxel, voxel + offset) pairs that are both in bounds
    here, there = [], []
    for d, n in zip(offset, fg.shape):
        if d < 0:
            here.append(slice(-d, n))
            there.append(slice(0, n + d))
        else:
            here.append(slice(0, n - d))
            there.append(slice(d, n))
    return tuple(here), tuple(there)


def two_pass_union_find(fg: np.ndarray, backward: np.ndarray):
    """Union-find over foreground adjacency, vectorized with numpy.

    Edges are hooked root-to-smaller-root and paths are fully compressed by
    pointer jumping until every edge joins equal roots. Each root ends up as
    the raster-first voxel of its component, so ranking roots gives the
    canonical numbering.
    """
    fg = np.asarray(fg, dtype=bool)
    out = np.zeros(fg.shape, dtype=np.uint32)
    nfg = int(fg.sum())
    if nfg == 0:
        return out, 0
    compact = np.full(fg.shape, -1, dtype=np.int64)
    compact[fg] = np.arange(nfg)

    src, dst = [], []
    for offset in backward:
        here, there = _shifted_pairs(fg, offset)
        both = fg[here] & fg[there]
        src.append(compact[here][both])
        dst.append(compact[there][both])
    a = np.concatenate(src) if src else np.empty(0, np.int64)
    b = np.concatenate(dst) if dst else np.empty(0, np.int64)

    parent = np.arange(nfg, dtype=np.int64)
    while a.size:
        ra, rb = parent[a], parent[b]
        open_ = ra != rb
        if not open_.any():
            break
        a, b, ra, rb = a[open_], b[open_], ra[open_], rb[open_]
        np.minimum.at(parent, np.maximum(ra, rb), np.minimum(ra, rb))
        while True:
            jumped = parent[parent]
            if np.array_equal(jumped, parent):
                break
            parent = jumped

    roots, labels = np.unique(parent, return_inverse=True)
    out[fg] = labels.astype(np.uint32) + 1
    return out, int(roots.size)


def flood_fill(fg: np.ndarray, offsets: np.ndarray):
    """Breadth-first fill from each unlabelled foreground voxel in raster order."""
    nz, ny, nx = fg.shape
    plane = ny * nx
    flat = np.asarray(fg, dtype=bool).ravel().tolist()
    lab = [0] * len(flat)
    steps = [tuple(int(v) for v in off) for off in offsets]
    count = 0
    for start, is_fg in enumerate(flat):
        if not is_fg or lab[start]:
            continue
        count += 1
        lab[start] = count
        queue = deque([start])
        while queue:
            j = queue.popleft()
            z, rem = divmod(j, plane)
            y, x = divmod(rem, nx)
            for dz, dy, dx in steps:
                z2, y2, x2 = z + dz, y + dy, x + dx
                if 0 <= z2 < nz and 0 <= y2 < ny and 0 <= x2 < nx:
                    k = z2 * plane + y2 * nx + x2
                    if flat[k] and not lab[k]:
                        lab[k] = count
                        queue.append(k)
    return np.array(lab, dtype=np.uint32).reshape(fg.shape), count
