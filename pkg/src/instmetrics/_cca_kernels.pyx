# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled connected-component kernels.

Both kernels take a C-contiguous ``uint8`` volume of shape (nz, ny, nx)
(2D maps are passed with nz == 1) and an (k, 3) array of neighbour offsets,
and return ``(labels, count)`` with labels numbered by the raster position
of each component's first voxel.
"""

import numpy as np

from libc.stdint cimport uint8_t, uint32_t


cdef inline Py_ssize_t _find(uint32_t[::1] parent, Py_ssize_t x) noexcept nogil:
    cdef Py_ssize_t root = x, nxt
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = <uint32_t>root
        x = nxt
    return root


cdef inline void _union(uint32_t[::1] parent, uint8_t[::1] rank,
                        Py_ssize_t a, Py_ssize_t b) noexcept nogil:
    a = _find(parent, a)
    b = _find(parent, b)
    if a == b:
        return
    if rank[a] < rank[b]:
        parent[a] = <uint32_t>b
    elif rank[a] > rank[b]:
        parent[b] = <uint32_t>a
    else:
        parent[b] = <uint32_t>a
        rank[a] += 1


def two_pass_union_find(const uint8_t[:, :, ::1] fg, const Py_ssize_t[:, ::1] backward):
    """Raster-scan labelling; ``backward`` holds only offsets preceding the voxel."""
    cdef Py_ssize_t nz = fg.shape[0], ny = fg.shape[1], nx = fg.shape[2]
    cdef Py_ssize_t nb = backward.shape[0]
    cdef Py_ssize_t z, y, x, k, zz, yy, xx
    cdef uint32_t cur, lab_nb, nxt = 1, count = 0
    cdef Py_ssize_t nfg = 0

    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                if fg[z, y, x]:
                    nfg += 1

    out = np.zeros((nz, ny, nx), dtype=np.uint32)
    parent_arr = np.zeros(nfg + 1, dtype=np.uint32)
    rank_arr = np.zeros(nfg + 1, dtype=np.uint8)
    remap_arr = np.zeros(nfg + 1, dtype=np.uint32)
    cdef uint32_t[:, :, ::1] lab = out
    cdef uint32_t[::1] parent = parent_arr
    cdef uint8_t[::1] rank = rank_arr
    cdef uint32_t[::1] remap = remap_arr

    with nogil:
        for z in range(nz):
            for y in range(ny):
                for x in range(nx):
                    if not fg[z, y, x]:
                        continue
                    cur = 0
                    for k in range(nb):
                        zz = z + backward[k, 0]
                        yy = y + backward[k, 1]
                        xx = x + backward[k, 2]
                        if zz < 0 or zz >= nz or yy < 0 or yy >= ny or xx < 0 or xx >= nx:
                            continue
                        lab_nb = lab[zz, yy, xx]
                        if lab_nb == 0:
                            continue
                        if cur == 0:
                            cur = lab_nb
                        elif lab_nb != cur:
                            _union(parent, rank, cur, lab_nb)
                    if cur == 0:
                        cur = nxt
                        parent[nxt] = nxt
                        nxt += 1
                    lab[z, y, x] = cur

        # second pass: resolve roots and renumber in first-encounter order
        for z in range(nz):
            for y in range(ny):
                for x in range(nx):
                    cur = lab[z, y, x]
                    if cur == 0:
                        continue
                    k = _find(parent, cur)
                    if remap[k] == 0:
                        count += 1
                        remap[k] = count
                    lab[z, y, x] = remap[k]

    return out, int(count)


def flood_fill(const uint8_t[:, :, ::1] fg, const Py_ssize_t[:, ::1] offsets):
    """Seeded depth-first fill over the full neighbourhood ``offsets``."""
    cdef Py_ssize_t nz = fg.shape[0], ny = fg.shape[1], nx = fg.shape[2]
    cdef Py_ssize_t nb = offsets.shape[0]
    cdef Py_ssize_t plane = ny * nx
    cdef Py_ssize_t z, y, x, k, zz, yy, xx, z2, y2, x2, j, top
    cdef uint32_t count = 0

    out = np.zeros((nz, ny, nx), dtype=np.uint32)
    stack_arr = np.empty(max(nz * plane, 1), dtype=np.intp)
    cdef uint32_t[:, :, ::1] lab = out
    cdef Py_ssize_t[::1] stack = stack_arr

    with nogil:
        for z in range(nz):
            for y in range(ny):
                for x in range(nx):
                    if not fg[z, y, x] or lab[z, y, x] != 0:
                        continue
                    count += 1
                    lab[z, y, x] = count
                    stack[0] = z * plane + y * nx + x
                    top = 1
                    while top > 0:
                        top -= 1
                        j = stack[top]
                        zz = j // plane
                        yy = (j - zz * plane) // nx
                        xx = j - zz * plane - yy * nx
                        for k in range(nb):
                            z2 = zz + offsets[k, 0]
                            y2 = yy + offsets[k, 1]
                            x2 = xx + offsets[k, 2]
                            if z2 < 0 or z2 >= nz or y2 < 0 or y2 >= ny or x2 < 0 or x2 >= nx:
                                continue
                            if fg[z2, y2, x2] and lab[z2, y2, x2] == 0:
                                lab[z2, y2, x2] = count
                                stack[top] = z2 * plane + y2 * nx + x2
                                top += 1

    return out, int(count)
