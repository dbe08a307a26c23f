"""Label maps and their file I/O."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numpy.lib import format as npy_format

LABEL_DTYPE = np.dtype(np.uint64)
MAX_LABEL = int(np.iinfo(LABEL_DTYPE).max)

_RAW_DTYPES = {
    "u8": "<u1", "u16": "<u2", "u32": "<u4", "u64": "<u8",
    "i8": "<i1", "i16": "<i2", "i32": "<i4", "i64": "<i8",
}


class LabelMapError(ValueError):
    """Raised for malformed label maps or label-map files."""


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Immutable 2D/3D integer label map, background = 0.

    ``data`` is stored as a read-only C-ordered ``uint64`` array; any integer
    input is converted without changing values.
    """

    data: np.ndarray
    spacing: tuple[float, ...] = ()

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.dtype.kind not in "iub":
            raise LabelMapError(f"label maps must be integer-valued, got dtype {arr.dtype}")
        if arr.ndim not in (2, 3):
            raise LabelMapError(f"label maps must be 2D or 3D, got {arr.ndim}D")
        if any(n <= 0 for n in arr.shape):
            raise LabelMapError(f"all extents must be positive, got shape {arr.shape}")
        if arr.dtype.kind == "i" and arr.size and arr.min() < 0:
            raise LabelMapError("negative labels are not allowed")
        if arr.dtype != LABEL_DTYPE or not arr.flags.c_contiguous or arr.flags.writeable:
            arr = np.ascontiguousarray(arr, dtype=LABEL_DTYPE).copy()
            arr.flags.writeable = False
        spacing = tuple(float(s) for s in self.spacing) if self.spacing else (1.0,) * arr.ndim
        if len(spacing) != arr.ndim:
            raise LabelMapError(f"spacing {spacing} does not match {arr.ndim} dimensions")
        if not all(s > 0 and math.isfinite(s) for s in spacing):
            raise LabelMapError(f"spacing must be positive and finite, got {spacing}")
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spacing", spacing)

    @property
    def dims(self) -> int:
        return self.data.ndim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def with_spacing(self, spacing: Sequence[float]) -> "LabelMap":
        return LabelMap(self.data, tuple(spacing))

    def __eq__(self, other):
        if not isinstance(other, LabelMap):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.spacing == other.spacing
            and bool(np.array_equal(self.data, other.data))
        )

    __hash__ = None


@dataclass(frozen=True)
class BoundingBox:
    lo: tuple[int, ...]
    hi: tuple[int, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise LabelMapError("bounding box corners differ in dimensionality")
        if any(l < 0 or l > h for l, h in zip(self.lo, self.hi)):
            raise LabelMapError(f"invalid bounding box lo={self.lo} hi={self.hi}")

    @property
    def is_empty(self) -> bool:
        return any(l == h for l, h in zip(self.lo, self.hi))

    @property
    def slices(self) -> tuple[slice, ...]:
        return tuple(slice(l, h) for l, h in zip(self.lo, self.hi))


# --------------------------------------------------------------------------- I/O


def _check_int_dtype(dtype: np.dtype, where: str) -> np.dtype:
    if dtype.kind not in "iu" or dtype.itemsize not in (1, 2, 4, 8):
        raise LabelMapError(f"{where}: unsupported dtype {dtype.str}")
    if dtype.byteorder == ">":
        raise LabelMapError(f"{where}: big-endian payloads are not supported")
    return dtype.newbyteorder("<")


def _read_npy(path: Path) -> tuple[np.ndarray, tuple[float, ...]]:
    with open(path, "rb") as fh:
        try:
            version = npy_format.read_magic(fh)
        except ValueError as exc:
            raise LabelMapError(f"{path}: not an .npy file ({exc})") from None
        if version != (1, 0):
            raise LabelMapError(f"{path}: only .npy version 1.0 is supported, got {version}")
        try:
            shape, fortran_order, dtype = npy_format.read_array_header_1_0(fh)
        except ValueError as exc:
            raise LabelMapError(f"{path}: bad .npy header ({exc})") from None
        payload = fh.read()
    if fortran_order:
        raise LabelMapError(f"{path}: fortran_order=True is not supported")
    dtype = _check_int_dtype(dtype, str(path))
    expected = math.prod(shape) * dtype.itemsize
    if len(payload) != expected:
        raise LabelMapError(
            f"{path}: payload size mismatch (header implies {expected} bytes, found {len(payload)})"
        )
    return np.frombuffer(payload, dtype=dtype).reshape(shape), ()


def _raw_paths(path: Path) -> tuple[Path, Path]:
    return path.with_suffix(".bin"), path.with_suffix(".json")


def _read_raw(path: Path) -> tuple[np.ndarray, tuple[float, ...]]:
    bin_path, json_path = _raw_paths(path)
    with open(json_path) as fh:
        try:
            meta = json.load(fh)
        except json.JSONDecodeError as exc:
            raise LabelMapError(f"{json_path}: invalid sidecar ({exc})") from None
    try:
        shape = tuple(int(n) for n in meta["shape"])
        dtype = np.dtype(_RAW_DTYPES[meta["dtype"]])
    except (KeyError, TypeError, ValueError) as exc:
        raise LabelMapError(f"{json_path}: sidecar needs 'shape' and a supported 'dtype' ({exc})") from None
    spacing = tuple(float(s) for s in meta.get("spacing") or ())
    payload = bin_path.read_bytes()
    expected = math.prod(shape) * dtype.itemsize
    if len(payload) != expected:
        raise LabelMapError(
            f"{bin_path}: payload size mismatch (sidecar implies {expected} bytes, found {len(payload)})"
        )
    return np.frombuffer(payload, dtype=dtype).reshape(shape), spacing


def _guess_format(path: Path) -> str:
    suffix = path.suffix.lower()
    if suffix == ".npy":
        return "npy"
    if suffix in (".bin", ".json"):
        return "raw"
    raise LabelMapError(f"{path}: cannot infer format from suffix {suffix!r}")


def load_label_map(path, format_hint: str | None = None) -> LabelMap:
    """Read a label map from a ``.npy`` (v1.0) file or a raw ``.bin``/``.json`` pair.

    Integer payloads of any supported width are widened to ``uint64``.
    Raises ``LabelMapError`` for malformed content and ``OSError`` for
    unreadable files.
    """
    path = Path(path)
    fmt = format_hint or _guess_format(path)
    if fmt == "npy":
        arr, spacing = _read_npy(path)
    elif fmt == "raw":
        arr, spacing = _read_raw(path)
    else:
        raise LabelMapError(f"unknown format {fmt!r}")
    try:
        return LabelMap(arr, spacing)
    except LabelMapError as exc:
        raise LabelMapError(f"{path}: {exc}") from None


def _narrowest_unsigned(arr: np.ndarray) -> np.dtype:
    top = int(arr.max()) if arr.size else 0
    for dt in ("<u1", "<u2", "<u4"):
        if top <= np.iinfo(dt).max:
            return np.dtype(dt)
    return np.dtype("<u8")


def save_label_map(label_map: LabelMap, path, format: str | None = None) -> None:
    """Write ``label_map`` using the narrowest unsigned dtype that holds its labels.

    The raw format writes ``<name>.bin`` and a ``<name>.json`` sidecar that
    also records the spacing.
    """
    path = Path(path)
    fmt = format or _guess_format(path)
    dtype = _narrowest_unsigned(label_map.data)
    arr = label_map.data.astype(dtype)
    if fmt == "npy":
        with open(path, "wb") as fh:
            npy_format.write_array(fh, arr, version=(1, 0), allow_pickle=False)
    elif fmt == "raw":
        bin_path, json_path = _raw_paths(path)
        tag = f"u{dtype.itemsize * 8}"
        bin_path.write_bytes(arr.tobytes(order="C"))
        with open(json_path, "w") as fh:
            json.dump({"shape": list(arr.shape), "dtype": tag, "spacing": list(label_map.spacing)}, fh)
    else:
        raise LabelMapError(f"unknown format {fmt!r}")


# ------------------------------------------------------------------ operations


def binarize(label_map: LabelMap) -> LabelMap:
    return LabelMap((label_map.data > 0).astype(np.uint8), label_map.spacing)


def select_classes(label_map: LabelMap, classes: Iterable[int]) -> LabelMap:
    """Binary map of the voxels whose label is one of ``classes``."""
    wanted = np.array(sorted(set(int(c) for c in classes)), dtype=LABEL_DTYPE)
    return LabelMap(np.isin(label_map.data, wanted).astype(np.uint8), label_map.spacing)


def unique_labels(label_map: LabelMap) -> list[int]:
    labels = np.unique(label_map.data)
    return [int(v) for v in labels if v != 0]


def _check_same_grid(a: LabelMap, b: LabelMap) -> None:
    if a.shape != b.shape:
        raise LabelMapError(f"shape mismatch: {a.shape} vs {b.shape}")


def joint_bounding_box(a: LabelMap, b: LabelMap) -> BoundingBox:
    """Smallest box holding every nonzero voxel of ``a`` or ``b``.

    Returns the all-zero empty box when both maps are empty.
    """
    _check_same_grid(a, b)
    fg = (a.data > 0) | (b.data > 0)
    if not fg.any():
        zero = (0,) * a.dims
        return BoundingBox(zero, zero)
    lo, hi = [], []
    for axis in range(fg.ndim):
        other = tuple(i for i in range(fg.ndim) if i != axis)
        hits = np.flatnonzero(fg.any(axis=other))
        lo.append(int(hits[0]))
        hi.append(int(hits[-1]) + 1)
    return BoundingBox(tuple(lo), tuple(hi))


def crop(label_map: LabelMap, box: BoundingBox, margin: int = 0) -> LabelMap:
    if margin < 0:
        raise LabelMapError("margin must be non-negative")
    if len(box.lo) != label_map.dims or any(h > n for h, n in zip(box.hi, label_map.shape)):
        raise LabelMapError(f"box {box} does not fit shape {label_map.shape}")
    lo = [max(0, l - margin) for l in box.lo]
    hi = [min(n, h + margin) for h, n in zip(box.hi, label_map.shape)]
    if any(l == h for l, h in zip(lo, hi)):
        raise LabelMapError("cannot crop to an empty box")
    region = tuple(slice(l, h) for l, h in zip(lo, hi))
    return LabelMap(label_map.data[region], label_map.spacing)


def label_boxes(arr: np.ndarray) -> dict[int, BoundingBox]:
    """Per-label bounding boxes for every positive label, in one pass over the foreground."""
    flat = np.flatnonzero(arr)
    if flat.size == 0:
        return {}
    labels, dense = np.unique(arr.ravel()[flat], return_inverse=True)
    coords = np.unravel_index(flat, arr.shape)
    k = labels.size
    lo = np.empty((k, arr.ndim), dtype=np.int64)
    hi = np.empty((k, arr.ndim), dtype=np.int64)
    for axis, c in enumerate(coords):
        col_lo = np.full(k, np.iinfo(np.int64).max, dtype=np.int64)
        col_hi = np.full(k, -1, dtype=np.int64)
        np.minimum.at(col_lo, dense, c)
        np.maximum.at(col_hi, dense, c)
        lo[:, axis] = col_lo
        hi[:, axis] = col_hi + 1
    return {
        int(lab): BoundingBox(tuple(int(v) for v in lo[i]), tuple(int(v) for v in hi[i]))
        for i, lab in enumerate(labels)
    }
