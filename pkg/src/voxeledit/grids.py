"""Dense 3D grid primitives: masks, scalar fields, Gaussian heatmaps,
exact Manhattan distance transforms, signed distances, percentile stats.

All arrays are indexed [i, j, k] with shape (H, W, D) and C order; the
serialized linear index of voxel (i, j, k) is (i*W + j)*D + k.  Grids are
isotropic; distances are kept in voxel units and converted to millimeters
only when reports are produced.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage


class GridError(ValueError):
    """Invalid grid construction or operation input."""


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridMeta:
    """Voxel grid shape plus isotropic spacing in millimeters."""

    dims: tuple[int, int, int]
    spacing_mm: float = 1.0

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing_mm", float(self.spacing_mm))
        if len(dims) != 3 or any(d < 4 for d in dims):
            raise GridError(f"grid dims must be three values >= 4, got {dims}")
        if not self.spacing_mm > 0:
            raise GridError(f"spacing_mm must be positive, got {self.spacing_mm}")

    @property
    def n_voxels(self) -> int:
        h, w, d = self.dims
        return h * w * d

    def center(self) -> np.ndarray:
        """Geometric center of the voxel lattice, in voxel coordinates."""
        return (np.asarray(self.dims, dtype=float) - 1.0) / 2.0


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ScalarField:
    """Real-valued voxel grid (probabilities, heatmaps, distances)."""

    meta: GridMeta
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.shape != self.meta.dims:
            raise GridError(f"field shape {data.shape} != grid dims {self.meta.dims}")
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float64)
        object.__setattr__(self, "data", _freeze(data))

    def require_unit_range(self, what: str = "field") -> None:
        lo, hi = float(self.data.min()), float(self.data.max())
        if lo < 0.0 or hi > 1.0:
            raise GridError(f"{what} values must lie in [0, 1], got [{lo}, {hi}]")


@dataclass(frozen=True)
class BinaryMask:
    """Binary voxel grid stored as uint8 {0, 1}."""

    meta: GridMeta
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.shape != self.meta.dims:
            raise GridError(f"mask shape {data.shape} != grid dims {self.meta.dims}")
        if data.dtype == np.bool_:
            data = data.astype(np.uint8)
        if data.dtype != np.uint8:
            u8 = data.astype(np.uint8)
            if not np.array_equal(u8, data):
                raise GridError("mask voxels must be 0/1")
            data = u8
        if data.size and int(data.max(initial=0)) > 1:
            raise GridError("mask voxels must be 0/1")
        object.__setattr__(self, "data", _freeze(data))

    def as_bool(self) -> np.ndarray:
        return self.data.view(bool) if self.data.dtype == np.uint8 else self.data.astype(bool)

    def count(self) -> int:
        return int(self.data.sum())


@dataclass(frozen=True)
class VoxelSet:
    """Sparse set of integer voxel coordinates on a grid (no duplicates)."""

    meta: GridMeta
    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.int64).reshape(-1, 3)
        if pts.size:
            dims = np.asarray(self.meta.dims)
            if (pts < 0).any() or (pts >= dims).any():
                raise GridError("voxel set contains out-of-grid points")
            # canonical order also deduplicates
            pts = np.unique(pts, axis=0)
        object.__setattr__(self, "points", _freeze(pts))

    def __len__(self) -> int:
        return self.points.shape[0]

    def to_mask(self) -> BinaryMask:
        m = np.zeros(self.meta.dims, dtype=np.uint8)
        if len(self):
            m[tuple(self.points.T)] = 1
        return BinaryMask(self.meta, m)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def make_gaussian_map(points: VoxelSet, sigma: float) -> ScalarField:
    """Gaussian heatmap peaked at 1.0 on every point of the set.

    The value at voxel v is max over points p of exp(-|v-p|^2 / (2 sigma^2))
    with Euclidean distance in voxel units; equivalently exp applied to the
    exact squared Euclidean distance transform.
    """
    if len(points) == 0:
        raise GridError("empty scribble")
    if not sigma > 0:
        raise GridError(f"sigma must be positive, got {sigma}")
    off = np.ones(points.meta.dims, dtype=bool)
    off[tuple(points.points.T)] = False
    d = ndimage.distance_transform_edt(off)
    g = np.exp(-(d * d) / (2.0 * sigma * sigma))
    return ScalarField(points.meta, g)


def complement_map(a: ScalarField) -> ScalarField:
    """Per-voxel 1 - A for a unit-range field."""
    a.require_unit_range("heatmap")
    return ScalarField(a.meta, 1.0 - a.data)


def manhattan_distance_transform(targets: VoxelSet) -> ScalarField:
    """Exact minimum Manhattan distance (voxel units) to the target set.

    Separable min-plus sweeps: L1 distance factors per axis, so three
    forward/backward passes give the exact transform in O(N).
    """
    if len(targets) == 0:
        raise GridError("empty target set")
    dims = targets.meta.dims
    big = float(sum(dims) + 1)
    d = np.full(dims, big, dtype=np.float64)
    d[tuple(targets.points.T)] = 0.0
    for axis in range(3):
        d = np.moveaxis(d, axis, 0)
        for s in range(1, d.shape[0]):
            np.minimum(d[s], d[s - 1] + 1.0, out=d[s])
        for s in range(d.shape[0] - 2, -1, -1):
            np.minimum(d[s], d[s + 1] + 1.0, out=d[s])
        d = np.moveaxis(d, 0, axis)
    return ScalarField(targets.meta, d)


def threshold_map(a: ScalarField, tau: float) -> BinaryMask:
    """Binarize a unit-range field; voxel is 1 iff value >= tau."""
    if not 0.0 <= tau <= 1.0:
        raise GridError(f"tau must lie in [0, 1], got {tau}")
    return BinaryMask(a.meta, (a.data >= tau).astype(np.uint8))


def mask_boundary(mask: BinaryMask) -> np.ndarray:
    """Boolean array of mask voxels with >= 1 six-connected background
    neighbor; voxels outside the grid count as background."""
    m = mask.as_bool()
    interior = ndimage.binary_erosion(m, structure=_SIX_CONN, border_value=0)
    return m & ~interior


_SIX_CONN = ndimage.generate_binary_structure(3, 1)


def boundary_voxels(mask: BinaryMask) -> VoxelSet:
    """Mask boundary as a VoxelSet."""
    b = mask_boundary(mask)
    return VoxelSet(mask.meta, np.argwhere(b))


def signed_distance(mask: BinaryMask) -> ScalarField:
    """Manhattan distance to the mask boundary surface: negative inside,
    zero on boundary voxels, positive outside."""
    m = mask.as_bool()
    n_in = int(m.sum())
    if n_in == 0 or n_in == m.size:
        raise GridError("degenerate mask")
    dt = manhattan_distance_transform(boundary_voxels(mask)).data
    out = np.where(m, -dt, dt)
    out[mask_boundary(mask)] = 0.0  # boundary dt is 0; avoid -0.0 inside
    return ScalarField(mask.meta, out)


def percentile(values, p: float) -> float:
    """Nearest-rank percentile: sorted ascending, element at index
    ceil(p/100 * n) - 1, clamped to [0, n-1]."""
    vals = np.asarray(values, dtype=np.float64).ravel()
    if vals.size == 0:
        raise GridError("percentile of empty list")
    if not 0.0 <= p <= 100.0:
        raise GridError(f"percentile rank must lie in [0, 100], got {p}")
    idx = int(np.ceil(p / 100.0 * vals.size)) - 1
    idx = min(max(idx, 0), vals.size - 1)
    return float(np.sort(vals)[idx])
