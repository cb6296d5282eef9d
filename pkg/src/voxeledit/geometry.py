"""Synthetic rotational sweep geometry.

Frames are planar slices rotated about the grid's vertical axis (axis 0)
through a pivot point, mimicking a catheter-style sweep.  Frame pixel (r, c)
maps rigidly into the grid: rows run along the vertical axis, columns along
the rotated horizontal direction in the (j, k) plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grids import BinaryMask, GridMeta, VoxelSet, mask_boundary


class GeometryError(ValueError):
    """Invalid pose or sweep construction."""


@dataclass(frozen=True)
class FramePose:
    """Placement of one 2D frame in the voxel grid."""

    frame_id: int
    angle_rad: float
    pivot: np.ndarray = field(repr=False)
    pixel_spacing: float = 1.0
    frame_dims: tuple[int, int] = (0, 0)  # (rows, cols)

    def __post_init__(self):
        piv = np.asarray(self.pivot, dtype=np.float64).reshape(3)
        piv.setflags(write=False)
        object.__setattr__(self, "pivot", piv)
        object.__setattr__(self, "frame_dims", tuple(int(v) for v in self.frame_dims))
        if not 0.0 <= self.angle_rad < 2.0 * math.pi:
            raise GeometryError(f"angle must lie in [0, 2pi), got {self.angle_rad}")
        if self.pixel_spacing <= 0:
            raise GeometryError("pixel_spacing must be positive")
        if any(v < 2 for v in self.frame_dims):
            raise GeometryError(f"frame dims too small: {self.frame_dims}")

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(row axis, column axis, plane normal) as unit voxel-space vectors."""
        c, s = math.cos(self.angle_rad), math.sin(self.angle_rad)
        # snap quarter-turn residue so axis-aligned planes rasterize exactly
        if abs(c) < 1e-12:
            c, s = 0.0, math.copysign(1.0, s)
        elif abs(s) < 1e-12:
            c, s = math.copysign(1.0, c), 0.0
        e_row = np.array([1.0, 0.0, 0.0])
        e_col = np.array([0.0, c, s])
        normal = np.array([0.0, -s, c])
        return e_row, e_col, normal

    def to_json(self) -> dict:
        return {
            "frame_id": self.frame_id,
            "angle_rad": self.angle_rad,
            "pivot": [float(v) for v in self.pivot],
            "pixel_spacing": self.pixel_spacing,
            "rows": self.frame_dims[0],
            "cols": self.frame_dims[1],
        }

    @staticmethod
    def from_json(obj: dict) -> "FramePose":
        return FramePose(
            frame_id=int(obj["frame_id"]),
            angle_rad=float(obj["angle_rad"]),
            pivot=np.asarray(obj["pivot"], dtype=np.float64),
            pixel_spacing=float(obj["pixel_spacing"]),
            frame_dims=(int(obj["rows"]), int(obj["cols"])),
        )


@dataclass(frozen=True)
class FrameStack:
    """Ordered collection of frame poses on one grid."""

    meta: GridMeta
    poses: tuple[FramePose, ...]

    def __post_init__(self):
        poses = tuple(self.poses)
        object.__setattr__(self, "poses", poses)
        if len(poses) < 2:
            raise GeometryError("a sweep needs at least 2 frames")
        ids = [p.frame_id for p in poses]
        if ids != sorted(set(ids)):
            raise GeometryError("frame ids must be unique and ordered")

    def __len__(self) -> int:
        return len(self.poses)

    def pose(self, frame_id: int) -> FramePose:
        for p in self.poses:
            if p.frame_id == frame_id:
                return p
        raise GeometryError(f"no frame with id {frame_id}")


def synthesize_sweep(
    meta: GridMeta,
    n_frames: int,
    span_rad: float = math.pi,
    pivot=None,
    frame_dims: tuple[int, int] | None = None,
    pixel_spacing: float = 1.0,
) -> FrameStack:
    """Uniformly spaced sweep: frame f sits at angle f * span / n_frames."""
    if n_frames < 2:
        raise GeometryError("n_frames must be >= 2")
    if not 0.0 < span_rad <= 2.0 * math.pi:
        raise GeometryError(f"span must lie in (0, 2pi], got {span_rad}")
    if pivot is None:
        pivot = meta.center()
    if frame_dims is None:
        frame_dims = (meta.dims[0], meta.dims[1])
    poses = tuple(
        FramePose(
            frame_id=f,
            angle_rad=f * span_rad / n_frames,
            pivot=pivot,
            pixel_spacing=pixel_spacing,
            frame_dims=frame_dims,
        )
        for f in range(n_frames)
    )
    return FrameStack(meta, poses)


# ---------------------------------------------------------------------------
# Pixel <-> voxel mapping
# ---------------------------------------------------------------------------

def project_pixel_to_voxel(pose: FramePose, pixel) -> np.ndarray:
    """Map frame pixel (r, c) to real voxel coordinates.

    The frame center pixel lands on the pivot; results may fall outside the
    grid (use in_grid to flag them).
    """
    r, c = float(pixel[0]), float(pixel[1])
    rows, cols = pose.frame_dims
    e_row, e_col, _ = pose.axes()
    r0, c0 = (rows - 1) / 2.0, (cols - 1) / 2.0
    return pose.pivot + pose.pixel_spacing * ((r - r0) * e_row + (c - c0) * e_col)


def unproject_voxel_to_pixel(pose: FramePose, point) -> tuple[float, float]:
    """Inverse of project_pixel_to_voxel for points on the frame plane."""
    p = np.asarray(point, dtype=np.float64) - pose.pivot
    rows, cols = pose.frame_dims
    e_row, e_col, _ = pose.axes()
    r = float(p @ e_row) / pose.pixel_spacing + (rows - 1) / 2.0
    c = float(p @ e_col) / pose.pixel_spacing + (cols - 1) / 2.0
    return r, c


def in_grid(meta: GridMeta, point) -> bool:
    """Out-of-bounds flag for a real-coordinate point (nearest-voxel rule)."""
    p = np.asarray(point, dtype=np.float64)
    return bool((p > -0.5).all() and (p < np.asarray(meta.dims) - 0.5).all())


# ---------------------------------------------------------------------------
# Plane rasterization and contours
# ---------------------------------------------------------------------------

def _plane_support(pose: FramePose, meta: GridMeta) -> tuple[np.ndarray, np.ndarray]:
    """Decomposed support of the frame plane: a (W, D) horizontal mask and an
    (H,) vertical mask.  The full support is their outer product.

    The slab is half-open, [-0.5, 0.5) in signed plane distance, so a plane
    through a half-integer pivot still rasterizes one voxel thick.
    """
    h, w, d = meta.dims
    _, e_col, normal = pose.axes()
    rows, cols = pose.frame_dims
    jj, kk = np.meshgrid(np.arange(w), np.arange(d), indexing="ij")
    dj = jj - pose.pivot[1]
    dk = kk - pose.pivot[2]
    dist = dj * normal[1] + dk * normal[2]
    c = (dj * e_col[1] + dk * e_col[2]) / pose.pixel_spacing + (cols - 1) / 2.0
    horiz = (dist >= -0.5) & (dist < 0.5) & (c >= -0.5) & (c < cols - 0.5)
    ii = np.arange(h)
    r = (ii - pose.pivot[0]) / pose.pixel_spacing + (rows - 1) / 2.0
    vert = (r >= -0.5) & (r < rows - 0.5)
    return horiz, vert


def rasterize_frame_plane(pose: FramePose, meta: GridMeta) -> VoxelSet:
    """Grid voxels whose centers lie within half a voxel of the frame plane
    and inside the frame extent."""
    horiz, vert = _plane_support(pose, meta)
    jk = np.argwhere(horiz)
    ii = np.nonzero(vert)[0]
    if jk.size == 0 or ii.size == 0:
        return VoxelSet(meta, np.zeros((0, 3), dtype=np.int64))
    pts = np.empty((ii.size * jk.shape[0], 3), dtype=np.int64)
    pts[:, 0] = np.repeat(ii, jk.shape[0])
    pts[:, 1:] = np.tile(jk, (ii.size, 1))
    return VoxelSet(meta, pts)


def plane_support_mask(pose: FramePose, meta: GridMeta) -> np.ndarray:
    """Boolean (H, W, D) array of the rasterized frame plane."""
    horiz, vert = _plane_support(pose, meta)
    return vert[:, None, None] & horiz[None, :, :]


def extract_plane_contour(mask: BinaryMask, pose: FramePose) -> VoxelSet:
    """Mask-boundary voxels lying on the frame plane; may be empty."""
    support = plane_support_mask(pose, mask.meta)
    return VoxelSet(mask.meta, np.argwhere(mask_boundary(mask) & support))
