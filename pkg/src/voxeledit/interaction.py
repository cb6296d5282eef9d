"""Simulated and user-supplied edits: scribble construction on frame planes,
training-time synthesis on the worst frame, test-time selection of the
furthest ground-truth contour, and Gaussian heatmap encoding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .geometry import FramePose, FrameStack, extract_plane_contour, plane_support_mask, project_pixel_to_voxel
from .grids import (
    BinaryMask,
    GridMeta,
    ScalarField,
    VoxelSet,
    make_gaussian_map,
    manhattan_distance_transform,
    mask_boundary,
)

DEFAULT_SIGMA_ENC = 20.0
DEFAULT_SIGMA_EDIT = 20.0
MIN_SCRIBBLE_LEN = 5
MAX_SCRIBBLE_LEN = 41


class InteractionError(ValueError):
    """Edit synthesis or validation failure."""


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scribble:
    """Ordered polyline of voxels on one frame plane."""

    meta: GridMeta
    frame_id: int
    points: np.ndarray = field(repr=False)  # (N, 3) int, ordered along the stroke

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.int64).reshape(-1, 3)
        if pts.shape[0] < 2:
            raise InteractionError("scribble needs at least 2 points")
        dims = np.asarray(self.meta.dims)
        if (pts < 0).any() or (pts >= dims).any():
            raise InteractionError("scribble leaves the grid")
        seen = {tuple(p) for p in pts}
        if len(seen) != pts.shape[0]:
            raise InteractionError("scribble repeats a point")
        steps = np.abs(np.diff(pts, axis=0)).max(axis=1)
        if (steps != 1).any():
            raise InteractionError("scribble path is not connected")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    def voxel_set(self) -> VoxelSet:
        return VoxelSet(self.meta, self.points)


@dataclass(frozen=True)
class EditRecord:
    """One encoded interaction: scribble plus its u / A heatmaps."""

    t: int
    scribble: Scribble
    u: ScalarField
    A: ScalarField
    sigma_enc: float
    sigma_edit: float


def encode_edit(
    scribble: Scribble,
    sigma_enc: float = DEFAULT_SIGMA_ENC,
    sigma_edit: float = DEFAULT_SIGMA_EDIT,
    t: int = 0,
) -> EditRecord:
    """Gaussian-encode a scribble: u peaks at 1 along the stroke, A defines
    the edit vicinity."""
    pts = scribble.voxel_set()
    u = make_gaussian_map(pts, sigma_enc)
    a = u if sigma_edit == sigma_enc else make_gaussian_map(pts, sigma_edit)
    return EditRecord(t=t, scribble=scribble, u=u, A=a, sigma_enc=sigma_enc, sigma_edit=sigma_edit)


# ---------------------------------------------------------------------------
# Path machinery on sparse voxel sets
# ---------------------------------------------------------------------------

def _neighbor_lists(points: np.ndarray) -> list[list[int]]:
    """26-adjacency among the given voxels (8-adjacency within a plane)."""
    index = {tuple(p): i for i, p in enumerate(points)}
    nbrs: list[list[int]] = [[] for _ in range(len(points))]
    offsets = [
        (di, dj, dk)
        for di in (-1, 0, 1)
        for dj in (-1, 0, 1)
        for dk in (-1, 0, 1)
        if (di, dj, dk) != (0, 0, 0)
    ]
    for i, p in enumerate(points):
        for off in offsets:
            j = index.get((p[0] + off[0], p[1] + off[1], p[2] + off[2]))
            if j is not None:
                nbrs[i].append(j)
    return nbrs


def _bfs_depths(nbrs: list[list[int]], start: int) -> np.ndarray:
    depth = np.full(len(nbrs), -1, dtype=np.int64)
    depth[start] = 0
    frontier = [start]
    while frontier:
        nxt = []
        for i in frontier:
            for j in nbrs[i]:
                if depth[j] < 0:
                    depth[j] = depth[i] + 1
                    nxt.append(j)
        frontier = nxt
    return depth


def _grow_arm(points, nbrs, depth, start, limit, blocked) -> list[int]:
    """Walk outward from start along strictly increasing BFS depth."""
    arm: list[int] = []
    visited = set(blocked)
    visited.add(start)
    cur = start
    while len(arm) < limit:
        cands = [j for j in nbrs[cur] if j not in visited and depth[j] == depth[cur] + 1]
        if not cands:
            break
        cur = min(cands, key=lambda j: tuple(points[j]))
        arm.append(cur)
        visited.add(cur)
    return arm


def centered_path(points: np.ndarray, center_idx: int, max_len: int, seed: int = 0) -> np.ndarray:
    """Ordered simple path through the voxel set, centered on one voxel,
    at most max_len long; spans the whole set when it is shorter."""
    nbrs = _neighbor_lists(points)
    depth = _bfs_depths(nbrs, center_idx)
    budget = max_len - 1
    half_a = budget // 2 + (budget % 2) * int(np.random.default_rng(seed).integers(0, 2))
    arm_a = _grow_arm(points, nbrs, depth, center_idx, half_a, set())
    arm_b = _grow_arm(points, nbrs, depth, center_idx, budget - len(arm_a), set(arm_a))
    if len(arm_a) + len(arm_b) < budget:
        arm_a = _grow_arm(points, nbrs, depth, center_idx, budget - len(arm_b), set(arm_b))
    order = list(reversed(arm_a)) + [center_idx] + arm_b
    return points[order]


def _closest_index(points: np.ndarray, target: np.ndarray) -> int:
    d = np.abs(points - target).sum(axis=1)
    best = np.flatnonzero(d == d.min())
    # lexicographic smallest among ties; points arrive sorted from VoxelSet
    return int(best[0])


# ---------------------------------------------------------------------------
# Training edit synthesis
# ---------------------------------------------------------------------------

def synthesize_training_edit(
    y_init: BinaryMask,
    y: BinaryMask,
    frames: FrameStack,
    seed: int = 0,
    min_len: int = MIN_SCRIBBLE_LEN,
    max_len: int = MAX_SCRIBBLE_LEN,
) -> Scribble:
    """Scribble along the ground-truth boundary inside the largest in-plane
    disagreement region of the frame with the most disagreement voxels."""
    meta = y.meta
    diff = y.as_bool() ^ y_init.as_bool()
    supports = [plane_support_mask(pose, meta) for pose in frames.poses]
    counts = [int((diff & s).sum()) for s in supports]
    if max(counts) == 0:
        raise InteractionError("nothing to edit")
    f_star = int(np.argmax(counts))  # ties: lower frame_id
    plane = supports[f_star]

    labels, n = ndimage.label(diff & plane, structure=np.ones((3, 3, 3), dtype=bool))
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    component = labels == sizes.argmax()

    boundary = mask_boundary(y) & plane
    source = boundary & component
    n_source = int(source.sum())
    target_len = min(max(n_source, min_len), max_len)
    if n_source >= min_len:
        path_pts = np.argwhere(source)
        center_idx = _closest_index(path_pts, path_pts.mean(axis=0))
    elif n_source > 0:
        # in-component boundary stretch shorter than min_len: extend the walk
        # along the rest of the boundary on this plane
        src_pts = np.argwhere(source)
        center = src_pts[_closest_index(src_pts, src_pts.mean(axis=0))]
        path_pts = np.argwhere(boundary)
        center_idx = int(np.flatnonzero((path_pts == center).all(axis=1))[0])
    else:
        # disagreement blob off the truth boundary: scribble on the nearest
        # stretch of the boundary instead
        if not boundary.any():
            raise InteractionError("nothing to edit")
        dt = manhattan_distance_transform(VoxelSet(meta, np.argwhere(component))).data
        path_pts = np.argwhere(boundary)
        center_idx = _closest_index_by_value(dt, path_pts)
        target_len = min(max(int(component.sum()), min_len), max_len)
    path = centered_path(path_pts, center_idx, target_len, seed=seed)
    if path.shape[0] < 2:
        raise InteractionError("disagreement region too small to scribble")
    return Scribble(meta, frames.poses[f_star].frame_id, path)


def _closest_index_by_value(dt: np.ndarray, pts: np.ndarray) -> int:
    vals = dt[tuple(pts.T)]
    best = np.flatnonzero(vals == vals.min())
    return int(best[0])


# ---------------------------------------------------------------------------
# Test edit selection
# ---------------------------------------------------------------------------

def predicted_contour_set(y_hat: BinaryMask, frames: FrameStack) -> VoxelSet:
    """Pooled per-frame boundary contours of a predicted mask."""
    parts = [extract_plane_contour(y_hat, pose).points for pose in frames.poses]
    pts = np.concatenate([p for p in parts if p.size] or [np.zeros((0, 3), dtype=np.int64)])
    return VoxelSet(y_hat.meta, pts)


def select_test_edit(
    y_hat: BinaryMask,
    cas_contours,
    frames: FrameStack,
    excluded=(),
    max_len: int = MAX_SCRIBBLE_LEN,
) -> Scribble:
    """Scribble along the CAS contour farthest from the prediction.

    Per-contour score is the maximum Manhattan distance of its points from
    the pooled predicted contour set; excluded frame_ids are skipped so an
    edit is never repeated.
    """
    pred = predicted_contour_set(y_hat, frames)
    if len(pred) == 0:
        raise InteractionError("no predicted surface")
    dt = manhattan_distance_transform(pred).data
    excluded = set(excluded)

    best = None  # (score, frame_pos, point_idx)
    for pos, pose in enumerate(frames.poses):
        contour = cas_contours[pos]
        if pose.frame_id in excluded or len(contour) == 0:
            continue
        vals = dt[tuple(contour.points.T)]
        idx = int(vals.argmax())  # first max = lexicographic smallest point
        score = float(vals[idx])
        if best is None or score > best[0]:
            best = (score, pos, idx)
    if best is None:
        raise InteractionError("no candidate edits")
    _, pos, idx = best
    contour = cas_contours[pos]
    path = centered_path(contour.points, idx, max_len)
    return Scribble(y_hat.meta, frames.poses[pos].frame_id, path)


# ---------------------------------------------------------------------------
# User scribbles from pixel paths
# ---------------------------------------------------------------------------

def scribble_from_pixels(
    meta: GridMeta, pose: FramePose, pixel_path, frame_id: int | None = None
) -> Scribble:
    """Convert an ordered frame-pixel path to a connected voxel scribble.

    Consecutive pixels may be further than one step apart (freehand input is
    decimated); segments are densified by linear interpolation before
    rounding to voxels.
    """
    path = np.asarray(pixel_path, dtype=np.float64).reshape(-1, 2)
    if path.shape[0] < 2:
        raise InteractionError("scribble needs at least 2 points")
    vox: list[tuple[int, int, int]] = []
    seen = set()
    prev = None
    for px in path:
        if prev is None:
            samples = [px]
        else:
            n = 2 * int(np.ceil(np.abs(px - prev).max() * max(pose.pixel_spacing, 1.0))) + 2
            ts = np.linspace(0.0, 1.0, n)[1:]
            samples = [prev + t * (px - prev) for t in ts]
        for s in samples:
            v = project_pixel_to_voxel(pose, s)
            vi = tuple(int(round(c)) for c in v)
            if any(c < 0 or c >= d for c, d in zip(vi, meta.dims)):
                raise InteractionError(f"scribble leaves the grid at pixel {s.tolist()}")
            if vi not in seen:
                # drop a diagonal-skip by bridging when rounding jumps 2 axes
                if vox and max(abs(a - b) for a, b in zip(vi, vox[-1])) > 1:
                    bridge = tuple(
                        b + int(np.sign(a - b)) for a, b in zip(vi, vox[-1])
                    )
                    if bridge not in seen:
                        vox.append(bridge)
                        seen.add(bridge)
                vox.append(vi)
                seen.add(vi)
        prev = px
    if len(vox) < 2:
        raise InteractionError("scribble needs at least 2 distinct voxels")
    return Scribble(meta, pose.frame_id if frame_id is None else frame_id, np.asarray(vox))
