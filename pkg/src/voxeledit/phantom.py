"""Synthetic cases: smooth atrium-like blobs, sparse plane-supported
intensity volumes, controllably imperfect initial segmentations, and the
on-disk CaseBundle format (manifest + raw little-endian volumes + CRC32).
"""

from __future__ import annotations

import json
import math
import os
import zlib
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .geometry import FramePose, FrameStack, extract_plane_contour, plane_support_mask, synthesize_sweep
from .grids import BinaryMask, GridError, GridMeta, ScalarField, VoxelSet

FORMAT_VERSION = "1"

# two-level intensity contrast: dark blood pool inside, bright tissue outside
LUMEN_LEVEL = 0.25
TISSUE_LEVEL = 0.75

_LOBE_HEIGHT = 0.2     # fractional radius bump per appendage lobe
_LOBE_WIDTH = 0.45     # angular width (rad) of a lobe bump
_SIX = ndimage.generate_binary_structure(3, 1)


class PhantomError(ValueError):
    """Invalid phantom parameters or degenerate output."""


class CaseIOError(Exception):
    """Case bundle persistence failure; .code distinguishes the cause."""

    code = "io"


class VersionMismatchError(CaseIOError):
    code = "version_mismatch"


class MissingMemberError(CaseIOError):
    code = "missing_member"


class TruncatedFileError(CaseIOError):
    code = "truncated"


class ChecksumError(CaseIOError):
    code = "checksum"


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhantomParams:
    seed: int
    base_radii: tuple[float, float, float] = (13.0, 11.0, 9.0)
    n_lobes: int = 1
    deform_amplitude: float = 0.08
    noise_level: float = 0.12

    def __post_init__(self):
        object.__setattr__(self, "base_radii", tuple(float(r) for r in self.base_radii))
        if any(r <= 0 for r in self.base_radii):
            raise PhantomError("radii must be positive")
        if self.n_lobes < 0 or self.deform_amplitude < 0 or self.noise_level < 0:
            raise PhantomError("n_lobes, deform_amplitude, noise_level must be >= 0")


@dataclass(frozen=True)
class CaseBundle:
    """One synthetic case: volume, truth, initial segmentation, geometry."""

    meta: GridMeta
    x: ScalarField
    y: BinaryMask
    y_init: BinaryMask
    frames: FrameStack
    cas_contours: tuple[VoxelSet, ...]

    def __post_init__(self):
        object.__setattr__(self, "cas_contours", tuple(self.cas_contours))
        for part in (self.x, self.y, self.y_init, self.frames, *self.cas_contours):
            if part.meta.dims != self.meta.dims:
                raise GridError("case parts must share grid dims")
        if len(self.cas_contours) != len(self.frames):
            raise PhantomError("one CAS contour entry per frame required")

    def with_initial(self, y_init: BinaryMask) -> "CaseBundle":
        """Copy with a replaced initial segmentation (sequential editing)."""
        return replace(self, y_init=y_init)


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

def _radius_budget(params: PhantomParams) -> float:
    return 1.0 + params.deform_amplitude + (_LOBE_HEIGHT if params.n_lobes else 0.0)


def _check_radii_fit(meta: GridMeta, params: PhantomParams) -> None:
    center = meta.center()
    budget = _radius_budget(params)
    for ax in range(3):
        reach = params.base_radii[ax] * budget
        room = min(center[ax], meta.dims[ax] - 1 - center[ax])
        if reach + 4.0 > room:
            raise PhantomError(
                f"radii too large: axis {ax} needs {reach + 4.0:.1f} voxels, has {room:.1f}"
            )


def _directional_bumps(rng: np.random.Generator, params: PhantomParams, dirs: np.ndarray) -> np.ndarray:
    """Smooth fractional radius perturbation as a function of direction."""
    delta = np.zeros(dirs.shape[0])
    if params.deform_amplitude > 0:
        centers = rng.normal(size=(6, 3))
        centers /= np.linalg.norm(centers, axis=1, keepdims=True)
        amps = rng.uniform(-1.0, 1.0, 6)
        raw = np.zeros(dirs.shape[0])
        for c, a in zip(centers, amps):
            ang = np.arccos(np.clip(dirs @ c, -1.0, 1.0))
            raw += a * np.exp(-(ang**2) / (2 * 0.7**2))
        peak = np.abs(raw).max()
        if peak > 0:
            delta += params.deform_amplitude * raw / peak
    for _ in range(params.n_lobes):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        ang = np.arccos(np.clip(dirs @ axis, -1.0, 1.0))
        delta += _LOBE_HEIGHT * np.exp(-(ang**2) / (2 * _LOBE_WIDTH**2))
    return delta


def _largest_component(m: np.ndarray) -> np.ndarray:
    labels, n = ndimage.label(m, structure=_SIX)
    if n <= 1:
        return m
    counts = np.bincount(labels.ravel())
    counts[0] = 0
    return labels == counts.argmax()


def generate_phantom(
    meta: GridMeta,
    params: PhantomParams,
    n_frames: int = 12,
    span_rad: float = math.pi,
) -> tuple[BinaryMask, ScalarField, FrameStack]:
    """Star-shaped deformed ellipsoid y plus a sparse two-level speckled
    intensity volume x supported on the sweep's frame planes."""
    _check_radii_fit(meta, params)
    rng = np.random.default_rng(params.seed)
    center = meta.center()
    radii = np.asarray(params.base_radii)

    grid = np.stack(np.meshgrid(*[np.arange(d) for d in meta.dims], indexing="ij"), -1)
    u = (grid - center) / radii
    rho2 = (u**2).sum(-1)
    if params.deform_amplitude == 0 and params.n_lobes == 0:
        inside = rho2 <= 1.0
    else:
        rho = np.sqrt(rho2)
        safe = np.maximum(rho, 1e-12)
        dirs = (u / safe[..., None]).reshape(-1, 3)
        delta = _directional_bumps(rng, params, dirs).reshape(meta.dims)
        inside = rho <= 1.0 + delta
    inside = ndimage.binary_fill_holes(_largest_component(inside))
    if not inside.any():
        raise PhantomError("phantom degenerated to an empty mask")
    y = BinaryMask(meta, inside)

    frames = synthesize_sweep(meta, n_frames, span_rad)
    base = np.where(inside, LUMEN_LEVEL, TISSUE_LEVEL)
    xv = np.zeros(meta.dims, dtype=np.float64)
    # speckle strength varies per frame (view-dependent attenuation): some
    # frames image the boundary crisply, others are heavily degraded
    frame_gain = rng.uniform(0.3, 1.7, len(frames)) if params.noise_level > 0 else np.zeros(len(frames))
    speckle = rng.standard_normal(meta.dims) if params.noise_level > 0 else None
    for gain, pose in zip(frame_gain, frames.poses):
        support = plane_support_mask(pose, meta)
        level = base
        if params.noise_level > 0:
            level = base * (1.0 + params.noise_level * gain * speckle)
        xv[support] = level[support]
    xv = np.clip(xv, 0.0, 1.0).astype(np.float32)
    return y, ScalarField(meta, xv), frames


def generate_initial_seg(y: BinaryMask, error_level: float, seed: int) -> BinaryMask:
    """Warp the truth by a smooth random displacement field whose maximum
    magnitude is error_level voxels; the result stays a single component.

    The field is translation-dominant with smooth variation, so the whole
    surface is displaced by the same order as the requested error level.
    """
    if error_level < 0:
        raise PhantomError("error_level must be >= 0")
    if error_level == 0:
        return y
    meta = y.meta
    rng = np.random.default_rng(seed)
    # translation-dominant smooth field: a random drift direction plus coarse
    # variation, so the whole surface moves by O(error_level)
    bias = rng.normal(size=3)
    bias /= np.linalg.norm(bias)
    coarse = bias[:, None, None, None] + 0.3 * rng.normal(size=(3, 3, 3, 3))
    coords = np.stack(
        np.meshgrid(*[np.linspace(0.0, 2.0, d) for d in meta.dims], indexing="ij")
    )
    disp = np.stack(
        [ndimage.map_coordinates(coarse[ax], coords, order=3, mode="nearest") for ax in range(3)]
    )
    mag = np.sqrt((disp**2).sum(0)).max()
    if mag > 0:
        disp *= error_level / mag
    sample_at = np.indices(meta.dims, dtype=np.float64) + disp
    warped = ndimage.map_coordinates(y.data, sample_at, order=0, mode="nearest")
    warped = ndimage.binary_fill_holes(_largest_component(warped.astype(bool)))
    if not warped.any() or warped.all():
        raise PhantomError("initial segmentation degenerated; lower error_level")
    return BinaryMask(meta, warped)


def extract_cas_contours(y: BinaryMask, frames: FrameStack) -> list[VoxelSet]:
    """Ground-truth boundary restricted to each frame plane; empty entries
    are kept at their frame index."""
    return [extract_plane_contour(y, pose) for pose in frames.poses]


def make_case(
    meta: GridMeta,
    params: PhantomParams,
    error_level: float,
    init_seed: int,
    n_frames: int = 12,
    span_rad: float = math.pi,
) -> CaseBundle:
    y, x, frames = generate_phantom(meta, params, n_frames, span_rad)
    y_init = generate_initial_seg(y, error_level, init_seed)
    cas = extract_cas_contours(y, frames)
    return CaseBundle(meta, x, y, y_init, frames, tuple(cas))


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def _atomic_write(path: str, payload: bytes) -> None:
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def _mask_bytes(mask: BinaryMask) -> bytes:
    return np.ascontiguousarray(mask.data, dtype=np.uint8).tobytes()


def _field_bytes(fieldv: ScalarField) -> bytes:
    return np.ascontiguousarray(fieldv.data, dtype="<f4").tobytes()


def save_case(bundle: CaseBundle, path: str) -> None:
    """Write the bundle directory; every file lands via temp-file + rename."""
    os.makedirs(path, exist_ok=True)
    members: dict[str, bytes] = {
        "x.f32": _field_bytes(bundle.x),
        "y.u8": _mask_bytes(bundle.y),
        "y_init.u8": _mask_bytes(bundle.y_init),
    }
    for f, contour in enumerate(bundle.cas_contours):
        members[f"cas_{f}.json"] = json.dumps(
            [[int(v) for v in p] for p in contour.points], separators=(",", ":")
        ).encode()
    manifest = {
        "format_version": FORMAT_VERSION,
        "dims": list(bundle.meta.dims),
        "spacing_mm": bundle.meta.spacing_mm,
        "frames": [p.to_json() for p in bundle.frames.poses],
        "members": {
            name: {"crc32": zlib.crc32(data), "bytes": len(data)}
            for name, data in sorted(members.items())
        },
    }
    for name, data in members.items():
        _atomic_write(os.path.join(path, name), data)
    _atomic_write(
        os.path.join(path, "manifest.json"),
        json.dumps(manifest, sort_keys=True, indent=1).encode(),
    )


def _read_member(path: str, name: str, entry: dict) -> bytes:
    full = os.path.join(path, name)
    if not os.path.exists(full):
        raise MissingMemberError(f"missing member: {name}")
    with open(full, "rb") as fh:
        data = fh.read()
    if len(data) != entry["bytes"]:
        raise TruncatedFileError(
            f"{name}: expected {entry['bytes']} bytes, found {len(data)}"
        )
    if zlib.crc32(data) != entry["crc32"]:
        raise ChecksumError(f"{name}: CRC32 mismatch")
    return data


def load_case(path: str) -> CaseBundle:
    mpath = os.path.join(path, "manifest.json")
    if not os.path.exists(mpath):
        raise MissingMemberError("missing member: manifest.json")
    with open(mpath, "rb") as fh:
        manifest = json.loads(fh.read())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise VersionMismatchError(
            f"unsupported format version {manifest.get('format_version')!r}"
        )
    meta = GridMeta(tuple(manifest["dims"]), manifest["spacing_mm"])
    poses = tuple(FramePose.from_json(p) for p in manifest["frames"])
    frames = FrameStack(meta, poses)
    members = manifest["members"]

    def member(name: str) -> bytes:
        if name not in members:
            raise MissingMemberError(f"missing member: {name}")
        return _read_member(path, name, members[name])

    n = meta.n_voxels
    x = np.frombuffer(member("x.f32"), dtype="<f4", count=n).reshape(meta.dims)
    y = np.frombuffer(member("y.u8"), dtype=np.uint8, count=n).reshape(meta.dims)
    y_init = np.frombuffer(member("y_init.u8"), dtype=np.uint8, count=n).reshape(meta.dims)
    cas = []
    for f in range(len(poses)):
        pts = json.loads(member(f"cas_{f}.json"))
        cas.append(VoxelSet(meta, np.asarray(pts, dtype=np.int64).reshape(-1, 3)))
    return CaseBundle(
        meta,
        ScalarField(meta, x.copy()),
        BinaryMask(meta, y.copy()),
        BinaryMask(meta, y_init.copy()),
        frames,
        tuple(cas),
    )
