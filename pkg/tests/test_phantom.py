"""Phantom generation and case bundle persistence."""

import json
import math
import os

import numpy as np
import pytest
from scipy import ndimage

from voxeledit.geometry import plane_support_mask
from voxeledit.grids import (
    BinaryMask,
    GridMeta,
    boundary_voxels,
    manhattan_distance_transform,
)
from voxeledit.phantom import (
    CaseBundle,
    ChecksumError,
    MissingMemberError,
    PhantomError,
    PhantomParams,
    TruncatedFileError,
    VersionMismatchError,
    extract_cas_contours,
    generate_initial_seg,
    generate_phantom,
    load_case,
    make_case,
    save_case,
)

META = GridMeta((48, 48, 48), 1.1024)


def dice(a: BinaryMask, b: BinaryMask) -> float:
    aa, bb = a.as_bool(), b.as_bool()
    return 2.0 * (aa & bb).sum() / (aa.sum() + bb.sum())


def mean_symmetric_surface_distance(a: BinaryMask, b: BinaryMask) -> float:
    """Average of both directed mean boundary-to-boundary Manhattan distances."""
    ba, bb = boundary_voxels(a), boundary_voxels(b)
    dt_a = manhattan_distance_transform(ba).data
    dt_b = manhattan_distance_transform(bb).data
    d_ab = dt_b[tuple(ba.points.T)].mean()
    d_ba = dt_a[tuple(bb.points.T)].mean()
    return 0.5 * (d_ab + d_ba)


# ---------------------------------------------------------------------------
# Phantom generation
# ---------------------------------------------------------------------------

def test_undeformed_phantom_is_exact_ellipsoid():
    params = PhantomParams(seed=1, base_radii=(12, 10, 8), n_lobes=0,
                           deform_amplitude=0.0, noise_level=0.0)
    y, _, _ = generate_phantom(META, params)
    c = META.center()
    grid = np.stack(np.meshgrid(*[np.arange(48)] * 3, indexing="ij"), -1)
    want = (((c - grid) / np.array([12, 10, 8])) ** 2).sum(-1) <= 1.0
    assert (y.as_bool() == want).all()


def test_phantom_deterministic():
    params = PhantomParams(seed=42)
    y1, x1, _ = generate_phantom(META, params)
    y2, x2, _ = generate_phantom(META, params)
    assert (y1.data == y2.data).all()
    assert (x1.data == x2.data).all()


def test_noiseless_intensity_is_two_level():
    params = PhantomParams(seed=3, noise_level=0.0)
    _, x, frames = generate_phantom(META, params)
    support = np.zeros(META.dims, dtype=bool)
    for pose in frames.poses:
        support |= plane_support_mask(pose, META)
    on_plane = np.unique(x.data[support])
    assert set(np.round(on_plane, 6)) == {0.25, 0.75}


def test_intensity_zero_off_planes():
    params = PhantomParams(seed=4)
    _, x, frames = generate_phantom(META, params)
    support = np.zeros(META.dims, dtype=bool)
    for pose in frames.poses:
        support |= plane_support_mask(pose, META)
    assert (x.data[~support] == 0.0).all()
    assert (x.data[support] > 0.0).any()


def test_phantom_single_six_connected_component():
    for seed in range(5):
        y, _, _ = generate_phantom(META, PhantomParams(seed=seed, n_lobes=2))
        _, n = ndimage.label(y.as_bool(), structure=ndimage.generate_binary_structure(3, 1))
        assert n == 1


def test_radii_too_large_rejected():
    with pytest.raises(PhantomError, match="radii too large"):
        generate_phantom(META, PhantomParams(seed=0, base_radii=(22, 22, 22)))


# ---------------------------------------------------------------------------
# Initial segmentation
# ---------------------------------------------------------------------------

def test_initial_seg_zero_error_is_identity():
    y, _, _ = generate_phantom(META, PhantomParams(seed=5))
    y_init = generate_initial_seg(y, 0.0, seed=9)
    assert (y_init.data == y.data).all()


def test_initial_seg_deterministic():
    y, _, _ = generate_phantom(META, PhantomParams(seed=6))
    a = generate_initial_seg(y, 3.0, seed=11)
    b = generate_initial_seg(y, 3.0, seed=11)
    assert (a.data == b.data).all()


def test_initial_seg_mean_boundary_displacement():
    # 48^3 sphere phantom; 50 seeds; mean symmetric surface distance in [1, 3]
    params = PhantomParams(seed=7, base_radii=(12, 12, 12), n_lobes=0,
                           deform_amplitude=0.0, noise_level=0.0)
    y, _, _ = generate_phantom(META, params)
    dists = [
        mean_symmetric_surface_distance(y, generate_initial_seg(y, 3.0, seed=s))
        for s in range(50)
    ]
    avg = float(np.mean(dists))
    assert 1.0 <= avg <= 3.0, avg


def test_initial_seg_dice_decreases_with_error():
    y, _, _ = generate_phantom(META, PhantomParams(seed=8))
    means = []
    for level in (0.0, 2.0, 4.0):
        means.append(np.mean([
            dice(y, generate_initial_seg(y, level, seed=s)) for s in range(10)
        ]))
    assert means[0] > means[1] > means[2]


def test_initial_seg_degenerate_rejected():
    meta = GridMeta((16, 16, 16))
    m = np.zeros(meta.dims, dtype=np.uint8)
    m[7:9, 7:9, 7:9] = 1
    with pytest.raises(PhantomError):
        generate_initial_seg(BinaryMask(meta, m), 40.0, seed=2)


# ---------------------------------------------------------------------------
# CAS contours
# ---------------------------------------------------------------------------

def test_cas_contours_ring_and_empty():
    params = PhantomParams(seed=9, base_radii=(10, 10, 10), n_lobes=0,
                           deform_amplitude=0.0, noise_level=0.0)
    y, _, frames = generate_phantom(META, params)
    cas = extract_cas_contours(y, frames)
    assert len(cas) == len(frames)
    assert all(len(c) > 8 for c in cas)  # every plane cuts the centered blob
    bdt = manhattan_distance_transform(boundary_voxels(y)).data
    for contour in cas:
        assert (bdt[tuple(contour.points.T)] == 0).all()


def test_cas_contour_empty_retained_at_index():
    meta = GridMeta((32, 32, 32))
    m = np.zeros(meta.dims, dtype=np.uint8)
    m[14:18, 14:18, 26:30] = 1  # off-center cube missed by some planes
    y = BinaryMask(meta, m)
    from voxeledit.geometry import synthesize_sweep

    frames = synthesize_sweep(meta, 8, math.pi)
    cas = extract_cas_contours(y, frames)
    assert len(cas) == 8
    assert any(len(c) == 0 for c in cas)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def _small_case() -> CaseBundle:
    meta = GridMeta((24, 24, 24), 1.1024)
    params = PhantomParams(seed=13, base_radii=(5.5, 5, 5), n_lobes=1)
    return make_case(meta, params, error_level=2.0, init_seed=14, n_frames=6)


def test_case_round_trip_bit_exact(tmp_path):
    bundle = _small_case()
    p = str(tmp_path / "case")
    save_case(bundle, p)
    back = load_case(p)
    assert (back.x.data == bundle.x.data).all()
    assert (back.y.data == bundle.y.data).all()
    assert (back.y_init.data == bundle.y_init.data).all()
    assert back.meta == bundle.meta
    assert len(back.frames) == len(bundle.frames)
    for a, b in zip(back.frames.poses, bundle.frames.poses):
        assert a.to_json() == b.to_json()
    for a, b in zip(back.cas_contours, bundle.cas_contours):
        assert (a.points == b.points).all()


def test_case_corrupt_byte_raises_checksum(tmp_path):
    bundle = _small_case()
    p = str(tmp_path / "case")
    save_case(bundle, p)
    target = os.path.join(p, "y.u8")
    blob = bytearray(open(target, "rb").read())
    blob[100] ^= 0xFF
    open(target, "wb").write(bytes(blob))
    with pytest.raises(ChecksumError):
        load_case(p)


def test_case_missing_member_named(tmp_path):
    bundle = _small_case()
    p = str(tmp_path / "case")
    save_case(bundle, p)
    os.remove(os.path.join(p, "cas_2.json"))
    with pytest.raises(MissingMemberError, match="cas_2.json"):
        load_case(p)


def test_case_version_mismatch(tmp_path):
    bundle = _small_case()
    p = str(tmp_path / "case")
    save_case(bundle, p)
    mpath = os.path.join(p, "manifest.json")
    manifest = json.loads(open(mpath).read())
    manifest["format_version"] = "99"
    open(mpath, "w").write(json.dumps(manifest))
    with pytest.raises(VersionMismatchError):
        load_case(p)


def test_case_truncated_file(tmp_path):
    bundle = _small_case()
    p = str(tmp_path / "case")
    save_case(bundle, p)
    target = os.path.join(p, "x.f32")
    blob = open(target, "rb").read()
    open(target, "wb").write(blob[:-8])
    with pytest.raises(TruncatedFileError):
        load_case(p)


def test_serialized_linear_index_layout(tmp_path):
    # voxel (i, j, k) lives at byte offset ((i*W + j)*D + k) * itemsize
    bundle = _small_case()
    p = str(tmp_path / "case")
    save_case(bundle, p)
    h, w, d = bundle.meta.dims
    raw = np.frombuffer(open(os.path.join(p, "y.u8"), "rb").read(), dtype=np.uint8)
    i, j, k = 5, 7, 11
    assert raw[(i * w + j) * d + k] == bundle.y.data[i, j, k]
