"""Engines: geometric blend, CNN editor, training strategies, checkpoints."""

import numpy as np
import pytest

from voxeledit.engines import (
    CnnEditor,
    EngineError,
    EngineInput,
    GeometricEditor,
    NumericalError,
    TrainConfig,
    apply_engine,
    geometric_blend_edit,
    load_checkpoint,
    save_checkpoint,
    train,
)
from voxeledit.cnn import init_model
from voxeledit.grids import BinaryMask, GridMeta, ScalarField, threshold_map
from voxeledit.interaction import EditRecord, Scribble, encode_edit
from voxeledit.phantom import (
    CaseBundle,
    ChecksumError,
    MissingMemberError,
    PhantomParams,
    make_case,
)

META = GridMeta((32, 32, 32), 1.0)


def sphere_mask(meta, center, radius):
    grid = np.stack(np.meshgrid(*[np.arange(d) for d in meta.dims], indexing="ij"), -1)
    return BinaryMask(meta, ((grid - np.asarray(center)) ** 2).sum(-1) <= radius**2)


def small_corpus(n, error_level=2.0, dims=(32, 32, 32), seed0=100):
    meta = GridMeta(dims, 1.1024)
    scale = min(dims) / 32.0
    radii = (8 * scale, 7 * scale, 6.5 * scale)
    return [
        make_case(
            meta,
            PhantomParams(seed=seed0 + i, base_radii=radii, n_lobes=1,
                          deform_amplitude=0.05, noise_level=0.1),
            error_level=error_level,
            init_seed=seed0 + 1000 + i,
            n_frames=8,
        )
        for i in range(n)
    ]


def boundary_scribble(mask, offset=0):
    """Scribble along constant-k plane voxels at a given signed offset from
    the boundary (offset > 0: outside)."""
    from voxeledit.grids import signed_distance

    phi = signed_distance(mask).data
    k = mask.meta.dims[2] // 2
    cands = np.argwhere((phi == offset) & (np.indices(mask.meta.dims)[2] == k))
    row = cands[cands[:, 0] == cands[:, 0].min()]
    row = row[np.argsort(row[:, 1])]
    pts = [row[0]]
    for p in row[1:]:
        if max(abs(p - pts[-1])) == 1:
            pts.append(p)
        if len(pts) == 7:
            break
    return Scribble(mask.meta, 0, np.asarray(pts))


# ---------------------------------------------------------------------------
# Geometric editor
# ---------------------------------------------------------------------------

def _input_for(mask, scribble, sigma=6.0):
    edit = encode_edit(scribble, sigma, sigma)
    x = ScalarField(mask.meta, np.zeros(mask.meta.dims, dtype=np.float32))
    return EngineInput(x, mask, edit.u), edit


def test_geometric_on_boundary_is_fixed_point():
    mask = sphere_mask(META, (15.5, 15.5, 16), 8.0)
    inp, edit = _input_for(mask, boundary_scribble(mask, offset=0))
    probs = geometric_blend_edit(inp, edit.A)
    assert (threshold_map(probs, 0.5).data == mask.data).all()


def test_geometric_zero_vicinity_preserves_init():
    mask = sphere_mask(META, (15.5, 15.5, 16), 8.0)
    inp, edit = _input_for(mask, boundary_scribble(mask, offset=2))
    zero_a = ScalarField(META, np.zeros(META.dims))
    probs = geometric_blend_edit(inp, zero_a)
    assert (threshold_map(probs, 0.5).data == mask.data).all()


def test_geometric_pulls_to_outside_scribble():
    mask = sphere_mask(META, (15.5, 15.5, 16), 8.0)
    scribble = boundary_scribble(mask, offset=3)
    inp, edit = _input_for(mask, scribble)
    probs = geometric_blend_edit(inp, edit.A)
    out = threshold_map(probs, 0.5)
    for p in scribble.points:
        assert out.data[tuple(p)] == 1  # scribble voxels captured
    far = edit.A.data < 0.01
    assert (out.data[far] == mask.data[far]).all()  # untouched far away


def test_geometric_rejects_degenerate_init():
    empty = BinaryMask(META, np.zeros(META.dims, dtype=np.uint8))
    scribble = Scribble(META, 0, [[4, 4, 16], [5, 4, 16]])
    edit = encode_edit(scribble, 6.0, 6.0)
    x = ScalarField(META, np.zeros(META.dims))
    with pytest.raises(Exception, match="degenerate"):
        geometric_blend_edit(EngineInput(x, empty, edit.u), edit.A)


# ---------------------------------------------------------------------------
# CNN editor and apply_engine
# ---------------------------------------------------------------------------

def test_cnn_editor_outputs_probabilities():
    case = small_corpus(1)[0]
    model = init_model(seed=5)
    scribble = boundary_scribble(case.y_init)
    edit = encode_edit(scribble, 7.5, 7.5)
    mask, probs = apply_engine(CnnEditor(model, "cnn"), case, edit)
    assert probs.data.shape == case.meta.dims
    assert probs.data.min() > 0 and probs.data.max() < 1
    assert set(np.unique(mask.data)) <= {0, 1}


def test_apply_engine_geometric_zero_vicinity_returns_init():
    case = small_corpus(1)[0]
    scribble = boundary_scribble(case.y_init)
    edit = encode_edit(scribble, 7.5, 7.5)
    zero = EditRecord(
        t=0, scribble=edit.scribble, u=edit.u,
        A=ScalarField(case.meta, np.zeros(case.meta.dims)),
        sigma_enc=7.5, sigma_edit=7.5,
    )
    mask, _ = apply_engine(GeometricEditor(), case, zero)
    assert (mask.data == case.y_init.data).all()


def test_chaining_uses_previous_output_bit_exact():
    case = small_corpus(1)[0]
    scribble = boundary_scribble(case.y_init)
    edit = encode_edit(scribble, 7.5, 7.5)
    mask1, _ = apply_engine(GeometricEditor(), case, edit)
    case2 = case.with_initial(mask1)
    assert case2.y_init is mask1
    mask2, _ = apply_engine(GeometricEditor(), case2, edit)
    assert mask2.data.shape == case.meta.dims


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def test_train_config_validation():
    with pytest.raises(EngineError):
        TrainConfig(loss_kind="mse")
    with pytest.raises(EngineError):
        TrainConfig(epochs=0)


def test_train_deterministic_loss_log():
    corpus = small_corpus(4, dims=(24, 24, 24))
    cfg = TrainConfig(loss_kind="ce", epochs=2, seed=7, sigma_enc=5.0, sigma_edit=5.0)
    _, h1 = train(corpus, cfg)
    _, h2 = train(corpus, cfg)
    assert h1.epoch_loss == h2.epoch_loss


def test_train_deterministic_weights():
    corpus = small_corpus(4, dims=(24, 24, 24))
    cfg = TrainConfig(loss_kind="editing", epochs=2, seed=3, sigma_enc=5.0, sigma_edit=5.0)
    m1, _ = train(corpus, cfg)
    m2, _ = train(corpus, cfg)
    assert all((a == b).all() for a, b in zip(m1.weights, m2.weights))
    assert all((a == b).all() for a, b in zip(m1.biases, m2.biases))


def test_train_editing_no_correction_regime():
    # y_init identical to y: the editing loss reduces to CE against y, the
    # model must reproduce the initial segmentation on held-out cases
    corpus = []
    for case in small_corpus(6, error_level=0.0):
        corpus.append(case)
    cfg = TrainConfig(loss_kind="editing", epochs=30, seed=11, sigma_enc=5.0, sigma_edit=5.0)
    model, hist = train(corpus[:4], cfg)
    assert max(hist.epoch_loss) <= hist.epoch_loss[0] + 1e-9
    editor = CnnEditor(model, "editing")
    for case in corpus[4:]:
        scribble = boundary_scribble(case.y_init)
        edit = encode_edit(scribble, 5.0, 5.0)
        mask, _ = apply_engine(editor, case, edit)
        inter = (mask.as_bool() & case.y_init.as_bool()).sum()
        dice = 2 * inter / (mask.count() + case.y_init.count())
        assert dice >= 0.95, dice


def test_intercnn_epoch_slower_than_editing():
    corpus = small_corpus(4, dims=(24, 24, 24))
    base = dict(epochs=1, seed=0, sigma_enc=5.0, sigma_edit=5.0)
    _, h_edit = train(corpus, TrainConfig(loss_kind="editing", **base))
    _, h_inter = train(corpus, TrainConfig(loss_kind="intercnn", **base))
    assert h_inter.epoch_seconds[0] > h_edit.epoch_seconds[0]


def test_train_rejects_empty_corpus():
    with pytest.raises(EngineError):
        train([], TrainConfig())


def test_train_aborts_on_nonfinite_loss():
    corpus = small_corpus(2, dims=(24, 24, 24))
    bad_x = corpus[0].x.data.copy()
    bad_x[0, 0, 0] = np.nan
    bad = CaseBundle(
        corpus[0].meta, ScalarField(corpus[0].meta, bad_x), corpus[0].y,
        corpus[0].y_init, corpus[0].frames, corpus[0].cas_contours,
    )
    cfg = TrainConfig(loss_kind="ce", epochs=1, seed=0, sigma_enc=5.0, sigma_edit=5.0)
    with pytest.raises(NumericalError, match="epoch 0"):
        train([bad, corpus[1]], cfg)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    corpus = small_corpus(2, dims=(24, 24, 24))
    cfg = TrainConfig(loss_kind="ce", epochs=1, seed=1, sigma_enc=5.0, sigma_edit=5.0)
    model, _ = train(corpus, cfg)
    p = str(tmp_path / "ckpt")
    save_checkpoint(model, p, config={"loss_kind": "ce"})
    back, extra = load_checkpoint(p)
    assert extra == {"loss_kind": "ce"}
    assert all((a == b).all() for a, b in zip(model.weights, back.weights))
    assert all((a == b).all() for a, b in zip(model.biases, back.biases))


def test_checkpoint_corruption_detected(tmp_path):
    model = init_model(seed=2)
    p = str(tmp_path / "ckpt")
    save_checkpoint(model, p)
    import os

    blob = bytearray(open(os.path.join(p, "weights.f32"), "rb").read())
    blob[10] ^= 0xFF
    open(os.path.join(p, "weights.f32"), "wb").write(bytes(blob))
    with pytest.raises(ChecksumError):
        load_checkpoint(p)


def test_checkpoint_missing_weights(tmp_path):
    model = init_model(seed=2)
    p = str(tmp_path / "ckpt")
    save_checkpoint(model, p)
    import os

    os.remove(os.path.join(p, "weights.f32"))
    with pytest.raises(MissingMemberError):
        load_checkpoint(p)
