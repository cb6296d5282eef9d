"""Editing engines and their training.

Two engines honor the same contract apply(x, y_init, u) -> probabilities:
a non-learned geometric blend that pulls the initial surface toward the
scribble inside the vicinity map, and a small trainable CNN.  Training
covers four strategies: plain cross-entropy, Dice, the vicinity-weighted
editing loss, and an iterative scheme that accumulates simulated edits and
re-inputs them for a fixed number of steps per sample.
"""

from __future__ import annotations

import json
import os
import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from .cnn import DEFAULT_CHANNELS, TinyCnnModel, backward_batch, forward_batch, init_model
from .grids import BinaryMask, ScalarField, make_gaussian_map, signed_distance, threshold_map
from .interaction import (
    DEFAULT_SIGMA_EDIT,
    DEFAULT_SIGMA_ENC,
    EditRecord,
    InteractionError,
    Scribble,
    centered_path,
    encode_edit,
    synthesize_training_edit,
)
from .losses import ce_loss, dice_loss, editing_loss
from .phantom import (
    CaseBundle,
    ChecksumError,
    MissingMemberError,
    TruncatedFileError,
    VersionMismatchError,
)

LOSS_KINDS = ("ce", "dice", "editing", "intercnn")
GEOMETRIC_TEMPERATURE = 1.0  # voxels; one-voxel soft boundary
GEOMETRIC_CUTOFF = 0.01  # vicinity below this leaves the surface untouched


class EngineError(ValueError):
    """Invalid engine input."""


class NumericalError(RuntimeError):
    """Training diverged (non-finite loss or gradients)."""


# ---------------------------------------------------------------------------
# Engine contract
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EngineInput:
    """The three-channel editing input: volume, initial mask, interaction."""

    x: ScalarField
    y_init: BinaryMask
    u: ScalarField

    def __post_init__(self):
        if not (self.x.meta.dims == self.y_init.meta.dims == self.u.meta.dims):
            raise EngineError("engine input channels must share dims")

    def stack(self, dtype=np.float32) -> np.ndarray:
        return np.stack(
            [
                self.x.data.astype(dtype),
                self.y_init.data.astype(dtype),
                self.u.data.astype(dtype),
            ]
        )


def geometric_blend_edit(inp: EngineInput, a: ScalarField) -> ScalarField:
    """Level-set blend: offset the initial surface toward the scribble,
    faded by the vicinity map.

    With phi the signed distance of y_init, the scribble's mean level
    -mean(phi(s)) is added inside the vicinity, so the 0.5 level passes
    through the scribble where A = 1 and reproduces y_init where A = 0.
    Boundary voxels sit exactly on the 0.5 level, so the offset is cut off
    where A is negligible; otherwise far-away contours would flip on an
    arbitrarily small perturbation.
    """
    phi = signed_distance(inp.y_init).data
    peaks = np.argwhere(inp.u.data == 1.0)
    if peaks.shape[0] == 0:
        raise EngineError("interaction heatmap has no peak voxels")
    level = float(-phi[tuple(peaks.T)].mean())
    offset = np.where(a.data >= GEOMETRIC_CUTOFF, a.data * level, 0.0)
    shifted = (phi + offset) / GEOMETRIC_TEMPERATURE
    return ScalarField(inp.x.meta, 1.0 / (1.0 + np.exp(shifted)))


@dataclass(frozen=True)
class GeometricEditor:
    name: str = "geometric"

    def apply(self, inp: EngineInput, edit: EditRecord) -> ScalarField:
        return geometric_blend_edit(inp, edit.A)


@dataclass(frozen=True)
class CnnEditor:
    model: TinyCnnModel
    name: str = "cnn"

    def apply(self, inp: EngineInput, edit: EditRecord) -> ScalarField:
        probs, _ = forward_batch(self.model, inp.stack(self.model.dtype)[None])
        return ScalarField(inp.x.meta, probs[0])


def apply_engine(engine, case: CaseBundle, edit: EditRecord):
    """Run an engine on a case; returns (mask thresholded at 0.5, raw probs)."""
    inp = EngineInput(case.x, case.y_init, edit.u)
    probs = engine.apply(inp, edit)
    return threshold_map(probs, 0.5), probs


def segment_volume(model: TinyCnnModel, x: ScalarField) -> ScalarField:
    """Interaction-free inference: segment from the intensity channel alone
    (the mask and interaction channels are zero, as during initializer
    training)."""
    zeros = np.zeros(x.meta.dims, dtype=np.float32)
    stack = np.stack([x.data.astype(np.float32), zeros, zeros])
    probs, _ = forward_batch(model, stack[None])
    return ScalarField(x.meta, probs[0])


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    loss_kind: str = "editing"
    epochs: int = 16
    learning_rate: float = 0.005
    batch_size: int = 4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    intercnn_steps: int = 10
    seed: int = 0
    channels: tuple[int, ...] = DEFAULT_CHANNELS
    sigma_enc: float = DEFAULT_SIGMA_ENC
    sigma_edit: float = DEFAULT_SIGMA_EDIT
    # train a plain segmentation initializer: u and y_init channels zeroed
    interaction_free: bool = False

    def __post_init__(self):
        if self.loss_kind not in LOSS_KINDS:
            raise EngineError(f"loss_kind must be one of {LOSS_KINDS}")
        if min(self.epochs, self.batch_size, self.intercnn_steps) < 1:
            raise EngineError("epochs, batch_size, intercnn_steps must be >= 1")
        if min(self.learning_rate, self.beta1, self.beta2, self.adam_eps) <= 0:
            raise EngineError("optimizer hyperparameters must be positive")
        if self.interaction_free and self.loss_kind not in ("ce", "dice"):
            raise EngineError("interaction_free training uses the ce or dice loss")


@dataclass
class TrainHistory:
    loss_kind: str
    epoch_loss: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)


class _Adam:
    def __init__(self, model: TinyCnnModel, config: TrainConfig):
        self.lr = config.learning_rate
        self.b1, self.b2, self.eps = config.beta1, config.beta2, config.adam_eps
        self.t = 0
        self.m = [np.zeros_like(w) for w in model.weights] + [np.zeros_like(b) for b in model.biases]
        self.v = [np.zeros_like(p) for p in self.m]

    def step(self, model: TinyCnnModel, w_grads, b_grads) -> None:
        self.t += 1
        params = model.weights + model.biases
        grads = list(w_grads) + list(b_grads)
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m += (1.0 - self.b1) * (g - m)
            v += (1.0 - self.b2) * (g * g - v)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def fallback_boundary_scribble(y: BinaryMask, frames, seed: int = 0) -> Scribble:
    """Scribble on the truth boundary when there is no disagreement to fix
    (training corner case: y_init identical to y)."""
    from .geometry import extract_plane_contour

    for pose in frames.poses:
        contour = extract_plane_contour(y, pose)
        if len(contour) >= 2:
            pts = contour.points
            center = int(np.argmin(np.abs(pts - pts.mean(axis=0)).sum(axis=1)))
            return Scribble(y.meta, pose.frame_id, centered_path(pts, center, 41, seed=seed))
    raise InteractionError("mask has no per-frame boundary to scribble on")


def _training_edit(case: CaseBundle, config: TrainConfig, seed: int) -> EditRecord:
    try:
        scribble = synthesize_training_edit(case.y_init, case.y, case.frames, seed=seed)
    except InteractionError:
        scribble = fallback_boundary_scribble(case.y, case.frames, seed=seed)
    return encode_edit(scribble, config.sigma_enc, config.sigma_edit)


@dataclass
class _Sample:
    case: CaseBundle
    x: np.ndarray
    y_init_f: np.ndarray
    u: np.ndarray
    a_field: ScalarField | None


def _prepare_samples(corpus, config: TrainConfig) -> list[_Sample]:
    samples = []
    for idx, case in enumerate(corpus):
        x = case.x.data.astype(np.float32)
        yi = case.y_init.data.astype(np.float32)
        if config.interaction_free:
            zero = np.zeros_like(x)
            samples.append(_Sample(case, x, zero, zero, None))
            continue
        if config.loss_kind == "intercnn":
            samples.append(_Sample(case, x, yi, np.zeros_like(x), None))
            continue
        edit = _training_edit(case, config, seed=config.seed + idx)
        u = edit.u.data.astype(np.float32)
        a_field = None
        if config.loss_kind == "editing":
            a_field = ScalarField(case.meta, edit.A.data.astype(np.float32))
        samples.append(_Sample(case, x, yi, u, a_field))
    return samples


def _item_loss(config: TrainConfig, probs: np.ndarray, sample: _Sample):
    meta = sample.case.meta
    fieldv = ScalarField(meta, probs)
    if config.loss_kind == "editing":
        return editing_loss(fieldv, sample.case.y, sample.case.y_init, sample.a_field)
    if config.loss_kind == "dice":
        return dice_loss(fieldv, sample.case.y)
    return ce_loss(fieldv, sample.case.y)  # ce and intercnn train against y


def _train_step(model, adam, config, batch, stacks, context: str) -> float:
    probs, cache = forward_batch(model, stacks)
    scalars, grads = [], []
    for b, sample in enumerate(batch):
        lv = _item_loss(config, probs[b], sample)
        scalars.append(lv.scalar)
        grads.append(lv.grad.data / len(batch))
    if not np.isfinite(scalars).all():
        raise NumericalError(f"non-finite loss at {context}")
    wg, bg = backward_batch(model, cache, np.stack(grads))
    adam.step(model, wg, bg)
    return float(np.mean(scalars))


def _intercnn_batch(model, adam, config, batch, context: str) -> float:
    meta = batch[0].case.meta
    u_acc = np.zeros((len(batch), *meta.dims), dtype=np.float32)

    def stacks():
        return np.stack(
            [np.stack([s.x, s.y_init_f, u_acc[b]]) for b, s in enumerate(batch)]
        )

    probs, _ = forward_batch(model, stacks())
    total = 0.0
    for step in range(config.intercnn_steps):
        for b, sample in enumerate(batch):
            pred = BinaryMask(meta, probs[b] >= 0.5)
            try:
                scribble = synthesize_training_edit(
                    pred, sample.case.y, sample.case.frames,
                    seed=config.seed + 101 * step + b,
                )
            except InteractionError:
                continue  # nothing left to fix on this sample; keep prior edits
            u_new = make_gaussian_map(scribble.voxel_set(), config.sigma_enc)
            np.maximum(u_acc[b], u_new.data.astype(np.float32), out=u_acc[b])
        probs, cache = forward_batch(model, stacks())
        scalars, grads = [], []
        for b, sample in enumerate(batch):
            lv = _item_loss(config, probs[b], sample)
            scalars.append(lv.scalar)
            grads.append(lv.grad.data / len(batch))
        if not np.isfinite(scalars).all():
            raise NumericalError(f"non-finite loss at {context} step {step}")
        wg, bg = backward_batch(model, cache, np.stack(grads))
        adam.step(model, wg, bg)
        total += float(np.mean(scalars))
    return total / config.intercnn_steps


def train(corpus, config: TrainConfig):
    """Train a CNN editor over the corpus; returns (model, history).

    Deterministic for a fixed (corpus, config): sample order, edit
    synthesis and optimizer state all derive from config.seed.
    """
    corpus = list(corpus)
    if not corpus:
        raise EngineError("empty training corpus")
    model = init_model(config.channels, seed=config.seed, dtype=np.float32)
    adam = _Adam(model, config)
    samples = _prepare_samples(corpus, config)
    rng = np.random.default_rng(config.seed)
    history = TrainHistory(config.loss_kind)
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(len(samples))
        losses = []
        for start in range(0, len(order), config.batch_size):
            ids = order[start : start + config.batch_size]
            batch = [samples[i] for i in ids]
            context = f"epoch {epoch} batch {start // config.batch_size}"
            if config.loss_kind == "intercnn":
                losses.append(_intercnn_batch(model, adam, config, batch, context))
            else:
                stacks = np.stack([np.stack([s.x, s.y_init_f, s.u]) for s in batch])
                losses.append(_train_step(model, adam, config, batch, stacks, context))
        history.epoch_loss.append(float(np.mean(losses)))
        history.epoch_seconds.append(time.perf_counter() - t0)
    return model, history


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = "1"


def _weight_blob(model: TinyCnnModel) -> bytes:
    parts = [np.ascontiguousarray(w, dtype="<f4").tobytes() for w in model.weights]
    parts += [np.ascontiguousarray(b, dtype="<f4").tobytes() for b in model.biases]
    return b"".join(parts)


def save_checkpoint(model: TinyCnnModel, path: str, config: dict | None = None) -> None:
    os.makedirs(path, exist_ok=True)
    blob = _weight_blob(model)
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "channels": list(model.channels),
        "seed": model.seed,
        "config": config or {},
        "weights_bytes": len(blob),
        "weights_crc32": zlib.crc32(blob),
    }
    tmp = os.path.join(path, "weights.f32.tmp")
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, os.path.join(path, "weights.f32"))
    tmp = os.path.join(path, "manifest.json.tmp")
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
    os.replace(tmp, os.path.join(path, "manifest.json"))


def load_checkpoint(path: str):
    """Returns (model, config dict recorded at save time)."""
    mpath = os.path.join(path, "manifest.json")
    if not os.path.exists(mpath):
        raise MissingMemberError(f"missing member: manifest.json in {path}")
    manifest = json.loads(open(mpath).read())
    if manifest.get("format_version") != CHECKPOINT_VERSION:
        raise VersionMismatchError(
            f"unsupported checkpoint version {manifest.get('format_version')!r}"
        )
    wpath = os.path.join(path, "weights.f32")
    if not os.path.exists(wpath):
        raise MissingMemberError("missing member: weights.f32")
    blob = open(wpath, "rb").read()
    if len(blob) != manifest["weights_bytes"]:
        raise TruncatedFileError(
            f"weights.f32: expected {manifest['weights_bytes']} bytes, found {len(blob)}"
        )
    if zlib.crc32(blob) != manifest["weights_crc32"]:
        raise ChecksumError("weights.f32: CRC32 mismatch")
    channels = tuple(manifest["channels"])
    model = init_model(channels, seed=manifest["seed"], dtype=np.float32)
    flat = np.frombuffer(blob, dtype="<f4")
    pos = 0
    for w in model.weights:
        w[:] = flat[pos : pos + w.size].reshape(w.shape)
        pos += w.size
    for b in model.biases:
        b[:] = flat[pos : pos + b.size].reshape(b.shape)
        pos += b.size
    return model, manifest.get("config", {})
