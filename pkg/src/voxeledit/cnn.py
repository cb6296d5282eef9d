"""Small volumetric CNN: a stack of 3x3x3 same-padding convolutions with
ReLU hidden activations and a sigmoid head.

Forward and backward passes are written out explicitly (the backward pass
derives every gradient by hand); torch's conv3d / conv_transpose3d serve
only as fast convolution kernels and no autograd is involved.  float32 is
the training dtype; float64 is supported for gradient verification.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

torch.set_num_threads(1)  # single-core box; keeps runs bit-reproducible

DEFAULT_CHANNELS = (3, 8, 8, 1)
KERNEL = 3


class CnnError(ValueError):
    """Invalid model input or missing forward cache."""


@dataclass
class TinyCnnModel:
    """Convolution stack weights; layer l maps channels[l] -> channels[l+1]."""

    channels: tuple[int, ...]
    weights: list[np.ndarray]  # each (C_out, C_in, 3, 3, 3)
    biases: list[np.ndarray]   # each (C_out,)
    seed: int
    dtype: np.dtype = np.float32

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def copy(self) -> "TinyCnnModel":
        return TinyCnnModel(
            self.channels,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.seed,
            self.dtype,
        )


def init_model(
    channels: tuple[int, ...] = DEFAULT_CHANNELS,
    seed: int = 0,
    dtype=np.float32,
) -> TinyCnnModel:
    """He-scaled random weights, deterministic in the seed."""
    if len(channels) < 2 or channels[-1] != 1:
        raise CnnError(f"channel spec must end in 1 output channel, got {channels}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for cin, cout in zip(channels[:-1], channels[1:]):
        fan_in = cin * KERNEL**3
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(cout, cin, KERNEL, KERNEL, KERNEL))
        weights.append(w.astype(dtype))
        biases.append(np.zeros(cout, dtype=dtype))
    return TinyCnnModel(tuple(channels), weights, biases, seed, np.dtype(dtype))


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

def _to_torch(a: np.ndarray, dtype) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(a, dtype=dtype))


def forward_batch(model: TinyCnnModel, batch: np.ndarray):
    """Probabilities for a (B, C, H, W, D) input batch.

    Returns (probs (B, H, W, D), cache); the cache holds every layer input
    and pre-activation needed by backward_batch.
    """
    if batch.ndim != 5 or batch.shape[1] != model.channels[0]:
        raise CnnError(
            f"expected input (B, {model.channels[0]}, H, W, D), got {batch.shape}"
        )
    a = _to_torch(batch, model.dtype)
    inputs, preacts = [], []
    with torch.no_grad():
        for l in range(model.n_layers):
            w = _to_torch(model.weights[l], model.dtype)
            b = _to_torch(model.biases[l], model.dtype)
            inputs.append(a)
            z = torch.nn.functional.conv3d(a, w, b, padding=KERNEL // 2)
            preacts.append(z)
            a = torch.relu(z) if l < model.n_layers - 1 else torch.sigmoid(z)
    probs = a[:, 0].numpy()
    cache = {"inputs": inputs, "preacts": preacts, "probs": a}
    return probs, cache


def backward_batch(model: TinyCnnModel, cache, grad_probs: np.ndarray):
    """Parameter gradients for an upstream d(loss)/d(probs) of shape
    (B, H, W, D); exact chain rule through sigmoid, convs and ReLUs."""
    if cache is None or "preacts" not in cache:
        raise CnnError("missing forward cache")
    probs = cache["probs"]
    with torch.no_grad():
        g = _to_torch(grad_probs, model.dtype).unsqueeze(1)
        # sigmoid head: dL/dz = dL/dp * p * (1 - p)
        dz = g * probs * (1.0 - probs)
        w_grads: list[np.ndarray] = [None] * model.n_layers
        b_grads: list[np.ndarray] = [None] * model.n_layers
        for l in range(model.n_layers - 1, -1, -1):
            x = cache["inputs"][l]
            xp = torch.nn.functional.pad(x, (1, 1, 1, 1, 1, 1))
            # dW[o, i, q] = sum_{b, v} x_pad[b, i, v + q] * dz[b, o, v]:
            # a correlation with the batch axis playing the channel role
            dw = torch.nn.functional.conv3d(
                xp.transpose(0, 1), dz.transpose(0, 1)
            ).transpose(0, 1)
            w_grads[l] = dw.numpy()
            b_grads[l] = dz.sum(dim=(0, 2, 3, 4)).numpy()
            if l > 0:
                w = _to_torch(model.weights[l], model.dtype)
                # adjoint of the forward conv: conv with the kernel flipped
                # and in/out channels swapped
                w_adj = w.transpose(0, 1).flip(2, 3, 4)
                dx = torch.nn.functional.conv3d(dz, w_adj, padding=KERNEL // 2)
                dz = dx * (cache["preacts"][l - 1] > 0).to(dz.dtype)
    return w_grads, b_grads


def forward_volume(model: TinyCnnModel, channels: np.ndarray) -> np.ndarray:
    """Single-volume forward: (C, H, W, D) in, (H, W, D) probabilities out."""
    probs, _ = forward_batch(model, channels[None])
    return probs[0]
