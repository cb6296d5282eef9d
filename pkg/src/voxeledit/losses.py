"""Training losses on probability volumes: the vicinity-weighted editing
loss plus plain cross-entropy and Dice baselines, each with analytic
gradients w.r.t. the predicted probabilities.

All losses are defined on probabilities (engines apply a sigmoid before
calling) and clamp predictions to [EPS, 1-EPS] so saturated outputs stay
finite; gradients are zero where the clamp is active.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import BinaryMask, GridError, ScalarField

EPS = 1e-7
DICE_SMOOTH = 1e-6


@dataclass(frozen=True)
class LossValue:
    """Mean-reduced loss plus the per-voxel gradient d(scalar)/d(y_hat)."""

    scalar: float
    grad: ScalarField


def _as_probs(y_hat: ScalarField) -> np.ndarray:
    y_hat.require_unit_range("prediction")
    return y_hat.data


def _check_dims(y_hat: ScalarField, *others) -> None:
    for o in others:
        if o.meta.dims != y_hat.meta.dims:
            raise GridError("loss inputs must share grid dims")


def _weighted_ce(y_hat: ScalarField, pos: np.ndarray) -> LossValue:
    """Mean cross-entropy against a per-voxel soft target `pos`."""
    p = _as_probs(y_hat)
    pc = np.clip(p, EPS, 1.0 - EPS)
    loss = -(pos * np.log(pc) + (1.0 - pos) * np.log(1.0 - pc))
    n = loss.size
    active = (p >= EPS) & (p <= 1.0 - EPS)
    grad = np.where(active, (-pos / pc + (1.0 - pos) / (1.0 - pc)) / n, 0.0)
    return LossValue(float(loss.mean()), ScalarField(y_hat.meta, grad))


def editing_loss(
    y_hat: ScalarField, y: BinaryMask, y_init: BinaryMask, a: ScalarField
) -> LossValue:
    """Cross-entropy against the truth weighted by the edit vicinity A plus
    cross-entropy against the initial segmentation weighted by 1 - A."""
    _check_dims(y_hat, y, y_init, a)
    a.require_unit_range("vicinity map")
    av = a.data
    pos = av * y.data + (1.0 - av) * y_init.data
    return _weighted_ce(y_hat, pos)


def ce_loss(y_hat: ScalarField, target: BinaryMask) -> LossValue:
    """Mean binary cross-entropy."""
    _check_dims(y_hat, target)
    return _weighted_ce(y_hat, target.data.astype(np.float64))


def dice_loss(y_hat: ScalarField, target: BinaryMask) -> LossValue:
    """Differentiable Dice loss with squared-sum denominator smoothing."""
    _check_dims(y_hat, target)
    p = _as_probs(y_hat)
    t = target.data.astype(p.dtype)
    inter = float((p * t).sum())
    denom = float((p * p).sum() + (t * t).sum()) + DICE_SMOOTH
    loss = 1.0 - 2.0 * inter / denom
    grad = -2.0 * (t * denom - inter * 2.0 * p) / (denom * denom)
    return LossValue(loss, ScalarField(y_hat.meta, grad))
