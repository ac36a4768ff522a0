"""Training objectives: mean squared error and masked sequence cross-entropy (nats)."""
from __future__ import annotations

import numpy as np

from core import tensor as tc
from core.errors import ContractError, DimensionError
from core.tensor import Tensor


def mse(pred: Tensor, target: Tensor) -> Tensor:
    if pred.shape != target.shape:
        raise DimensionError(f"mse: prediction {pred.shape} vs target {target.shape}")
    diff = tc.sub(pred, target)
    return tc.mean(tc.mul(diff, diff))


def seq_cross_entropy(logits: Tensor, targets: np.ndarray, mask: np.ndarray) -> Tensor:
    """Masked per-step cross-entropy summed and divided by the number of valid steps."""
    if logits.ndim != 3:
        raise DimensionError(f"seq_cross_entropy expects batch x T x K logits, got {logits.shape}")
    batch, steps, classes = logits.shape
    targets = np.asarray(targets)
    mask = np.asarray(mask, dtype=np.float64)
    if targets.shape != (batch, steps) or mask.shape != (batch, steps):
        raise DimensionError(
            f"seq_cross_entropy: logits {logits.shape}, targets {targets.shape}, mask {mask.shape}"
        )
    if not np.isin(mask, (0.0, 1.0)).all():
        raise ContractError("mask entries must be 0 or 1")
    valid = float(mask.sum())
    if valid == 0.0:
        raise ContractError("seq_cross_entropy: mask selects no steps")
    # padded positions may hold any id; they are zero-weighted
    safe_targets = np.where(mask > 0, targets, 0)
    flat = tc.reshape(logits, (batch * steps, classes))
    per_step = tc.softmax_cross_entropy(flat, safe_targets.reshape(-1))
    weighted = tc.mul(per_step, tc.constant(mask.reshape(-1)))
    return tc.scale(tc.sum(weighted), 1.0 / valid)


__all__ = ["mse", "seq_cross_entropy"]
