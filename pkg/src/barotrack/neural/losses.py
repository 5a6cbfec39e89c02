"""Training losses and their gradients.

Both accept a single sequence ``(T, D)`` or a batch ``(B, T, D)``; batched
losses are averaged over the batch.
"""

from __future__ import annotations

import numpy as np

from ..errors import LengthMismatch


def _batched(a):
    a = np.asarray(a)
    return a[None] if a.ndim == 2 else a


def pose_loss(pred, gt) -> float:
    """Mean over frames of the squared L2 error summed over all components."""
    p, g = _batched(pred), _batched(gt)
    if p.shape != g.shape:
        raise LengthMismatch(f"pose sequences differ: {p.shape} vs {g.shape}")
    d = p - g
    return float(np.sum(d * d) / (d.shape[0] * d.shape[1]))


def pose_loss_grad(pred, gt) -> np.ndarray:
    p, g = _batched(pred), _batched(gt)
    grad = 2.0 * (p - g) / (p.shape[0] * p.shape[1])
    return grad.reshape(np.shape(pred))


def velocity_loss(pred, gt) -> float:
    """Squared distance between the summed predicted and true velocities.

    The sum is not divided by the sequence length.
    """
    p, g = _batched(pred), _batched(gt)
    if p.shape != g.shape:
        raise LengthMismatch(f"velocity sequences differ: {p.shape} vs {g.shape}")
    e = p.sum(axis=1) - g.sum(axis=1)
    return float(np.sum(e * e) / p.shape[0])


def velocity_loss_grad(pred, gt) -> np.ndarray:
    p, g = _batched(pred), _batched(gt)
    e = p.sum(axis=1) - g.sum(axis=1)
    grad = np.broadcast_to((2.0 * e / p.shape[0])[:, None, :], p.shape).copy()
    return grad.reshape(np.shape(pred))
