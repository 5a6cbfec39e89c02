"""Minibatch training with full backpropagation through time."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import NonFiniteLoss
from .optim import Adam, clip_by_global_norm

log = logging.getLogger(__name__)

SEQ_LEN = 150


@dataclass
class TrainConfig:
    lr: float = 3e-4
    batch: int = 256
    epochs: int = 100
    seq_len: int = SEQ_LEN
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    clip_norm: float = 1.0
    overlap: bool = False
    max_steps: int | None = None
    time_budget: float | None = None  # seconds

    def __post_init__(self):
        if self.lr < 0 or self.batch <= 0 or self.epochs <= 0 or self.seq_len <= 0:
            raise ValueError("training configuration values must be positive")


@dataclass
class TrainResult:
    epoch_losses: list[float] = field(default_factory=list)
    step_losses: list[float] = field(default_factory=list)
    steps: int = 0


def _window_starts(n: int, seq_len: int, overlap: bool) -> range:
    stride = seq_len // 2 if overlap else seq_len
    return range(0, n - seq_len + 1, max(stride, 1))


def pose_windows(framesets: Sequence, seq_len: int = SEQ_LEN, overlap: bool = False):
    """``(first_pose (N,144), inputs (N,L,22), targets (N,L,144))`` from frame sets."""
    first, xs, ys = [], [], []
    for fs in framesets:
        x, y = fs.pose_inputs(), fs.pose_targets()
        for s in _window_starts(len(fs), seq_len, overlap):
            first.append(y[s])
            xs.append(x[s:s + seq_len])
            ys.append(y[s:s + seq_len])
    return np.array(first), np.array(xs), np.array(ys)


def velocity_windows(framesets: Sequence, seq_len: int = SEQ_LEN, overlap: bool = False):
    """``(inputs (N,L,25), targets (N,L,2))`` from frame sets."""
    xs, ys = [], []
    for fs in framesets:
        x, y = fs.trans_inputs(), fs.v_xz
        for s in _window_starts(len(fs), seq_len, overlap):
            xs.append(x[s:s + seq_len])
            ys.append(y[s:s + seq_len])
    return np.array(xs), np.array(ys)


def train(net, data: tuple, cfg: TrainConfig = TrainConfig(),
          callback: Callable[[int, float], None] | None = None):
    """Train ``net`` in place on ``data`` (a tuple of arrays sharing dim 0).

    Returns ``(net, TrainResult)``. Deterministic for a given seed when the
    step count is bounded by ``epochs``/``max_steps`` rather than time.
    """
    data = tuple(np.asarray(a, dtype=net.dtype) for a in data)
    n = len(data[0])
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(net.params, cfg.lr, cfg.betas, cfg.eps)
    result = TrainResult()
    start = time.perf_counter()
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        losses = []
        for b0 in range(0, n, cfg.batch):
            idx = np.sort(order[b0:b0 + cfg.batch])
            loss, grads = net.loss_and_grads(tuple(a[idx] for a in data))
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss became {loss} at epoch {epoch}, step {result.steps}")
            clip_by_global_norm(grads, cfg.clip_norm)
            opt.step(grads)
            losses.append(loss)
            result.step_losses.append(loss)
            result.steps += 1
            if callback:
                callback(result.steps, loss)
            if cfg.max_steps is not None and result.steps >= cfg.max_steps:
                break
            if cfg.time_budget is not None and time.perf_counter() - start > cfg.time_budget:
                break
        result.epoch_losses.append(float(np.mean(losses)))
        log.info("epoch %d mean loss %.6g", epoch, result.epoch_losses[-1])
        if cfg.max_steps is not None and result.steps >= cfg.max_steps:
            break
        if cfg.time_budget is not None and time.perf_counter() - start > cfg.time_budget:
            break
    return net, result


def evaluate_pose(net, framesets: Sequence, skel) -> float:
    """Mean SIP error (degrees) of ``net`` over whole framesets.

    Each sequence starts from its ground-truth first pose, as the live
    engine starts from the calibration pose.
    """
    from ..features import localize_pose_output
    from ..kinematics import fk
    from ..metrics import sip_error
    from ..rotmath import decode_rot6d

    errs = []
    for fs in framesets:
        targets = fs.pose_targets()
        out = net.forward(targets[0], fs.pose_inputs()).astype(float)
        local = decode_rot6d(out.reshape(len(fs), -1, 6))
        pg, _ = fk(localize_pose_output(local, fs.r_rp), skel)
        gg, _ = fk(fs.poses, skel)
        errs.append(np.atleast_1d(sip_error(pg, gg)))
    return float(np.mean(np.concatenate(errs)))
