"""Network input vectors and the thigh-rooted local frame.

Flattening order is fixed (``FEATURE_LAYOUT_VERSION``): fields in declaration
order, rotation matrices column-major. Trained weights depend on it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rotmath import log_so3

FEATURE_LAYOUT_VERSION = 1
FRAME_DT = 1.0 / 30.0
GRAVITY_DIR = np.array([0.0, -1.0, 0.0])

POSE_INPUT_DIM = 22
TRANS_INPUT_DIM = 25


def _mat_to_cols(r: np.ndarray) -> np.ndarray:
    # column-major flatten of (..., 3, 3)
    return np.swapaxes(r, -1, -2).reshape(r.shape[:-2] + (9,))


def _cols_to_mat(v: np.ndarray) -> np.ndarray:
    return np.swapaxes(v.reshape(v.shape[:-1] + (3, 3)), -1, -2)


@dataclass
class RawFrame:
    """Aligned per-frame measurements of both devices (world frame)."""

    a_lw: np.ndarray
    a_rp: np.ndarray
    r_lw: np.ndarray
    r_rp: np.ndarray
    h_lw: float
    h_rp: float
    t: float = 0.0

    def to_vector(self) -> np.ndarray:
        return np.concatenate([
            self.a_lw, self.a_rp, _mat_to_cols(self.r_lw), _mat_to_cols(self.r_rp),
            [self.h_lw, self.h_rp],
        ])


@dataclass
class PoseInput22:
    a_lw_local: np.ndarray
    a_rp_local: np.ndarray
    r_lw_local: np.ndarray
    w_rp_local: np.ndarray
    g_local: np.ndarray
    dh: float

    def flatten(self) -> np.ndarray:
        return np.concatenate([
            self.a_lw_local, self.a_rp_local, _mat_to_cols(self.r_lw_local),
            self.w_rp_local, self.g_local, [self.dh],
        ])

    @classmethod
    def unflatten(cls, v: np.ndarray) -> "PoseInput22":
        v = np.asarray(v, dtype=float)
        return cls(v[0:3], v[3:6], _cols_to_mat(v[6:15]), v[15:18], v[18:21], float(v[21]))


@dataclass
class TransInput25:
    a_lw: np.ndarray
    a_rp: np.ndarray
    r_lw: np.ndarray
    r_rp: np.ndarray
    dh: float

    def flatten(self) -> np.ndarray:
        return np.concatenate([
            self.a_lw, self.a_rp, _mat_to_cols(self.r_lw), _mat_to_cols(self.r_rp), [self.dh],
        ])

    @classmethod
    def unflatten(cls, v: np.ndarray) -> "TransInput25":
        v = np.asarray(v, dtype=float)
        return cls(v[0:3], v[3:6], _cols_to_mat(v[6:15]), _cols_to_mat(v[15:24]), float(v[24]))


def build_pose_input(curr: RawFrame, prev: RawFrame, dt: float = FRAME_DT) -> PoseInput22:
    rt = curr.r_rp.T
    return PoseInput22(
        a_lw_local=rt @ curr.a_lw,
        a_rp_local=rt @ curr.a_rp,
        r_lw_local=rt @ curr.r_lw,
        w_rp_local=log_so3(prev.r_rp.T @ curr.r_rp) / dt,
        g_local=rt @ GRAVITY_DIR,
        dh=float(curr.h_lw - curr.h_rp),
    )


def build_trans_input(curr: RawFrame) -> TransInput25:
    return TransInput25(curr.a_lw, curr.a_rp, curr.r_lw, curr.r_rp, float(curr.h_lw - curr.h_rp))


def pose_inputs(a_lw, a_rp, r_lw, r_rp, h_lw, h_rp, dt: float = FRAME_DT) -> np.ndarray:
    """Vectorized :func:`build_pose_input` over a ``(T, ...)`` sequence.

    The first frame uses itself as the previous frame (zero angular velocity).
    """
    r_rp = np.asarray(r_rp, dtype=float)
    rt = np.swapaxes(r_rp, -1, -2)
    prev = np.concatenate([r_rp[:1], r_rp[:-1]], axis=0)
    w = log_so3(np.swapaxes(prev, -1, -2) @ r_rp) / dt
    return np.concatenate([
        np.einsum("tij,tj->ti", rt, a_lw),
        np.einsum("tij,tj->ti", rt, a_rp),
        _mat_to_cols(rt @ r_lw),
        w,
        rt @ GRAVITY_DIR,
        (np.asarray(h_lw) - np.asarray(h_rp))[:, None],
    ], axis=-1)


def trans_inputs(a_lw, a_rp, r_lw, r_rp, h_lw, h_rp) -> np.ndarray:
    """Vectorized :func:`build_trans_input`."""
    return np.concatenate([
        np.asarray(a_lw, dtype=float), np.asarray(a_rp, dtype=float),
        _mat_to_cols(np.asarray(r_lw, dtype=float)), _mat_to_cols(np.asarray(r_rp, dtype=float)),
        (np.asarray(h_lw) - np.asarray(h_rp))[:, None],
    ], axis=-1)


def localize_pose_output(theta_local: np.ndarray, r_rp: np.ndarray) -> np.ndarray:
    """Thigh-frame pose to world pose; only the pelvis entry changes."""
    theta = np.array(theta_local, dtype=float, copy=True)
    theta[..., 0, :, :] = np.asarray(r_rp) @ theta[..., 0, :, :]
    return theta


def delocalize_pose(theta_world: np.ndarray, r_rp: np.ndarray) -> np.ndarray:
    """World pose to thigh-frame pose (inverse of :func:`localize_pose_output`)."""
    theta = np.array(theta_world, dtype=float, copy=True)
    theta[..., 0, :, :] = np.swapaxes(np.asarray(r_rp), -1, -2) @ theta[..., 0, :, :]
    return theta
