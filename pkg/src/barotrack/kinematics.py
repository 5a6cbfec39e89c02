"""Skeleton, forward kinematics and the hybrid translation estimate.

Pose convention: ``theta[0]`` is the pelvis orientation in the world frame,
``theta[j]`` for ``j > 0`` is the rotation of joint ``j`` relative to its
parent. Joint positions are pelvis-relative but world-oriented.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import LengthMismatch
from .features import localize_pose_output

NUM_JOINTS = 24

# bones carrying the devices: the watch follows the left forearm, the phone the right thigh
LEFT_FOREARM = 18
LEFT_WRIST = 20
RIGHT_HIP = 2
RIGHT_KNEE = 5
FOOT_JOINTS = (7, 8, 10, 11)
SIP_JOINTS = (1, 2, 16, 17)


@dataclass(frozen=True)
class Skeleton:
    names: tuple[str, ...]
    parents: np.ndarray
    offsets: np.ndarray
    thigh_fraction: float = 0.5

    def __post_init__(self):
        parents = np.asarray(self.parents)
        if parents[0] != -1 or np.any(parents[1:] >= np.arange(1, len(parents))):
            raise ValueError("parents must be topologically sorted with joint 0 as root")
        if not np.all(np.isfinite(self.offsets)):
            raise ValueError("offsets must be finite")

    @property
    def num_joints(self) -> int:
        return len(self.names)

    @classmethod
    def from_file(cls, path: str | Path, thigh_fraction: float = 0.5) -> "Skeleton":
        return cls.parse(Path(path).read_text(), thigh_fraction)

    @classmethod
    def parse(cls, text: str, thigh_fraction: float = 0.5) -> "Skeleton":
        names, parents, offsets = [], [], []
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            name, parent, x, y, z = line.split()
            names.append(name)
            parents.append(int(parent))
            offsets.append([float(x), float(y), float(z)])
        return cls(tuple(names), np.array(parents), np.array(offsets), thigh_fraction)

    def to_text(self) -> str:
        lines = ["# name parent offset_x offset_y offset_z"]
        for n, p, o in zip(self.names, self.parents, self.offsets):
            lines.append(f"{n} {int(p)} " + " ".join(repr(float(v)) for v in o))
        return "\n".join(lines) + "\n"


def mean_skeleton(thigh_fraction: float = 0.5) -> Skeleton:
    text = resources.files("barotrack.data").joinpath("skeleton_mean.txt").read_text()
    return Skeleton.parse(text, thigh_fraction)


@dataclass
class PoseState:
    theta: np.ndarray
    joints: np.ndarray


@dataclass
class MotionState:
    pose: PoseState
    t_xz: np.ndarray
    t_y: float
    t: float = 0.0
    extras: dict = field(default_factory=dict)


def fk(theta: np.ndarray, skel: Skeleton) -> tuple[np.ndarray, np.ndarray]:
    """Global joint rotations and pelvis-relative joint positions.

    ``theta`` has shape ``(..., J, 3, 3)``; returns ``(glob (..., J, 3, 3),
    joints (..., J, 3))``.
    """
    theta = np.asarray(theta, dtype=float)
    glob = np.empty_like(theta)
    pos = np.zeros(theta.shape[:-2] + (3,))
    glob[..., 0, :, :] = theta[..., 0, :, :]
    for j in range(1, skel.num_joints):
        p = skel.parents[j]
        glob[..., j, :, :] = glob[..., p, :, :] @ theta[..., j, :, :]
        pos[..., j, :] = pos[..., p, :] + glob[..., p, :, :] @ skel.offsets[j]
    return glob, pos


def sites(glob: np.ndarray, joints: np.ndarray, skel: Skeleton) -> dict[str, np.ndarray]:
    """Device and foot sites derived from an FK result."""
    thigh = joints[..., RIGHT_HIP, :] + skel.thigh_fraction * (
        glob[..., RIGHT_HIP, :, :] @ skel.offsets[RIGHT_KNEE]
    )
    return {
        "wrist": joints[..., LEFT_WRIST, :],
        "thigh": thigh,
        "feet": joints[..., list(FOOT_JOINTS), :],
        "r_lw": glob[..., LEFT_FOREARM, :, :],
        "r_rp": glob[..., RIGHT_HIP, :, :],
    }


def fk_sites(theta: np.ndarray, skel: Skeleton) -> tuple[np.ndarray, np.ndarray, dict[str, np.ndarray]]:
    glob, joints = fk(theta, skel)
    return glob, joints, sites(glob, joints, skel)


def thigh_local_height(theta: np.ndarray, skel: Skeleton) -> np.ndarray | float:
    """Height of the thigh site above the pelvis, in world orientation."""
    _, _, s = fk_sites(theta, skel)
    y = s["thigh"][..., 1]
    return float(y) if np.ndim(y) == 0 else y


def vertical_translation(h_glb_t, h_glb_0, h_loc_t, h_loc_0):
    """Root height change: barometric thigh change minus pose-induced thigh change."""
    return (np.asarray(h_glb_t) - h_glb_0) - (np.asarray(h_loc_t) - h_loc_0)


def integrate_horizontal(v_seq: np.ndarray, dt: float = 1.0 / 30.0) -> np.ndarray:
    """Running sum of ``v * dt``; entry ``t`` includes velocity ``t``."""
    v = np.asarray(v_seq, dtype=float).reshape(-1, 2)
    return np.cumsum(v * dt, axis=0)


class Assembler:
    """Streaming fold producing one :class:`MotionState` per frame.

    The height reference is the mean barometric height over the first
    ``settle_frames`` frames (the subject is assumed still in that span),
    which keeps one noisy first sample from offsetting the whole track.
    """

    def __init__(self, skel: Skeleton, dt: float = 1.0 / 30.0, settle_frames: int = 1):
        self.skel = skel
        self.dt = dt
        self.settle_frames = max(1, int(settle_frames))
        self.t_xz = np.zeros(2)
        self.h_glb0: float | None = None
        self.h_loc0: float | None = None
        self._settled = 0

    def step(self, theta_local: np.ndarray, r_rp: np.ndarray, v_xz: np.ndarray,
             h_glb: float, t: float = 0.0) -> MotionState:
        theta = localize_pose_output(theta_local, r_rp)
        glob, joints = fk(theta, self.skel)
        h_loc = float(sites(glob, joints, self.skel)["thigh"][1])
        if self.h_glb0 is None:
            self.h_glb0, self.h_loc0 = float(h_glb), h_loc
            self._settled = 1
        elif self._settled < self.settle_frames:
            self._settled += 1
            self.h_glb0 += (float(h_glb) - self.h_glb0) / self._settled
        self.t_xz = self.t_xz + np.asarray(v_xz, dtype=float) * self.dt
        t_y = float(vertical_translation(h_glb, self.h_glb0, h_loc, self.h_loc0))
        return MotionState(PoseState(theta, joints), self.t_xz.copy(), t_y, t)


def assemble(theta_seq, r_rp_seq, v_seq, h_glb_seq, skel: Skeleton,
             dt: float = 1.0 / 30.0) -> list[MotionState]:
    n = len(theta_seq)
    if not (len(r_rp_seq) == len(v_seq) == len(h_glb_seq) == n):
        raise LengthMismatch("assemble inputs must share one length")
    asm = Assembler(skel, dt)
    return [asm.step(theta_seq[i], r_rp_seq[i], v_seq[i], h_glb_seq[i], i * dt) for i in range(n)]


def translations_of(states: list[MotionState]) -> np.ndarray:
    """``(T, 3)`` array ``[x, y, z]`` from a MotionState sequence."""
    return np.array([[s.t_xz[0], s.t_y, s.t_xz[1]] for s in states])
