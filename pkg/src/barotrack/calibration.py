"""Barometer bias/scale calibration and device-to-bone alignment.

Two captured windows drive the calibration: both devices held at the same
height (relative barometric bias), then a T-pose where the wrist sits a known
height above the pocket (pressure-to-height scale, mounting offsets, heading).
The pocket device is the barometric reference and keeps zero bias.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .baro_fusion import BaroModel, DEFAULT_SCALE_M_PER_HPA
from .errors import ConfigError, DegenerateSpan, ExcessiveMotion, NotStationary
from .kinematics import NUM_JOINTS, Skeleton, fk, sites
from .rotmath import angle_of, mean_rotation, rot_y, yaw_of
from .sensors import SensorFrame

TPOSE_WRIST_ABOVE_POCKET = 0.66
STATIONARY_ACC_STD = 0.3
MAX_WINDOW_ROTATION_DEG = 5.0
MIN_PRESSURE_SPAN_HPA = 0.005
MIN_FRAMES = 60
PAIR_TOLERANCE_S = 0.05
CALIBRATION_HEADING = np.pi  # subject faces world -z


@dataclass
class CalibSampleSet:
    label: str  # "same_height" or "t_pose"
    frames: list[tuple[SensorFrame, SensorFrame]]  # (wrist, pocket)

    def __post_init__(self):
        if self.label not in ("same_height", "t_pose"):
            raise ValueError(f"unknown calibration label {self.label!r}")
        if len(self.frames) < MIN_FRAMES:
            raise ValueError(f"calibration window needs >= {MIN_FRAMES} frame pairs")
        for w, p in self.frames:
            if abs(w.t - p.t) > PAIR_TOLERANCE_S:
                raise ValueError("wrist/pocket timestamps differ by more than 50 ms")

    def pressures(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([w.pressure for w, _ in self.frames]),
                np.array([p.pressure for _, p in self.frames]))

    def orientations(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([w.orient for w, _ in self.frames]),
                np.array([p.orient for _, p in self.frames]))


@dataclass(frozen=True)
class BiasEstimate:
    wrist_bias: float  # metres under the provisional scale
    wrist_offset_hpa: float  # mean wrist minus pocket pressure at equal height
    reference_pressure: float


@dataclass
class CalibProfile:
    baro: dict[str, BaroModel]
    r_offset: dict[str, np.ndarray] = field(default_factory=lambda: {"wrist": np.eye(3), "pocket": np.eye(3)})
    world_yaw: np.ndarray = field(default_factory=lambda: np.eye(3))
    ground_height: float = 0.0
    known_dh: float = TPOSE_WRIST_ABOVE_POCKET

    def bone_orientation(self, device: str, orient: np.ndarray) -> np.ndarray:
        return self.world_yaw @ orient @ self.r_offset[device]

    # -- text format -----------------------------------------------------
    def to_text(self) -> str:
        lines = ["# barotrack calibration profile", "version = 1"]
        for dev in ("wrist", "pocket"):
            m = self.baro[dev]
            lines += [
                f"{dev}.baro.scale = {float(m.scale)!r}",
                f"{dev}.baro.bias = {float(m.bias)!r}",
                f"{dev}.baro.reference_pressure = {float(m.reference_pressure)!r}",
                f"{dev}.r_offset = " + " ".join(repr(float(x)) for x in self.r_offset[dev].ravel()),
            ]
        lines.append("world_yaw = " + " ".join(repr(float(x)) for x in self.world_yaw.ravel()))
        lines.append(f"ground_height = {float(self.ground_height)!r}")
        lines.append(f"known_dh = {float(self.known_dh)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CalibProfile":
        kv = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"malformed calibration line: {line!r}")
            k, v = line.split("=", 1)
            kv[k.strip()] = v.strip()
        try:
            if int(kv["version"]) != 1:
                raise ConfigError(f"unsupported calibration version {kv['version']}")
            baro, offs = {}, {}
            for dev in ("wrist", "pocket"):
                baro[dev] = BaroModel(float(kv[f"{dev}.baro.scale"]), float(kv[f"{dev}.baro.bias"]),
                                      float(kv[f"{dev}.baro.reference_pressure"]))
                offs[dev] = _mat(kv[f"{dev}.r_offset"])
            return cls(baro, offs, _mat(kv["world_yaw"]), float(kv["ground_height"]),
                       float(kv.get("known_dh", TPOSE_WRIST_ABOVE_POCKET)))
        except KeyError as exc:
            raise ConfigError(f"calibration file lacks field {exc.args[0]}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path: str | Path) -> "CalibProfile":
        return cls.from_text(Path(path).read_text())


def _mat(s: str) -> np.ndarray:
    vals = [float(x) for x in s.split()]
    if len(vals) != 9:
        raise ConfigError("rotation fields need 9 numbers")
    return np.array(vals).reshape(3, 3)


def _check_stationary(s: CalibSampleSet) -> None:
    for idx in (0, 1):
        acc = np.array([pair[idx].acc for pair in s.frames])
        if acc.std(axis=0).max() >= STATIONARY_ACC_STD:
            raise NotStationary("acceleration std exceeds 0.3 m/s^2 during calibration window")


def estimate_bias(s: CalibSampleSet, provisional: BaroModel = BaroModel()) -> BiasEstimate:
    if s.label != "same_height":
        raise ValueError("bias estimation needs a same_height window")
    _check_stationary(s)
    p_w, p_p = s.pressures()
    offset = float(np.mean(p_w - p_p))
    # h_pocket - h_wrist under the provisional model
    return BiasEstimate(provisional.scale * offset, offset, float(np.mean(p_p)))


def estimate_scale(s: CalibSampleSet, wrist_offset_hpa: float = 0.0,
                   known_dh: float = TPOSE_WRIST_ABOVE_POCKET) -> float:
    """Metres per hPa such that the bias-corrected T-pose height gap equals ``known_dh``."""
    if s.label != "t_pose":
        raise ValueError("scale estimation needs a t_pose window")
    _check_stationary(s)
    p_w, p_p = s.pressures()
    span = float(np.mean(p_p - (p_w - wrist_offset_hpa)))
    if known_dh <= 0.0 or abs(span) < MIN_PRESSURE_SPAN_HPA:
        raise DegenerateSpan(f"pressure span {span:.5f} hPa too small for a scale estimate")
    return known_dh / span


def canonical_tpose_bones(skel: Skeleton, heading: float = CALIBRATION_HEADING) -> tuple[np.ndarray, np.ndarray]:
    """World orientations of (left forearm, right thigh) in the calibration T-pose."""
    theta = np.tile(np.eye(3), (NUM_JOINTS, 1, 1))
    theta[0] = rot_y(heading)
    glob, joints = fk(theta, skel)
    s = sites(glob, joints, skel)
    return s["r_lw"], s["r_rp"]


def align_frames(s: CalibSampleSet, bones: tuple[np.ndarray, np.ndarray]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mounting offsets ``(r_offset_wrist, r_offset_pocket)`` and the heading rotation.

    The heading is chosen so the pocket device's calibrated bone has the yaw
    of the canonical T-pose thigh, i.e. the subject faces world -z.
    """
    rw, rp = s.orientations()
    means = []
    for rs in (rw, rp):
        m = mean_rotation(rs)
        spread = np.degrees(angle_of(np.swapaxes(rs, -1, -2) @ m)).max()
        if spread > MAX_WINDOW_ROTATION_DEG:
            raise ExcessiveMotion(f"orientation varies by {spread:.1f} deg within the T-pose window")
        means.append(m)
    m_w, m_p = means
    bone_w, bone_p = bones
    world_yaw = rot_y(float(yaw_of(bone_p) - yaw_of(m_p)))
    off_w = (world_yaw @ m_w).T @ bone_w
    off_p = (world_yaw @ m_p).T @ bone_p
    return off_w, off_p, world_yaw


def set_ground(theta: np.ndarray, skel: Skeleton, pocket_height: float | None = None,
               root_height: float = 0.0) -> float:
    """Ground level under the first-frame pose.

    With ``pocket_height`` (the pocket device's height reading at frame 0) the
    ground is that reading minus the thigh site's height above the lowest
    foot. Otherwise it is the lowest foot for a pelvis at ``root_height``.
    """
    glob, joints = fk(theta, skel)
    st = sites(glob, joints, skel)
    lowest = float(st["feet"][:, 1].min())
    if pocket_height is not None:
        return float(pocket_height - (st["thigh"][1] - lowest))
    return root_height + lowest


def calibrate(same_height: CalibSampleSet, t_pose: CalibSampleSet, skel: Skeleton,
              known_dh: float = TPOSE_WRIST_ABOVE_POCKET,
              provisional: BaroModel = BaroModel(DEFAULT_SCALE_M_PER_HPA)) -> CalibProfile:
    """Full two-window calibration; ``ground_height`` is left at 0 until tracking starts."""
    bias = estimate_bias(same_height, provisional)
    scale = estimate_scale(t_pose, bias.wrist_offset_hpa, known_dh)
    ref = bias.reference_pressure
    baro = {
        "pocket": BaroModel(scale, 0.0, ref),
        "wrist": BaroModel(scale, scale * bias.wrist_offset_hpa, ref),
    }
    off_w, off_p, world_yaw = align_frames(t_pose, canonical_tpose_bones(skel))
    return CalibProfile(baro, {"wrist": off_w, "pocket": off_p}, world_yaw, 0.0, known_dh)


def mean_height_gap(s: CalibSampleSet, profile: CalibProfile) -> float:
    """Mean calibrated wrist-minus-pocket height over a window."""
    from .baro_fusion import pressure_to_height

    p_w, p_p = s.pressures()
    return float(np.mean(pressure_to_height(p_w, profile.baro["wrist"])
                         - pressure_to_height(p_p, profile.baro["pocket"])))


def tpose_gap(skel: Skeleton) -> float:
    """Wrist-site minus thigh-site height in the skeleton's own T-pose."""
    theta = np.tile(np.eye(3), (NUM_JOINTS, 1, 1))
    glob, joints = fk(theta, skel)
    st = sites(glob, joints, skel)
    return float(st["wrist"][1] - st["thigh"][1])


def window_pairs(wrist: Sequence[SensorFrame], pocket: Sequence[SensorFrame]) -> list[tuple[SensorFrame, SensorFrame]]:
    return list(zip(wrist, pocket))
