"""Synthetic sensor data from ground-truth motion.

Includes procedural motion clips (T-pose hold, walk, squat, stair climb,
leg lift), resampling to the 30 Hz device rate, finite-difference IMU
synthesis, noisy device heights, and the dataset / clip file formats.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import CorruptFile, TooShort, VersionMismatch
from .features import delocalize_pose, pose_inputs, trans_inputs
from .kinematics import NUM_JOINTS, Skeleton, fk_sites
from .rotmath import encode_rot6d, exp_so3, geodesic_interp, log_so3, rot_x, rot_y, rot_z

TARGET_FPS = 30.0
HEIGHT_NOISE_STD = 0.05


@dataclass
class MotionClip:
    fps: float
    poses: np.ndarray  # (T, 24, 3, 3): pelvis world orientation + parent-relative joints
    root: np.ndarray  # (T, 3) pelvis world position
    subject: str = "procedural"

    def __post_init__(self):
        if not self.fps > 0:
            raise ValueError("fps must be positive")
        if len(self.poses) != len(self.root):
            raise ValueError("poses and root translations differ in length")

    def __len__(self) -> int:
        return len(self.poses)


# ---------------------------------------------------------------- procedural clips

def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _blend(t: np.ndarray, lead_in: float, ramp: float = 0.5) -> np.ndarray:
    if ramp <= 0:
        return (t >= lead_in).astype(float)
    return _smoothstep((t - lead_in) / ramp)


def _feet_on_ground(poses: np.ndarray, skel: Skeleton) -> np.ndarray:
    """Pelvis height per frame that puts the lowest foot site at y = 0."""
    _, _, s = fk_sites(poses, skel)
    return -s["feet"][..., 1].min(axis=-1)


def _assemble(poses, xz, elevation, skel, fps, name):
    root = np.zeros((len(poses), 3))
    root[:, 0] = xz[:, 0]
    root[:, 2] = xz[:, 1]
    root[:, 1] = _feet_on_ground(poses, skel) + elevation
    return MotionClip(fps, poses, root, name)


def _locomotion(skel, seconds, fps, heading, speed, cadence, hip_amp, knee_amp, arm_amp,
                climb_per_cycle, lead_in, name, turn_rate=0.0):
    t = np.arange(int(round(seconds * fps))) / fps
    w = _blend(t, lead_in)
    tm = np.maximum(t - lead_in, 0.0)
    cycles = np.concatenate([[0.0], np.cumsum(w[1:] * cadence / fps)])
    phase = 2.0 * np.pi * cycles
    poses = np.tile(np.eye(3), (len(t), NUM_JOINTS, 1, 1))
    yaw = heading + turn_rate * tm
    for i in range(len(t)):
        s, c = np.sin(phase[i]), np.cos(phase[i])
        wi = w[i]
        poses[i, 0] = rot_y(yaw[i]) @ rot_x(0.05 * wi * (1 - c) / 2)
        poses[i, 1] = rot_x(-wi * hip_amp * s)
        poses[i, 2] = rot_x(wi * hip_amp * s)
        poses[i, 4] = rot_x(wi * knee_amp * (1 + np.sin(phase[i] + np.pi / 3)) / 2)
        poses[i, 5] = rot_x(wi * knee_amp * (1 + np.sin(phase[i] + np.pi + np.pi / 3)) / 2)
        poses[i, 3] = rot_y(-0.1 * wi * s)
        poses[i, 16] = rot_x(wi * arm_amp * s) @ rot_z(-wi * 1.3)
        poses[i, 17] = rot_x(-wi * arm_amp * s) @ rot_z(wi * 1.3)
        poses[i, 18] = rot_y(-wi * (0.3 + 0.2 * max(s, 0)))
        poses[i, 19] = rot_y(wi * (0.3 + 0.2 * max(-s, 0)))
    # forward is the pelvis +z axis
    fwd = np.stack([np.sin(yaw), np.cos(yaw)], axis=-1)
    vel = (speed * w)[:, None] * fwd
    xz = np.concatenate([[np.zeros(2)], np.cumsum(vel[1:] / fps, axis=0)])
    steps = 2.0 * cycles
    elevation = 0.5 * climb_per_cycle * (np.floor(steps) + _smoothstep(steps % 1.0))
    return _assemble(poses, xz, elevation, skel, fps, name)


def tpose_clip(skel: Skeleton, seconds: float = 2.0, fps: float = TARGET_FPS,
               heading: float = 0.0, position=(0.0, 0.0)) -> MotionClip:
    n = int(round(seconds * fps))
    poses = np.tile(np.eye(3), (n, NUM_JOINTS, 1, 1))
    poses[:, 0] = rot_y(heading)
    xz = np.tile(np.asarray(position, dtype=float), (n, 1))
    return _assemble(poses, xz, np.zeros(n), skel, fps, "tpose")


def walk_clip(skel: Skeleton, seconds: float = 6.0, fps: float = TARGET_FPS, heading: float = 0.0,
              speed: float = 1.2, cadence: float = 0.9, lead_in: float = 1.0,
              turn_rate: float = 0.0) -> MotionClip:
    return _locomotion(skel, seconds, fps, heading, speed, cadence, hip_amp=0.45, knee_amp=0.9,
                       arm_amp=0.35, climb_per_cycle=0.0, lead_in=lead_in, name="walk",
                       turn_rate=turn_rate)


def stair_clip(skel: Skeleton, seconds: float = 6.0, fps: float = TARGET_FPS, heading: float = 0.0,
               speed: float = 0.5, cadence: float = 0.6, step_height: float = 0.17,
               lead_in: float = 1.0) -> MotionClip:
    """Stair ascent: two steps of ``step_height`` per gait cycle."""
    return _locomotion(skel, seconds, fps, heading, speed, cadence, hip_amp=0.7, knee_amp=1.2,
                       arm_amp=0.25, climb_per_cycle=2 * step_height, lead_in=lead_in,
                       name="stairs")


def squat_clip(skel: Skeleton, seconds: float = 6.0, fps: float = TARGET_FPS, heading: float = 0.0,
               period: float = 2.5, depth: float = 0.8, lead_in: float = 1.0) -> MotionClip:
    t = np.arange(int(round(seconds * fps))) / fps
    tm = np.maximum(t - lead_in, 0.0)
    w = _blend(t, lead_in)
    s = depth * w * (1 - np.cos(2 * np.pi * tm / period)) / 2
    poses = np.tile(np.eye(3), (len(t), NUM_JOINTS, 1, 1))
    for i in range(len(t)):
        poses[i, 0] = rot_y(heading) @ rot_x(0.6 * s[i])
        poses[i, 1] = rot_x(-1.9 * s[i])
        poses[i, 2] = rot_x(-1.9 * s[i])
        poses[i, 4] = rot_x(2.1 * s[i])
        poses[i, 5] = rot_x(2.1 * s[i])
        poses[i, 7] = rot_x(-0.8 * s[i])
        poses[i, 8] = rot_x(-0.8 * s[i])
        poses[i, 16] = rot_y(-1.2 * s[i]) @ rot_z(-0.3 * w[i])
        poses[i, 17] = rot_y(1.2 * s[i]) @ rot_z(0.3 * w[i])
    return _assemble(poses, np.zeros((len(t), 2)), np.zeros(len(t)), skel, fps, "squat")


def leg_lift_clip(skel: Skeleton, seconds: float = 5.0, fps: float = TARGET_FPS,
                  heading: float = 0.0, period: float = 2.0, max_flex: float = np.pi / 2,
                  lead_in: float = 1.0) -> MotionClip:
    """Right leg raised to ``max_flex`` and lowered; the pelvis does not move."""
    t = np.arange(int(round(seconds * fps))) / fps
    tm = np.maximum(t - lead_in, 0.0)
    w = _blend(t, lead_in)
    lift = max_flex * w * (1 - np.cos(2 * np.pi * tm / period)) / 2
    poses = np.tile(np.eye(3), (len(t), NUM_JOINTS, 1, 1))
    for i in range(len(t)):
        poses[i, 0] = rot_y(heading)
        poses[i, 2] = rot_x(-lift[i])
        poses[i, 5] = rot_x(0.8 * lift[i])
        poses[i, 16] = rot_z(-1.2 * w[i])
        poses[i, 17] = rot_z(1.2 * w[i])
    clip = _assemble(poses, np.zeros((len(t), 2)), np.zeros(len(t)), skel, fps, "leg_lift")
    # pelvis is fixed: the standing left foot stays at the rest height
    clip.root[:, 1] = clip.root[0, 1]
    return clip


PROCEDURAL = {
    "tpose": tpose_clip,
    "walk": walk_clip,
    "squat": squat_clip,
    "stairs": stair_clip,
    "leg_lift": leg_lift_clip,
}


def random_clip(skel: Skeleton, rng: np.random.Generator, kind: str | None = None,
                seconds: float = 6.0) -> MotionClip:
    """Procedural clip with randomized heading, tempo and amplitude."""
    kinds = ["walk", "squat", "stairs", "leg_lift", "walk"]
    kind = kind or kinds[rng.integers(len(kinds))]
    heading = rng.uniform(-np.pi, np.pi)
    lead_in = rng.uniform(0.3, 1.0)
    if kind == "walk":
        return walk_clip(skel, seconds, heading=heading, speed=rng.uniform(0.6, 1.6),
                         cadence=rng.uniform(0.7, 1.1), lead_in=lead_in,
                         turn_rate=rng.uniform(-0.3, 0.3))
    if kind == "stairs":
        return stair_clip(skel, seconds, heading=heading, speed=rng.uniform(0.3, 0.7),
                          cadence=rng.uniform(0.5, 0.8), step_height=rng.uniform(0.14, 0.2),
                          lead_in=lead_in)
    if kind == "squat":
        return squat_clip(skel, seconds, heading=heading, period=rng.uniform(1.8, 3.5),
                          depth=rng.uniform(0.4, 1.0), lead_in=lead_in)
    if kind == "leg_lift":
        return leg_lift_clip(skel, seconds, heading=heading, period=rng.uniform(1.5, 3.0),
                             max_flex=rng.uniform(0.8, 1.6), lead_in=lead_in)
    return tpose_clip(skel, seconds, heading=heading)


# ---------------------------------------------------------------- resampling and synthesis

def resample(clip: MotionClip, target_fps: float = TARGET_FPS) -> MotionClip:
    """Uniform resampling: linear translations, geodesic rotations."""
    if clip.fps < 1:
        raise ValueError("fps must be at least 1")
    if clip.fps == target_fps:
        return MotionClip(clip.fps, clip.poses.copy(), clip.root.copy(), clip.subject)
    n_in = len(clip)
    duration = (n_in - 1) / clip.fps
    n_out = int(np.floor(duration * target_fps + 1e-9)) + 1
    k = np.arange(n_out)
    pos = k * clip.fps / target_fps
    i0 = np.minimum(np.floor(pos + 1e-9).astype(int), n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    w = np.clip(pos - i0, 0.0, 1.0)
    root = (1 - w)[:, None] * clip.root[i0] + w[:, None] * clip.root[i1]
    poses = geodesic_interp(clip.poses[i0], clip.poses[i1], np.broadcast_to(w[:, None], (n_out, NUM_JOINTS)))
    exact = w == 0.0
    poses[exact] = clip.poses[i0[exact]]
    root[exact] = clip.root[i0[exact]]
    return MotionClip(target_fps, poses, root, clip.subject)


def _moving_average(x: np.ndarray, width: int = 5) -> np.ndarray:
    pad = width // 2
    xp = np.concatenate([np.repeat(x[:1], pad, 0), x, np.repeat(x[-1:], pad, 0)], axis=0)
    kernel = np.ones(width) / width
    return np.apply_along_axis(lambda c: np.convolve(c, kernel, mode="valid"), 0, xp)


def site_trajectories(clip: MotionClip, skel: Skeleton) -> dict[str, np.ndarray]:
    """World positions and orientations of the device and foot sites."""
    _, _, s = fk_sites(clip.poses, skel)
    return {
        "p_lw": s["wrist"] + clip.root,
        "p_rp": s["thigh"] + clip.root,
        "feet_y": s["feet"][..., 1] + clip.root[:, 1:2],
        "r_lw": s["r_lw"],
        "r_rp": s["r_rp"],
    }


def finite_difference_acceleration(p: np.ndarray, dt: float) -> np.ndarray:
    """Second central difference; endpoints replicate their neighbours."""
    a = np.empty_like(p)
    a[1:-1] = (p[:-2] - 2.0 * p[1:-1] + p[2:]) / (dt * dt)
    a[0] = a[1]
    a[-1] = a[-2]
    return a


def synth_imu(clip: MotionClip, skel: Skeleton, smooth: bool = False) -> dict[str, np.ndarray]:
    """Gravity-free world-frame accelerations and bone orientations at both sites."""
    if len(clip) < 3:
        raise TooShort("IMU synthesis needs at least 3 frames")
    tr = site_trajectories(clip, skel)
    dt = 1.0 / clip.fps
    p_lw, p_rp = tr["p_lw"], tr["p_rp"]
    if smooth:
        p_lw, p_rp = _moving_average(p_lw), _moving_average(p_rp)
    return {
        "a_lw": finite_difference_acceleration(p_lw, dt),
        "a_rp": finite_difference_acceleration(p_rp, dt),
        "r_lw": tr["r_lw"],
        "r_rp": tr["r_rp"],
    }


def ground_of(clip: MotionClip, skel: Skeleton) -> float:
    """Lowest foot site height in the first frame."""
    return float(site_trajectories(MotionClip(clip.fps, clip.poses[:1], clip.root[:1]), skel)["feet_y"].min())


def synth_heights(clip: MotionClip, skel: Skeleton, noise_std: float = HEIGHT_NOISE_STD,
                  seed: int | None = 0) -> tuple[np.ndarray, np.ndarray]:
    """Device heights above the first-frame ground plus i.i.d. Gaussian noise."""
    tr = site_trajectories(clip, skel)
    ground = tr["feet_y"][0].min()
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((len(clip), 2)) * noise_std
    h_lw = tr["p_lw"][:, 1] - ground + noise[:, 0]
    h_rp = tr["p_rp"][:, 1] - ground + noise[:, 1]
    return h_lw, h_rp


def ground_truth_velocity(clip: MotionClip) -> np.ndarray:
    """Horizontal root velocity by backward differences; frame 0 is zero."""
    if len(clip) < 2:
        raise TooShort("velocity needs at least 2 frames")
    v = np.zeros((len(clip), 2))
    d = np.diff(clip.root[:, [0, 2]], axis=0)
    v[1:] = d * clip.fps
    return v


@dataclass
class SynthFrameSet:
    name: str
    fps: float
    a_lw: np.ndarray
    a_rp: np.ndarray
    r_lw: np.ndarray
    r_rp: np.ndarray
    h_lw: np.ndarray
    h_rp: np.ndarray
    poses: np.ndarray
    root: np.ndarray
    v_xz: np.ndarray

    def __len__(self) -> int:
        return len(self.a_lw)

    def raw_frame(self, i: int):
        from .features import RawFrame

        return RawFrame(self.a_lw[i], self.a_rp[i], self.r_lw[i], self.r_rp[i],
                        float(self.h_lw[i]), float(self.h_rp[i]), i / self.fps)

    def pose_inputs(self) -> np.ndarray:
        return pose_inputs(self.a_lw, self.a_rp, self.r_lw, self.r_rp, self.h_lw, self.h_rp,
                           1.0 / self.fps)

    def trans_inputs(self) -> np.ndarray:
        return trans_inputs(self.a_lw, self.a_rp, self.r_lw, self.r_rp, self.h_lw, self.h_rp)

    def local_poses(self) -> np.ndarray:
        return delocalize_pose(self.poses, self.r_rp)

    def pose_targets(self) -> np.ndarray:
        """``(T, 144)`` 6D targets of the thigh-frame pose."""
        return encode_rot6d(self.local_poses()).reshape(len(self), -1)


def make_frameset(clip: MotionClip, skel: Skeleton, noise_std: float = HEIGHT_NOISE_STD,
                  seed: int | None = 0, smooth: bool = False) -> SynthFrameSet:
    if clip.fps != TARGET_FPS:
        clip = resample(clip, TARGET_FPS)
    imu = synth_imu(clip, skel, smooth=smooth)
    h_lw, h_rp = synth_heights(clip, skel, noise_std, seed)
    return SynthFrameSet(clip.subject, clip.fps, imu["a_lw"], imu["a_rp"], imu["r_lw"],
                         imu["r_rp"], h_lw, h_rp, clip.poses, clip.root,
                         ground_truth_velocity(clip))


# ---------------------------------------------------------------- files

DATASET_MAGIC = b"BTDS"
DATASET_VERSION = 1
_ARRAY_FIELDS = ("a_lw", "a_rp", "r_lw", "r_rp", "h_lw", "h_rp", "poses", "root", "v_xz")
_FIELD_SHAPES = {
    "a_lw": (3,), "a_rp": (3,), "r_lw": (3, 3), "r_rp": (3, 3), "h_lw": (), "h_rp": (),
    "poses": (NUM_JOINTS, 3, 3), "root": (3,), "v_xz": (2,),
}


def write_dataset(path: str | Path, sets: list[SynthFrameSet]) -> None:
    """Layout: magic, u16 version, u32 count, records, u32 CRC32 of everything before it.

    Record: u16 name length, UTF-8 name, f64 fps, u32 frames, then every array
    field in fixed order as little-endian float64.
    """
    body = bytearray(DATASET_MAGIC + struct.pack("<HI", DATASET_VERSION, len(sets)))
    for s in sets:
        name = s.name.encode()
        body += struct.pack("<H", len(name)) + name + struct.pack("<dI", s.fps, len(s))
        for f in _ARRAY_FIELDS:
            body += np.ascontiguousarray(getattr(s, f), dtype="<f8").tobytes()
    body += struct.pack("<I", zlib.crc32(bytes(body)))
    Path(path).write_bytes(bytes(body))


def read_dataset(path: str | Path) -> list[SynthFrameSet]:
    data = Path(path).read_bytes()
    if len(data) < 14 or data[:4] != DATASET_MAGIC:
        raise CorruptFile("not a dataset file (bad magic or too short)")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != DATASET_VERSION:
        raise VersionMismatch(f"dataset version {version}, expected {DATASET_VERSION}")
    (crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) != crc:
        raise CorruptFile("dataset checksum mismatch (truncated or damaged)")
    (count,) = struct.unpack_from("<I", data, 6)
    off = 10
    out = []
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", data, off)
            off += 2
            name = data[off:off + nlen].decode()
            off += nlen
            fps, n = struct.unpack_from("<dI", data, off)
            off += 12
            arrays = {}
            for f in _ARRAY_FIELDS:
                shape = (n,) + _FIELD_SHAPES[f]
                size = int(np.prod(shape)) * 8
                if off + size > len(data) - 4:
                    raise CorruptFile("dataset record overruns file")
                arrays[f] = np.frombuffer(data, "<f8", int(np.prod(shape)), off).reshape(shape).astype(float)
                off += size
            out.append(SynthFrameSet(name=name, fps=fps, **arrays))
    except struct.error as exc:
        raise CorruptFile(str(exc)) from exc
    if off != len(data) - 4:
        raise CorruptFile("trailing bytes in dataset")
    return out


def write_clip_text(path: str | Path, clip: MotionClip) -> None:
    """Text clip: ``fps <f> joints <n> frames <T>``, then one line per frame of
    24 axis-angle triples followed by the root xyz."""
    aa = log_so3(clip.poses).reshape(len(clip), -1)
    lines = [f"fps {float(clip.fps)!r} joints {NUM_JOINTS} frames {len(clip)} subject {clip.subject}"]
    for row_aa, row_t in zip(aa, clip.root):
        lines.append(" ".join(repr(float(x)) for x in np.concatenate([row_aa, row_t])))
    Path(path).write_text("\n".join(lines) + "\n")


def read_clip_text(path: str | Path) -> MotionClip:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    head = lines[0].split()
    meta = dict(zip(head[0::2], head[1::2]))
    joints = int(meta["joints"])
    if joints != NUM_JOINTS:
        raise ValueError(f"clip has {joints} joints, expected {NUM_JOINTS}")
    rows = np.array([[float(x) for x in ln.split()] for ln in lines[1:]])
    if rows.shape[1] != joints * 3 + 3:
        raise CorruptFile("clip row width does not match joint count")
    poses = exp_so3(rows[:, : joints * 3].reshape(-1, joints, 3))
    return MotionClip(float(meta["fps"]), poses, rows[:, joints * 3:], meta.get("subject", "file"))


def frameset_fields() -> tuple[str, ...]:
    return tuple(f.name for f in fields(SynthFrameSet))
