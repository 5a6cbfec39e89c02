"""Synthetic device sessions: calibration windows plus a tracked clip, as packets.

A session recording holds, on one device clock, a same-height hold, a
T-pose hold and then the tracked motion. The header names the three spans
so ``calibrate`` and ``replay`` can pick their parts out of one file.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..baro_fusion import BaroModel, height_to_pressure
from ..calibration import CALIBRATION_HEADING, PAIR_TOLERANCE_S, CalibSampleSet, tpose_gap
from ..kinematics import Skeleton
from ..rotmath import random_rotations, rot_y, yaw_of
from ..sensors import POCKET, WRIST
from ..synth import (MotionClip, SynthFrameSet, TARGET_FPS, make_frameset, resample,
                     site_trajectories, synth_imu, tpose_clip)
from .ingest import Ingestor
from .protocol import encode_packet, make_packet
from .record import RecordFile

START_US = 1_000_000


@dataclass
class DeviceSetup:
    """Hidden truth the calibration has to recover."""

    mount: dict[str, np.ndarray] = field(default_factory=lambda: {"wrist": np.eye(3), "pocket": np.eye(3)})
    device_yaw: float = 0.0  # heading of the device world relative to the engine world
    scale: float = 8.43
    bias: dict[str, float] = field(default_factory=lambda: {"wrist": 0.0, "pocket": 0.0})
    reference_pressure: float = 1005.0
    altitude: float = 0.0  # floor height in the barometric frame

    @classmethod
    def random(cls, rng: np.random.Generator) -> "DeviceSetup":
        m = random_rotations(2, rng)
        return cls({"wrist": m[0], "pocket": heading_free(m[1])}, float(rng.uniform(-np.pi, np.pi)),
                   float(rng.uniform(8.0, 8.8)),
                   {"wrist": float(rng.uniform(-1.0, 1.0)), "pocket": float(rng.uniform(-1.0, 1.0))},
                   float(rng.uniform(980.0, 1030.0)), float(rng.uniform(-20.0, 20.0)))

    def baro(self, device: str) -> BaroModel:
        return BaroModel(self.scale, self.bias[device], self.reference_pressure)


def heading_free(r: np.ndarray) -> np.ndarray:
    """Strip the heading part of a mount so the pocket device can fix the world heading."""
    return rot_y(-float(yaw_of(r))) @ r


@dataclass
class LinkModel:
    """Arrival latency and packet faults on the way to the engine."""

    latency_us: int = 15_000
    jitter_us: int = 10_000
    drop: float = 0.0
    duplicate: float = 0.0
    reorder: float = 0.0  # probability a packet is held back by an extra ~40 ms


@dataclass
class Session:
    record: RecordFile
    truth: SynthFrameSet  # noise-free tracked segment at 30 Hz
    setup: DeviceSetup
    known_dh: float
    packets_sent: int


def _device_streams(clip: MotionClip, skel: Skeleton, setup: DeviceSetup, rng: np.random.Generator,
                    pressure_noise_hpa: float, acc_noise: float,
                    heights: dict[str, np.ndarray] | None = None, still: bool = False) -> dict:
    """Per-device (acc_device, orient_engine, pressure) arrays for a clip."""
    tr = site_trajectories(clip, skel)
    imu = synth_imu(clip, skel)
    yaw = rot_y(setup.device_yaw)
    out = {}
    for name, key in (("wrist", "lw"), ("pocket", "rp")):
        r_dev = tr[f"r_{key}"] @ setup.mount[name]  # device -> engine world
        a_world = np.zeros_like(imu[f"a_{key}"]) if still else imu[f"a_{key}"]
        a_dev = np.einsum("tji,tj->ti", r_dev, a_world)
        a_dev = a_dev + acc_noise * rng.standard_normal(a_dev.shape)
        h = tr[f"p_{key}"][:, 1] if heights is None else heights[name]
        p = height_to_pressure(h + setup.altitude, setup.baro(name))
        p = p + pressure_noise_hpa * rng.standard_normal(len(p))
        out[name] = (a_dev, yaw @ r_dev, p)
    return out


def _packets(streams: dict, t0_us: int, fps: float, seq0: dict[str, int]) -> list[tuple[int, bytes, int]]:
    """(device timestamp, payload, device) in send order."""
    out = []
    n = len(streams["wrist"][0])
    for i in range(n):
        ts = t0_us + int(round(i * 1e6 / fps))
        for name, dev in (("wrist", WRIST), ("pocket", POCKET)):
            a, r, p = streams[name]
            pkt = make_packet(dev, seq0[name] + i, ts, a[i], r[i], float(p[i]))
            out.append((ts, encode_packet(pkt), dev))
    for name in seq0:
        seq0[name] += n
    return out


def _deliver(packets: list[tuple[int, bytes, int]], link: LinkModel,
             rng: np.random.Generator) -> list[tuple[int, bytes]]:
    events = []
    for ts, payload, _ in packets:
        if rng.random() < link.drop:
            continue
        arrival = ts + link.latency_us + int(rng.integers(0, link.jitter_us + 1))
        if rng.random() < link.reorder:
            arrival += 40_000
        events.append((arrival, payload))
        if rng.random() < link.duplicate:
            events.append((arrival + int(rng.integers(1, 5_000)), payload))
    events.sort(key=lambda e: e[0])
    return events


def make_session(clip: MotionClip, skel: Skeleton, setup: DeviceSetup | None = None,
                 link: LinkModel | None = None, seed: int = 0, hold_s: float = 3.0,
                 pressure_noise_hpa: float = 0.004, acc_noise: float = 0.02,
                 same_height: float = 1.0) -> Session:
    """Synthesize a full recording for ``clip``.

    The clip should begin in a T-pose facing world -z; the engine assumes its
    first tracked frame is the calibration pose.
    """
    rng = np.random.default_rng(seed)
    setup = setup or DeviceSetup()
    link = link or LinkModel()
    clip = resample(clip, TARGET_FPS)
    hold = tpose_clip(skel, hold_s, heading=CALIBRATION_HEADING,
                      position=(clip.root[0, 0], clip.root[0, 2]))
    n_hold = len(hold)
    seq = {"wrist": 0, "pocket": 0}
    spans, packets = {}, []
    t = START_US
    level = {"wrist": np.full(n_hold, same_height), "pocket": np.full(n_hold, same_height)}
    for label, heights in (("same_height", level), ("t_pose", None)):
        streams = _device_streams(hold, skel, setup, rng, pressure_noise_hpa, acc_noise, heights, still=True)
        packets += _packets(streams, t, TARGET_FPS, seq)
        spans[label] = [t, t + int(round((n_hold - 1) * 1e6 / TARGET_FPS))]
        t += int(round(n_hold * 1e6 / TARGET_FPS)) + 500_000
    streams = _device_streams(clip, skel, setup, rng, pressure_noise_hpa, acc_noise)
    packets += _packets(streams, t, TARGET_FPS, seq)
    spans["tracking"] = [t, t + int(round((len(clip) - 1) * 1e6 / TARGET_FPS))]
    known_dh = tpose_gap(skel)
    header = {
        "devices": ["wrist", "pocket"],
        "start_time_us": START_US,
        "windows": spans,
        "known_dh": known_dh,
        "rate": TARGET_FPS,
        "subject": clip.subject,
    }
    events = _deliver(packets, link, rng)
    truth = make_frameset(clip, skel, noise_std=0.0)
    return Session(RecordFile(header, events), truth, setup, known_dh, len(packets))


def window_events(record: RecordFile, label: str) -> list[tuple[int, bytes]]:
    """Events whose device timestamp lies in the named header span."""
    from .protocol import decode_packet

    lo, hi = record.header["windows"][label]
    out = []
    for arrival, payload in record.events:
        try:
            ts = decode_packet(payload).timestamp_us
        except Exception:
            continue
        if lo <= ts <= hi:
            out.append((arrival, payload))
    return out


def calibration_windows(record: RecordFile, rate: float = TARGET_FPS) -> tuple[CalibSampleSet, CalibSampleSet]:
    """Aligned (wrist, pocket) pairs for the same-height and T-pose spans."""
    sets = []
    for label in ("same_height", "t_pose"):
        ing = Ingestor(rate)
        ticks = []
        for arrival, payload in window_events(record, label):
            ticks += ing.datagram(arrival, payload)
        ticks += ing.finish()
        # a held sample from a dropped packet would pair stale data; skip those ticks
        pairs = [(k.wrist, k.pocket) for k in ticks if abs(k.wrist.t - k.pocket.t) <= PAIR_TOLERANCE_S]
        sets.append(CalibSampleSet(label, pairs))
    return sets[0], sets[1]


def tracking_events(record: RecordFile) -> list[tuple[int, bytes]]:
    if "windows" in record.header and "tracking" in record.header["windows"]:
        return window_events(record, "tracking")
    return list(record.events)
