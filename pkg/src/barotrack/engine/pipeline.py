"""The compute stage and the replay / live session drivers."""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import replace
from pathlib import Path
from typing import Iterable, Iterator, TextIO

import numpy as np

from ..baro_fusion import GRAVITY, FilterParams, HeightFilter
from ..calibration import CALIBRATION_HEADING, CalibProfile, set_ground
from ..errors import BarotrackError
from ..features import RawFrame, build_pose_input, build_trans_input
from ..kinematics import NUM_JOINTS, Assembler, MotionState, Skeleton
from ..neural.nets import PoseNet, VelocityNet
from ..rotmath import decode_rot6d, encode_rot6d, rot_y
from .ingest import AlignedTick, BoundedQueue, Ingestor, receive_events
from .record import RecordFile, RecordWriter
from .session import tracking_events

log = logging.getLogger(__name__)

SETTLE_FRAMES = 10  # ticks of held T-pose used to fix the height reference


def tpose_theta(heading: float = CALIBRATION_HEADING) -> np.ndarray:
    theta = np.tile(np.eye(3), (NUM_JOINTS, 1, 1))
    theta[0] = rot_y(heading)
    return theta


class Engine:
    """Per-tick fusion: filters, features, both networks and translation assembly.

    Single owner; the recurrent states make it strictly sequential.
    """

    def __init__(self, profile: CalibProfile, pose_net: PoseNet, velocity_net: VelocityNet,
                 skel: Skeleton, params: FilterParams = FilterParams(), rate: float = 30.0,
                 settle_frames: int = SETTLE_FRAMES):
        self.profile = profile
        self.pose_net = pose_net
        self.velocity_net = velocity_net
        self.skel = skel
        self.dt = 1.0 / rate
        self.subtract_gravity = params.subtract_gravity
        fp = replace(params, subtract_gravity=False, nominal_dt=self.dt)
        self.filters = {
            "wrist": HeightFilter(profile.baro["wrist"], fp),
            "pocket": HeightFilter(profile.baro["pocket"], fp),
        }
        self.assembler = Assembler(skel, self.dt, settle_frames)
        self.settle_frames = max(1, int(settle_frames))
        self.ground: float | None = None
        self.prev: RawFrame | None = None
        self.frames = 0
        # the live session starts from the calibration T-pose
        self.pose_net.reset(encode_rot6d(np.tile(np.eye(3), (NUM_JOINTS, 1, 1))).reshape(-1))
        self.velocity_net.reset()

    def _device(self, name: str, frame, t: float) -> tuple[np.ndarray, np.ndarray, float]:
        r_dev = self.profile.world_yaw @ frame.orient
        acc = r_dev @ frame.acc
        if self.subtract_gravity and not frame.degraded:
            acc = acc - np.array([0.0, GRAVITY, 0.0])
        bone = r_dev @ self.profile.r_offset[name]
        # filters run on the engine clock so held samples still advance time
        h = self.filters[name].step(t, frame.pressure, acc[1]).h
        return acc, bone, h

    def process(self, tick: AlignedTick) -> MotionState:
        try:
            return self._process(tick)
        except BarotrackError as exc:
            raise type(exc)(f"frame {tick.index}: {exc}") from exc

    def _process(self, tick: AlignedTick) -> MotionState:
        a_lw, r_lw, h_lw = self._device("wrist", tick.wrist, tick.t)
        a_rp, r_rp, h_rp = self._device("pocket", tick.pocket, tick.t)
        if self.frames < self.settle_frames:
            # running mean over the still T-pose at the start of tracking
            g = set_ground(tpose_theta(), self.skel, pocket_height=h_rp)
            self.ground = g if self.ground is None else self.ground + (g - self.ground) / (self.frames + 1)
            self.profile.ground_height = self.ground
        raw = RawFrame(a_lw, a_rp, r_lw, r_rp, h_lw - self.ground, h_rp - self.ground, tick.t)
        prev = self.prev if self.prev is not None else raw
        x_pose = build_pose_input(raw, prev, self.dt).flatten()
        x_trans = build_trans_input(raw).flatten()
        theta_local = decode_rot6d(self.pose_net.step(x_pose).astype(float).reshape(NUM_JOINTS, 6))
        v_xz = self.velocity_net.step(x_trans).astype(float)
        state = self.assembler.step(theta_local, r_rp, v_xz, raw.h_rp, tick.t)
        state.extras = {"degraded": [bool(tick.wrist.degraded), bool(tick.pocket.degraded)],
                        "h_lw": raw.h_lw, "h_rp": raw.h_rp}
        self.prev = raw
        self.frames += 1
        return state


def motion_to_json(index: int, s: MotionState) -> str:
    rec = {
        "frame": index,
        "t": float(s.t),
        "t_xz": [float(s.t_xz[0]), float(s.t_xz[1])],
        "t_y": float(s.t_y),
        "theta": [float(x) for x in np.swapaxes(s.pose.theta, -1, -2).reshape(-1)],
        "degraded": s.extras.get("degraded", [False, False]),
    }
    return json.dumps(rec, separators=(",", ":"))


def run_ticks(engine: Engine, ticks: Iterable[AlignedTick], sink: TextIO | None = None,
              latencies: list | None = None) -> list[str]:
    lines = []
    for tick in ticks:
        t0 = time.perf_counter()
        state = engine.process(tick)
        if latencies is not None:
            latencies.append(time.perf_counter() - t0)
        line = motion_to_json(tick.index, state)
        lines.append(line)
        if sink is not None:
            sink.write(line + "\n")
    return lines


def replay(record: RecordFile, engine: Engine, sink: TextIO | None = None,
           start_us: int | None = None, ingestor: Ingestor | None = None) -> tuple[list[str], dict]:
    """Run a recording through ingestion and the engine; returns output lines and counters."""
    ing = ingestor or Ingestor(1.0 / engine.dt)
    if start_us is not None:
        events = [e for e in record.events if e[0] >= start_us]
    else:
        events = tracking_events(record)

    def ticks() -> Iterator[AlignedTick]:
        for arrival, payload in events:
            yield from ing.datagram(arrival, payload)
        yield from ing.finish()

    lines = run_ticks(engine, ticks(), sink)
    return lines, ing.counters()


def run_live(endpoint: str, engine: Engine, sink: TextIO, stop: threading.Event,
             record_path: str | Path | None = None, header: dict | None = None,
             queue_size: int = 64) -> dict:
    """Two-stage live session: a receive/reorder thread feeding a drop-oldest queue."""
    q = BoundedQueue(queue_size)
    ing = Ingestor(1.0 / engine.dt)
    writer = RecordWriter(record_path, header or {}) if record_path else None

    def ingest():
        try:
            for arrival, payload, conn in receive_events(endpoint, stop):
                if writer is not None:
                    writer.append(arrival, payload)
                ticks = (ing.datagram(arrival, payload) if conn is None
                         else ing.stream_bytes(arrival, payload, conn))
                for t in ticks:
                    q.put(t)
        finally:
            q.close()

    th = threading.Thread(target=ingest, name="ingest", daemon=True)
    th.start()
    while True:
        tick = q.get(timeout=0.5)
        if tick is None:
            if q.closed:
                break
            continue
        sink.write(motion_to_json(tick.index, engine.process(tick)) + "\n")
        sink.flush()
    th.join()
    if writer is not None:
        writer.close()
    counters = ing.counters()
    counters["queue_dropped"] = q.dropped
    return counters
