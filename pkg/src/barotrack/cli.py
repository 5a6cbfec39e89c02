"""Command-line entry point.

Subcommands: synth, train, calibrate, record, replay, run, eval. Failures
print one line ``error=<code> <message>`` to stderr; configuration problems
and usage errors exit 2, other failures exit 1.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import signal
import sys
import threading
import time
from pathlib import Path

import numpy as np

from .calibration import CALIBRATION_HEADING, CalibProfile, calibrate, mean_height_gap
from .errors import BarotrackError, ConfigError
from .kinematics import Skeleton, mean_skeleton
from .metrics import cumulative_translation_error, pose_report, write_report
from .neural import checkpoint
from .neural.nets import PoseNet, VelocityNet
from .neural.train import TrainConfig, pose_windows, train, velocity_windows
from .synth import PROCEDURAL, make_frameset, random_clip, read_dataset, write_dataset

log = logging.getLogger("barotrack")

EXIT_FAILURE = 1
EXIT_USAGE = 2


def _skeleton(cfg) -> Skeleton:
    if cfg is not None and cfg.skeleton is not None:
        return Skeleton.from_file(cfg.skeleton, cfg.thigh_fraction)
    return mean_skeleton(cfg.thigh_fraction if cfg is not None else 0.5)


def _config(args, require_files: bool):
    from .engine.config import SessionConfig

    if args.config is None:
        return None
    return SessionConfig.load(args.config, require_files=require_files)


def _build_engine(cfg, pose_ckpt=None, velocity_ckpt=None):
    from .engine.pipeline import Engine

    profile = CalibProfile.load(cfg.calibration)
    pose = checkpoint.load(pose_ckpt or cfg.pose_checkpoint)
    vel = checkpoint.load(velocity_ckpt or cfg.velocity_checkpoint)
    if pose.kind != "pose" or vel.kind != "velocity":
        raise ConfigError("checkpoint kinds do not match their [session] keys")
    return Engine(profile, pose, vel, _skeleton(cfg), cfg.filter, cfg.rate)


@contextlib.contextmanager
def _sink(path):
    if path is None or str(path) == "-":
        yield sys.stdout
    else:
        with open(path, "w") as fh:
            yield fh


# ---------------------------------------------------------------- subcommands

def cmd_synth(args) -> int:
    skel = mean_skeleton()
    rng = np.random.default_rng(args.seed)
    if args.session:
        from .engine.session import DeviceSetup, LinkModel, make_session

        kind = args.kind or "walk"
        clip = PROCEDURAL[kind](skel, seconds=args.seconds, heading=CALIBRATION_HEADING)
        setup = DeviceSetup.random(rng) if args.random_setup else DeviceSetup()
        link = LinkModel(drop=args.drop, duplicate=args.duplicate, reorder=args.reorder)
        sess = make_session(clip, skel, setup, link, seed=args.seed)
        sess.record.write(args.out)
        if args.truth:
            write_dataset(args.truth, [sess.truth])
        print(json.dumps({"out": str(args.out), "events": len(sess.record.events),
                          "frames": len(sess.truth), "known_dh": sess.known_dh}))
        return 0
    sets = []
    for i in range(args.clips):
        clip = random_clip(skel, rng, args.kind, seconds=args.seconds)
        sets.append(make_frameset(clip, skel, noise_std=args.noise, seed=args.seed * 100003 + i))
    write_dataset(args.out, sets)
    print(json.dumps({"out": str(args.out), "clips": len(sets), "frames": int(sum(len(s) for s in sets))}))
    return 0


def cmd_train(args) -> int:
    sets = read_dataset(args.data)
    cfg = TrainConfig(lr=args.lr, batch=args.batch, epochs=args.epochs, seq_len=args.seq_len,
                      seed=args.seed, max_steps=args.max_steps, time_budget=args.time_budget)
    if args.model == "pose":
        net = PoseNet(args.hidden, args.layers, seed=args.seed)
        data = pose_windows(sets, args.seq_len)
    else:
        net = VelocityNet(args.hidden, args.layers, seed=args.seed)
        data = velocity_windows(sets, args.seq_len)
    if len(data[0]) == 0:
        raise ConfigError(f"dataset has no windows of {args.seq_len} frames")
    _, result = train(net, data, cfg)
    checkpoint.save(args.checkpoint, net)
    print(json.dumps({"checkpoint": str(args.checkpoint), "steps": result.steps,
                      "first_loss": result.step_losses[0], "last_loss": result.step_losses[-1]}))
    return 0


def cmd_calibrate(args) -> int:
    from .engine.record import RecordFile
    from .engine.session import calibration_windows

    cfg = _config(args, require_files=False)
    rec = RecordFile.read(args.record)
    if "windows" not in rec.header:
        raise ConfigError("recording header has no calibration windows")
    known_dh = args.known_dh
    if known_dh is None:
        known_dh = rec.header.get("known_dh", cfg.known_dh if cfg else None)
    if known_dh is None:
        known_dh = 0.66
    rate = cfg.rate if cfg else rec.header.get("rate", 30.0)
    same, tpose = calibration_windows(rec, rate)
    profile = calibrate(same, tpose, _skeleton(cfg), known_dh=known_dh)
    out = args.out or (cfg.calibration if cfg and cfg.calibration else None)
    if out is None:
        raise ConfigError("no output path: pass --out or set [session] calibration")
    profile.save(out)
    print(json.dumps({"out": str(out), "scale": profile.baro["pocket"].scale,
                      "wrist_bias": profile.baro["wrist"].bias,
                      "tpose_gap": mean_height_gap(tpose, profile)}))
    return 0


def cmd_replay(args) -> int:
    from .engine.ingest import Ingestor
    from .engine.pipeline import replay
    from .engine.record import RecordFile

    cfg = _config(args, require_files=True)
    if cfg is None:
        raise ConfigError("replay needs --config")
    engine = _build_engine(cfg, args.checkpoint, args.velocity_checkpoint)
    rec = RecordFile.read(args.record)
    out = args.out if args.out is not None else cfg.output
    with _sink(out) as fh:
        lines, counters = replay(rec, engine, fh, ingestor=Ingestor(cfg.rate))
    counters["frames"] = len(lines)
    counters["truncated_tail"] = rec.truncated_tail
    print(json.dumps(counters, sort_keys=True), file=sys.stderr)
    return 0


def _stop_event(duration: float | None) -> threading.Event:
    stop = threading.Event()
    if duration is not None:
        threading.Timer(duration, stop.set).start()
    with contextlib.suppress(ValueError):
        signal.signal(signal.SIGINT, lambda *_: stop.set())
        signal.signal(signal.SIGTERM, lambda *_: stop.set())
    return stop


def cmd_run(args) -> int:
    from .engine.pipeline import run_live

    cfg = _config(args, require_files=True)
    if cfg is None:
        raise ConfigError("run needs --config")
    engine = _build_engine(cfg, args.checkpoint, args.velocity_checkpoint)
    stop = _stop_event(args.duration)
    header = {"devices": ["wrist", "pocket"], "start_time_us": time.time_ns() // 1000,
              "calibration": Path(cfg.calibration).read_text(), "rate": cfg.rate}
    out = args.out if args.out is not None else cfg.output
    with _sink(out) as fh:
        counters = run_live(cfg.listen, engine, fh, stop, args.record, header, cfg.queue_size)
    print(json.dumps(counters, sort_keys=True), file=sys.stderr)
    return 0


def cmd_record(args) -> int:
    from .engine.ingest import receive_events
    from .engine.record import RecordWriter

    cfg = _config(args, require_files=False)
    listen = args.listen or (cfg.listen if cfg else None)
    if listen is None:
        raise ConfigError("record needs --listen or a config with [session] listen")
    stop = _stop_event(args.duration)
    header = {"devices": ["wrist", "pocket"], "start_time_us": time.time_ns() // 1000}
    if args.windows:
        header["windows"] = json.loads(args.windows)
    n = 0
    with RecordWriter(args.out, header) as w:
        for arrival, payload, _ in receive_events(listen, stop):
            w.append(arrival, payload)
            n += 1
    print(json.dumps({"out": str(args.out), "events": n}))
    return 0


def read_motion_log(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """World poses ``(T, 24, 3, 3)`` and translations ``(T, 3)`` from a JSONL output log."""
    thetas, trans = [], []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            thetas.append(np.swapaxes(np.array(rec["theta"], dtype=float).reshape(-1, 3, 3), -1, -2))
            trans.append([rec["t_xz"][0], rec["t_y"], rec["t_xz"][1]])
    if not thetas:
        raise ConfigError(f"no frames in {path}")
    return np.array(thetas), np.array(trans)


def cmd_eval(args) -> int:
    skel = _skeleton(_config(args, require_files=False))
    pred_theta, pred_trans = read_motion_log(args.pred)
    truth = read_dataset(args.truth)[0]
    n = min(len(pred_theta), len(truth))
    report = pose_report(pred_theta[:n], truth.poses[:n], skel)
    gt_trans = truth.root[:n] - truth.root[0]
    curve = cumulative_translation_error(pred_trans[:n], gt_trans, args.bin, args.stride)
    write_report(args.out, report, curve)
    summary = report.means()
    summary["frames"] = n
    summary["translation_error_m"] = dict(zip(map(float, curve.distances), map(float, curve.errors)))
    print(json.dumps(summary, sort_keys=True))
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="session config file (INI)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="barotrack", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a training dataset or a device session")
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--kind", choices=sorted(PROCEDURAL))
    s.add_argument("--clips", type=int, default=16)
    s.add_argument("--seconds", type=float, default=6.0)
    s.add_argument("--noise", type=float, default=0.05, help="height noise std (m)")
    s.add_argument("--session", action="store_true", help="write a packet recording instead of a dataset")
    s.add_argument("--truth", type=Path, help="with --session: write the ground truth dataset here")
    s.add_argument("--random-setup", action="store_true", help="random mounts, heading and barometer truth")
    s.add_argument("--drop", type=float, default=0.0)
    s.add_argument("--duplicate", type=float, default=0.0)
    s.add_argument("--reorder", type=float, default=0.0)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", parents=[common], help="train a pose or velocity network")
    t.add_argument("--data", type=Path, required=True)
    t.add_argument("--model", choices=["pose", "velocity"], required=True)
    t.add_argument("--checkpoint", type=Path, required=True, help="output checkpoint path")
    t.add_argument("--hidden", type=int, default=512)
    t.add_argument("--layers", type=int, default=2)
    t.add_argument("--epochs", type=int, default=100)
    t.add_argument("--batch", type=int, default=256)
    t.add_argument("--lr", type=float, default=3e-4)
    t.add_argument("--seq-len", type=int, default=150)
    t.add_argument("--max-steps", type=int)
    t.add_argument("--time-budget", type=float, help="seconds")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("calibrate", parents=[common], help="calibrate from a recording's windows")
    c.add_argument("--record", type=Path, required=True)
    c.add_argument("--out", type=Path)
    c.add_argument("--known-dh", type=float, help="T-pose wrist height above the pocket (m)")
    c.set_defaults(func=cmd_calibrate)

    for name, func, helptext in (("replay", cmd_replay, "run a recording through the engine"),
                                 ("run", cmd_run, "track a live device session")):
        r = sub.add_parser(name, parents=[common], help=helptext)
        r.add_argument("--checkpoint", type=Path, help="pose checkpoint (overrides config)")
        r.add_argument("--velocity-checkpoint", type=Path)
        r.add_argument("--out", help="output JSONL path, '-' for stdout")
        if name == "replay":
            r.add_argument("--record", type=Path, required=True)
        else:
            r.add_argument("--record", type=Path, help="also save received packets here")
            r.add_argument("--duration", type=float, help="stop after this many seconds")
        r.set_defaults(func=func)

    rc = sub.add_parser("record", parents=[common], help="save received packets without tracking")
    rc.add_argument("--listen")
    rc.add_argument("--out", type=Path, required=True)
    rc.add_argument("--duration", type=float)
    rc.add_argument("--windows", help='JSON spans, e.g. {"same_height": [t0, t1], "t_pose": [t0, t1]}')
    rc.set_defaults(func=cmd_record)

    e = sub.add_parser("eval", parents=[common], help="pose and translation error report")
    e.add_argument("--pred", type=Path, required=True, help="JSONL motion log")
    e.add_argument("--truth", type=Path, required=True, help="ground truth dataset")
    e.add_argument("--out", type=Path, required=True, help="report path prefix")
    e.add_argument("--bin", type=float, default=1.0)
    e.add_argument("--stride", type=int, default=1)
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error={exc.code} {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BarotrackError as exc:
        print(f"error={exc.code} {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (OSError, ValueError) as exc:
        code = "io" if isinstance(exc, OSError) else "invalid"
        print(f"error={code} {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
