"""Acceptance criteria 1-10.

Each test prints one ``PASS``/``FAIL`` line; the summary is written to the
terminal when the module finishes. Criterion 7's training run defaults to a
reduced scale; set ``BAROTRACK_FULL_TRAINING=1`` for the 20-minute run at
512 hidden units.
"""

import contextlib
import io
import os
import statistics
import time

import numpy as np
import pytest

from barotrack.baro_fusion import BaroModel, KfState, fuse_stream, height_to_pressure, kf_predict, kf_update
from barotrack.calibration import (CALIBRATION_HEADING, calibrate, estimate_bias, estimate_scale,
                                   mean_height_gap)
from barotrack.engine import (DeviceSetup, Engine, LinkModel, calibration_windows, make_session,
                              replay, run_ticks)
from barotrack.engine.ingest import Ingestor
from barotrack.engine.protocol import SensorPacket, decode_packet, encode_packet
from barotrack.engine.session import tracking_events
from barotrack.features import build_pose_input
from barotrack.kinematics import Assembler, mean_skeleton, translations_of
from barotrack.neural import PoseNet, VelocityNet
from barotrack.neural.losses import velocity_loss
from barotrack.neural.train import TrainConfig, evaluate_pose, pose_windows, train
from barotrack.rotmath import decode_rot6d, encode_rot6d, exp_so3, log_so3, rot_y
from barotrack.synth import (leg_lift_clip, make_frameset, random_clip, squat_clip, stair_clip,
                             walk_clip)
from oracles import quat_to_matrix, quat_to_rotvec, random_quats
from test_calibration import N, _tpose_windows, window
from test_features import random_frame, rotate_frame
from test_protocol import FIXTURE

RESULTS: dict[int, str] = {}
DT = 1.0 / 30.0


@pytest.fixture(scope="module", autouse=True)
def summary(request):
    yield
    tr = request.config.pluginmanager.getplugin("terminalreporter")
    lines = [RESULTS.get(k, f"SKIP criterion {k}: not run") for k in range(1, 11)]
    if tr is not None:
        tr.write_line("")
        for line in lines:
            tr.write_line(line)
    else:
        print("\n".join(lines))


@contextlib.contextmanager
def criterion(n: int, what: str):
    try:
        yield
    except BaseException:
        RESULTS[n] = f"FAIL criterion {n}: {what}"
        print(RESULTS[n])
        raise
    RESULTS[n] = f"PASS criterion {n}: {what}"
    print(RESULTS[n])


@pytest.fixture(scope="module")
def skel():
    return mean_skeleton()


# 1 -------------------------------------------------------------------------

def test_c1_rotation_suite():
    with criterion(1, "log/exp and 6D round-trips on 1e4 rotations vs quaternion oracle, < 1e-6, < 5 s"):
        t0 = time.perf_counter()
        rng = np.random.default_rng(101)
        q = random_quats(10_000, rng)
        r_oracle = np.array([quat_to_matrix(x) for x in q])
        v_oracle = np.array([quat_to_rotvec(x) for x in q])
        r = exp_so3(v_oracle)
        v = log_so3(r_oracle)
        r6 = decode_rot6d(encode_rot6d(r_oracle))
        elapsed = time.perf_counter() - t0
        assert np.abs(r - r_oracle).max() < 1e-6
        assert np.abs(exp_so3(v) - r_oracle).max() < 1e-6
        # rotation vectors near pi may flip sign; compare where the axis is unambiguous
        safe = np.linalg.norm(v_oracle, axis=-1) < np.pi - 1e-3
        assert np.abs(v[safe] - v_oracle[safe]).max() < 1e-6
        assert np.abs(r6 - r_oracle).max() < 1e-6
        assert elapsed < 5.0


# 2 -------------------------------------------------------------------------

def test_c2_yaw_invariance():
    with criterion(2, "pose input invariant under 100 random world yaws, < 1e-6"):
        rng = np.random.default_rng(202)
        worst = 0.0
        for _ in range(100):
            prev, curr = random_frame(rng, 0.0), random_frame(rng, DT)
            q = rot_y(rng.uniform(-np.pi, np.pi))
            a = build_pose_input(curr, prev).flatten()
            b = build_pose_input(rotate_frame(curr, q), rotate_frame(prev, q)).flatten()
            worst = max(worst, np.abs(a - b).max())
        assert worst < 1e-6


# 3 -------------------------------------------------------------------------

def test_c3_kalman():
    with criterion(3, "constant truth within 0.01 m after 300 steps; >= 30% variance reduction; P PSD"):
        s = KfState.initial(0.0)
        for _ in range(300):
            s = kf_predict(s, 0.0, DT)
            assert np.all(np.linalg.eigvalsh(s.P) >= -1e-12)
            s, out = kf_update(s, 1.0)
            assert np.all(np.linalg.eigvalsh(s.P) >= -1e-12)
        assert abs(out.h - 1.0) < 0.01
        rng = np.random.default_rng(303)
        m = BaroModel()
        n = 300
        t = np.arange(n) * DT
        for _ in range(5):
            z = 1.2 + 0.05 * rng.standard_normal(n)
            out = np.array([o.h for o in fuse_stream(zip(t, height_to_pressure(z, m), np.zeros(n)), m)])
            assert np.var(out[30:]) <= 0.7 * np.var(z[30:])


# 4 -------------------------------------------------------------------------

def test_c4_calibration_closure(skel):
    with criterion(4, "bias within 0.02 m, scale within 5%, T-pose window gives 0.66 m within 1e-6"):
        rng = np.random.default_rng(404)
        m = BaroModel()
        for _ in range(50):
            b = rng.uniform(-2, 2)
            h = 1.0 + 0.05 * rng.standard_normal((2, N))
            est = estimate_bias(window("same_height", height_to_pressure(h[0] - b, m),
                                       height_to_pressure(h[1], m))).wrist_bias
            assert abs(est - b) < 0.02
        for _ in range(30):
            s_true = rng.uniform(7.8, 9.0)
            ms = BaroModel(s_true, 0.0, 1005.0)
            h_p = 0.5 + 0.05 * rng.standard_normal(N)
            h_w = 1.16 + 0.05 * rng.standard_normal(N)
            est = estimate_scale(window("t_pose", height_to_pressure(h_w, ms), height_to_pressure(h_p, ms)))
            assert abs(est / s_true - 1) < 0.05
        same, tp = _tpose_windows(skel, np.eye(3), np.eye(3), 0.3)
        prof = calibrate(same, tp, skel, known_dh=0.66)
        assert abs(mean_height_gap(tp, prof) - 0.66) < 1e-6


# 5 -------------------------------------------------------------------------

def _translate(fs, skel, heights, settle=1):
    asm = Assembler(skel, 1.0 / fs.fps, settle)
    local = fs.local_poses()
    return translations_of([asm.step(local[i], fs.r_rp[i], fs.v_xz[i], heights[i], i / fs.fps)
                            for i in range(len(fs))])


def test_c5_vertical_cancellation(skel):
    with criterion(5, "leg lift |t_y| < 1e-6; stairs within 10%; noisy heights RMSE < 0.08 m"):
        fs = make_frameset(leg_lift_clip(skel), skel, noise_std=0.0)
        assert np.abs(_translate(fs, skel, fs.h_rp)[:, 1]).max() < 1e-6
        fs = make_frameset(stair_clip(skel), skel, noise_std=0.0)
        rise = fs.root[-1, 1] - fs.root[0, 1]
        assert abs(_translate(fs, skel, fs.h_rp)[-1, 1] - rise) < 0.1 * rise
        # noisy barometer heights, fused with the true vertical acceleration
        truth = fs.root[:, 1] - fs.root[0, 1]
        m = BaroModel()
        t = np.arange(len(fs)) / fs.fps
        worst = 0.0
        for seed in range(10):
            noisy = make_frameset(stair_clip(skel), skel, noise_std=0.05, seed=seed)
            frames = zip(t, height_to_pressure(noisy.h_rp, m), noisy.a_rp[:, 1])
            fused = np.array([o.h for o in fuse_stream(frames, m)])
            ty = _translate(noisy, skel, fused, settle=10)[:, 1]
            worst = max(worst, float(np.sqrt(np.mean((ty - truth) ** 2))))
        print(f"  worst noisy t_y RMSE over 10 seeds: {worst:.4f} m")
        assert worst < 0.08


# 6 -------------------------------------------------------------------------

def test_c6_gradient_checks():
    import test_neural as tn

    with criterion(6, "analytic vs central differences on dense/recurrent/init-encoder nets and losses, < 1e-4"):
        tn.test_dense_stack_gradients(np.random.default_rng(601))
        tn.test_lstm_stack_gradients(np.random.default_rng(602))
        tn.test_pose_net_gradients_including_init_encoder(np.random.default_rng(603))
        tn.test_velocity_net_gradients(np.random.default_rng(604))
        tn.test_loss_gradients(np.random.default_rng(605))


# 7 -------------------------------------------------------------------------

FULL = os.environ.get("BAROTRACK_FULL_TRAINING") == "1"


def test_c7_desk_scale_learning(skel):
    hidden, budget = (512, 1200.0) if FULL else (128, 60.0)
    what = (f"overfit 4 windows < 1% in <= 200 steps; {budget / 60:.0f}-min run at hidden {hidden} "
            "cuts held-out SIP >= 30%")
    with criterion(7, what):
        sets = [make_frameset(c(skel, seconds=5.0), skel, seed=i)
                for i, c in enumerate([walk_clip, squat_clip, stair_clip, leg_lift_clip])]
        net = PoseNet(hidden=64, seed=0)
        _, res = train(net, pose_windows(sets, 150), TrainConfig(batch=4, epochs=200, seed=0))
        assert res.steps <= 200 and res.step_losses[-1] < 0.01 * res.step_losses[0]

        rng = np.random.default_rng(0)
        train_sets = [make_frameset(random_clip(skel, rng, seconds=10), skel, seed=i) for i in range(24)]
        rng = np.random.default_rng(99)
        held_out = [make_frameset(random_clip(skel, rng, seconds=10), skel, seed=1000 + i) for i in range(6)]
        net = PoseNet(hidden=hidden, seed=0)
        before = evaluate_pose(net, held_out, skel)
        _, res = train(net, pose_windows(train_sets, 150, overlap=True),
                       TrainConfig(lr=1e-3, batch=8, epochs=10**6, time_budget=budget, seed=0))
        after = evaluate_pose(net, held_out, skel)
        print(f"  held-out SIP {before:.2f} -> {after:.2f} deg after {res.steps} steps "
              f"({(before - after) / before:.1%} better)")
        assert after <= 0.7 * before


# 8 -------------------------------------------------------------------------

def test_c8_velocity_loss_property():
    with criterion(8, "velocity loss permutation-invariant and zero iff sums match, to 1e-12"):
        rng = np.random.default_rng(808)
        for _ in range(200):
            n = int(rng.integers(1, 60))
            p, g = rng.standard_normal((n, 2)), rng.standard_normal((n, 2))
            base = velocity_loss(p, g)
            assert abs(velocity_loss(p[rng.permutation(n)], g) - base) <= 1e-12 * max(1.0, base)
            q = g[rng.permutation(n)]
            assert velocity_loss(q, g) <= 1e-12
            assert velocity_loss(p, g) > 0.0 or np.allclose(p.sum(0), g.sum(0))


# 9 -------------------------------------------------------------------------

def _engine(sess, skel, hidden=16):
    sh, tp = calibration_windows(sess.record)
    prof = calibrate(sh, tp, skel, known_dh=sess.known_dh)
    return Engine(prof, PoseNet(hidden=hidden, seed=1), VelocityNet(hidden=hidden, seed=2), skel)


def test_c9_protocol_and_replay(skel):
    with criterion(9, "byte-exact packets; bitwise replay; 10% drop completes without stall"):
        assert encode_packet(decode_packet(FIXTURE)) == FIXTURE
        rng = np.random.default_rng(909)
        for _ in range(500):
            q = rng.standard_normal(4).astype(np.float32)
            q = q / np.linalg.norm(q)
            pkt = SensorPacket(int(rng.integers(2)), int(rng.integers(2**32)), int(rng.integers(2**63)),
                               tuple(float(v) for v in rng.standard_normal(3).astype(np.float32)),
                               tuple(float(v) for v in q.astype(np.float32)),
                               float(np.float32(rng.uniform(900, 1100))))
            raw = encode_packet(pkt)
            assert len(raw) == 48 and encode_packet(decode_packet(raw)) == raw

        sess = make_session(stair_clip(skel, heading=CALIBRATION_HEADING), skel,
                            DeviceSetup.random(np.random.default_rng(5)), LinkModel(reorder=0.05), seed=2)
        outs = []
        for _ in range(2):
            sink = io.StringIO()
            replay(sess.record, _engine(sess, skel), sink)
            outs.append(sink.getvalue())
        assert outs[0] == outs[1] and len(outs[0].splitlines()) == len(sess.truth)

        lossy = make_session(stair_clip(skel, heading=CALIBRATION_HEADING), skel, DeviceSetup(),
                             LinkModel(drop=0.1), seed=7)
        ing = Ingestor()
        emitted_live, last_t, max_lag = 0, None, 0.0
        for arrival, payload in tracking_events(lossy.record):
            ticks = ing.datagram(arrival, payload)
            emitted_live += len(ticks)
            if ticks:
                last_t = ticks[-1].t
            if last_t is not None:
                max_lag = max(max_lag, arrival * 1e-6 - last_t)
        tail = ing.finish()
        c = ing.counters()
        total = emitted_live + len(tail)
        print(f"  10% drop: {c['wrist']['missing']}+{c['pocket']['missing']} missing, "
              f"{emitted_live} ticks live, {len(tail)} at flush, max lag {max_lag * 1e3:.0f} ms")
        assert abs(total - len(lossy.truth)) <= 2
        # consecutive drops add a frame each on top of the 100 ms reorder wait;
        # a stall would let the lag grow past the 0.5 s starvation threshold
        assert max_lag < 0.5
        assert c["wrist"]["missing"] > 0 and c["pocket"]["missing"] > 0


# 10 ------------------------------------------------------------------------

def test_c10_latency(skel):
    with criterion(10, "median per-frame compute <= 10 ms at 512 hidden"):
        sess = make_session(walk_clip(skel, seconds=8, heading=CALIBRATION_HEADING), skel, seed=1)
        engine = _engine(sess, skel, hidden=512)
        ing = Ingestor()
        ticks = []
        for arrival, payload in tracking_events(sess.record):
            ticks += ing.datagram(arrival, payload)
        ticks += ing.finish()
        lat = []
        run_ticks(engine, ticks, None, lat)
        med = statistics.median(lat[10:]) * 1e3
        print(f"  median {med:.2f} ms over {len(lat) - 10} frames")
        assert med <= 10.0
