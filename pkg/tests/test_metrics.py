import json

import numpy as np
import pytest

from barotrack.metrics import (angular_error, cumulative_translation_error, pose_report,
                               positional_error, sip_error, write_report)
from barotrack.rotmath import exp_so3, random_rotations, rot_y


def _random_theta(rng, t=6):
    return random_rotations(t * 24, rng).reshape(t, 24, 3, 3)


def test_identical_poses_have_zero_error(skel, rng):
    theta = _random_theta(rng)
    rep = pose_report(theta, theta, skel)
    assert np.all(rep.sip_deg < 1e-5) and np.all(rep.ang_deg < 1e-5) and np.all(rep.pos_cm < 1e-9)
    assert rep.means()["mesh_cm"] == "n/a"


def test_angular_error_single_joint(rng):
    g = random_rotations(24, rng)
    p = g.copy()
    p[1] = p[1] @ rot_y(np.radians(40.0))
    assert sip_error(p, g) == pytest.approx(10.0, abs=1e-6)
    assert angular_error(p, g) == pytest.approx(40.0 / 24, abs=1e-6)


def test_positional_error_knee_bend(skel):
    theta = np.tile(np.eye(3), (24, 1, 1))
    pred = theta.copy()
    r = exp_so3(np.array([np.pi / 2, 0.0, 0.0]))
    pred[4] = r  # left knee; ankle (7) and foot (10) follow
    assert skel.parents[7] == 4 and skel.parents[10] == 7
    o7, o10 = skel.offsets[7], skel.offsets[10]
    d = np.linalg.norm((r - np.eye(3)) @ o7) + np.linalg.norm((r - np.eye(3)) @ (o7 + o10))
    assert positional_error(pred, theta, skel) == pytest.approx(100.0 * d / 23, rel=1e-12)


def test_positional_error_ignores_root_translation(skel, rng):
    p, g = _random_theta(rng), _random_theta(rng)
    base = positional_error(p, g, skel)
    shifted = positional_error(p, g, skel, pred_root=rng.standard_normal((6, 3)), gt_root=np.zeros((6, 3)))
    assert np.array_equal(base, shifted)


def test_translation_curve_scale_error():
    gt = np.zeros((51, 3))
    gt[:, 0] = np.linspace(0.0, 5.0, 51)
    pred = 1.1 * gt + np.array([3.0, 1.0, -2.0])  # offsets vanish by re-anchoring
    c = cumulative_translation_error(pred, gt, bin_size=1.0)
    assert np.allclose(c.distances, np.arange(6.0))
    assert np.allclose(c.errors, 0.1 * c.distances, atol=1e-12)
    # windows starting every frame reach distance d when at least d metres remain
    assert c.counts.tolist() == [51, 41, 31, 21, 11, 1]


def test_translation_curve_interpolates_between_frames():
    gt = np.array([[0.0, 0, 0], [0.6, 0, 0], [1.2, 0, 0]])
    pred = np.array([[0.0, 0, 0], [0.6, 0.3, 0], [1.2, 0.6, 0]])
    c = cumulative_translation_error(pred, gt, bin_size=1.0, window_stride=5)
    # at 1 m the lateral drift is 0.5 m (linear between 0.3 and 0.6)
    assert c.errors[1] == pytest.approx(0.5)


def test_perfect_translation_zero_curve(rng):
    gt = np.cumsum(rng.standard_normal((80, 3)) * 0.1, axis=0)
    c = cumulative_translation_error(gt, gt)
    assert np.all(c.errors == 0.0)


def test_write_report(tmp_path, skel, rng):
    theta = _random_theta(rng)
    rep = pose_report(theta, theta, skel)
    gt = np.zeros((11, 3))
    gt[:, 2] = np.linspace(0, 2, 11)
    tsv, js = write_report(tmp_path / "r", rep, cumulative_translation_error(gt, gt))
    lines = tsv.read_text().splitlines()
    assert lines[0].split("\t") == ["frame", "sip_deg", "ang_deg", "pos_cm", "mesh_cm"]
    assert len(lines) == 7 and lines[1].endswith("n/a")
    summary = json.loads(js.read_text())
    assert summary["pose"]["mesh_cm"] == "n/a"
    assert summary["translation"]["distance_m"] == [0.0, 1.0, 2.0]
