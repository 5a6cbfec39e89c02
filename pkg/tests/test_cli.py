import json
import subprocess
import sys

import numpy as np
import pytest

from barotrack.cli import main, read_motion_log
from barotrack.synth import read_dataset


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def _write_truth_log(path, truth):
    with open(path, "w") as fh:
        for i in range(len(truth)):
            t = truth.root[i] - truth.root[0]
            rec = {"frame": i, "t": i / truth.fps, "t_xz": [t[0], t[2]], "t_y": t[1],
                   "theta": np.swapaxes(truth.poses[i], -1, -2).reshape(-1).tolist(),
                   "degraded": [False, False]}
            fh.write(json.dumps(rec) + "\n")


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


def test_eval_perfect_prediction_is_zero(capsys, tmp_path):
    code, out, _ = run(capsys, "synth", "--out", tmp_path / "d.bin", "--kind", "walk",
                       "--clips", 1, "--seconds", 4, "--noise", 0)
    assert code == 0
    truth = read_dataset(tmp_path / "d.bin")[0]
    _write_truth_log(tmp_path / "pred.jsonl", truth)
    theta, trans = read_motion_log(tmp_path / "pred.jsonl")
    assert np.array_equal(theta, truth.poses)
    code, out, _ = run(capsys, "eval", "--pred", tmp_path / "pred.jsonl", "--truth", tmp_path / "d.bin",
                       "--out", tmp_path / "rep")
    assert code == 0
    s = json.loads(out)
    assert s["sip_deg"] < 1e-4 and s["ang_deg"] < 1e-4 and s["pos_cm"] < 1e-9
    assert all(v < 1e-9 for v in s["translation_error_m"].values())
    assert (tmp_path / "rep.tsv").is_file() and (tmp_path / "rep.json").is_file()


def test_usage_and_config_errors(capsys, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 2
    capsys.readouterr()
    code, _, err = run(capsys, "replay", "--config", tmp_path / "none.ini", "--record", tmp_path / "x")
    assert code == 2 and err.startswith("error=")
    (tmp_path / "c.ini").write_text("[session]\ncalibration = nope.txt\n")
    code, _, err = run(capsys, "replay", "--config", tmp_path / "c.ini", "--record", tmp_path / "x")
    assert code == 2
    code, _, err = run(capsys, "eval", "--pred", tmp_path / "missing.jsonl", "--truth", tmp_path / "m",
                       "--out", tmp_path / "r")
    assert code == 1 and err.startswith("error=io")


def test_session_calibrate_train_replay_eval(capsys, workdir):
    w = workdir
    code, out, _ = run(capsys, "synth", "--session", "--kind", "stairs", "--seconds", 5, "--random-setup",
                       "--drop", 0.05, "--out", w / "s.rec", "--truth", w / "truth.bin", "--seed", 3)
    assert code == 0
    known_dh = json.loads(out)["known_dh"]
    code, out, _ = run(capsys, "calibrate", "--record", w / "s.rec", "--out", w / "calib.txt")
    assert code == 0
    assert json.loads(out)["tpose_gap"] == pytest.approx(known_dh, abs=1e-6)
    assert run(capsys, "synth", "--out", w / "train.bin", "--clips", 2, "--seconds", 5)[0] == 0
    for model in ("pose", "velocity"):
        code, out, _ = run(capsys, "train", "--data", w / "train.bin", "--model", model, "--hidden", 16,
                           "--batch", 2, "--epochs", 2, "--checkpoint", w / f"{model}.ckpt")
        assert code == 0 and json.loads(out)["steps"] == 2
    (w / "session.ini").write_text(
        "[session]\ncalibration = calib.txt\npose_checkpoint = pose.ckpt\n"
        "velocity_checkpoint = velocity.ckpt\noutput = motion.jsonl\n")
    code, _, err = run(capsys, "replay", "--config", w / "session.ini", "--record", w / "s.rec")
    assert code == 0
    counters = json.loads(err.strip().splitlines()[-1])
    assert counters["frames"] == len(read_dataset(w / "truth.bin")[0])
    first = (w / "motion.jsonl").read_bytes()
    run(capsys, "replay", "--config", w / "session.ini", "--record", w / "s.rec", "--out", w / "again.jsonl")
    assert (w / "again.jsonl").read_bytes() == first
    code, out, _ = run(capsys, "eval", "--pred", w / "motion.jsonl", "--truth", w / "truth.bin",
                       "--out", w / "report")
    assert code == 0 and json.loads(out)["mesh_cm"] == "n/a"


def test_console_script_exit_code(tmp_path):
    r = subprocess.run([sys.executable, "-m", "barotrack.cli", "replay", "--config", str(tmp_path / "n.ini"),
                        "--record", "x"], capture_output=True, text=True)
    assert r.returncode == 2 and "error=" in r.stderr
