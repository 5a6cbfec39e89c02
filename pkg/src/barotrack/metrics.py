"""Pose and translation error metrics, and the report writers.

Mesh-vertex error needs a body-model asset that is not shipped; reports carry
it as ``n/a``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kinematics import SIP_JOINTS, Skeleton, fk
from .rotmath import angle_of

ALL_JOINTS = tuple(range(24))


def angular_error(pred_glob: np.ndarray, gt_glob: np.ndarray, joints=ALL_JOINTS) -> np.ndarray | float:
    """Mean geodesic angle in degrees between global joint rotations.

    Inputs are ``(..., 24, 3, 3)``; the mean is over ``joints``.
    """
    j = list(joints)
    rel = np.swapaxes(gt_glob[..., j, :, :], -1, -2) @ pred_glob[..., j, :, :]
    err = np.degrees(angle_of(rel)).mean(axis=-1)
    return float(err) if np.ndim(err) == 0 else err


def sip_error(pred_glob, gt_glob):
    return angular_error(pred_glob, gt_glob, SIP_JOINTS)


def positional_error(pred_theta: np.ndarray, gt_theta: np.ndarray, skel: Skeleton,
                     pred_root=None, gt_root=None) -> np.ndarray | float:
    """Mean joint distance in centimetres after aligning the pelvis.

    Averages over the non-root joints (the pelvis error is zero by alignment).
    Root translations, if given, are removed by the alignment.
    """
    _, pj = fk(pred_theta, skel)
    _, gj = fk(gt_theta, skel)
    pj = pj - pj[..., :1, :]
    gj = gj - gj[..., :1, :]
    err = np.linalg.norm(pj[..., 1:, :] - gj[..., 1:, :], axis=-1).mean(axis=-1) * 100.0
    return float(err) if np.ndim(err) == 0 else err


@dataclass
class PoseErrorReport:
    sip_deg: np.ndarray
    ang_deg: np.ndarray
    pos_cm: np.ndarray
    mesh_cm: str = "n/a"

    def means(self) -> dict:
        return {
            "sip_deg": float(np.mean(self.sip_deg)),
            "ang_deg": float(np.mean(self.ang_deg)),
            "pos_cm": float(np.mean(self.pos_cm)),
            "mesh_cm": self.mesh_cm,
        }


def pose_report(pred_theta: np.ndarray, gt_theta: np.ndarray, skel: Skeleton) -> PoseErrorReport:
    """Per-frame errors of world poses ``(T, 24, 3, 3)``."""
    pg, _ = fk(pred_theta, skel)
    gg, _ = fk(gt_theta, skel)
    return PoseErrorReport(
        sip_deg=np.atleast_1d(sip_error(pg, gg)),
        ang_deg=np.atleast_1d(angular_error(pg, gg)),
        pos_cm=np.atleast_1d(positional_error(pred_theta, gt_theta, skel)),
    )


@dataclass
class TranslationErrorCurve:
    distances: np.ndarray
    errors: np.ndarray
    counts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def _interp_at_distance(arc: np.ndarray, traj: np.ndarray, d: float) -> np.ndarray:
    k = int(np.searchsorted(arc, d, side="left"))
    if k == 0:
        return traj[0]
    a0, a1 = arc[k - 1], arc[k]
    w = 0.0 if a1 == a0 else (d - a0) / (a1 - a0)
    return traj[k - 1] + w * (traj[k] - traj[k - 1])


def cumulative_translation_error(pred_traj: np.ndarray, gt_traj: np.ndarray, bin_size: float = 1.0,
                                 window_stride: int = 1) -> TranslationErrorCurve:
    """Translation error as a function of distance travelled.

    Every ``window_stride``-th frame starts a window; both trajectories are
    re-anchored at the window start, and the error at distance ``d`` is read
    where the ground-truth arc length from that start first equals ``d``
    (linear interpolation between frames). Bins are ``0, bin, 2*bin, ...`` up
    to the total ground-truth travel.
    """
    pred = np.asarray(pred_traj, dtype=float)
    gt = np.asarray(gt_traj, dtype=float)
    step = np.linalg.norm(np.diff(gt, axis=0), axis=-1)
    arc = np.concatenate([[0.0], np.cumsum(step)])
    total = arc[-1]
    n_bins = int(np.floor(total / bin_size + 1e-9))
    distances = np.arange(n_bins + 1) * bin_size
    sums = np.zeros(n_bins + 1)
    counts = np.zeros(n_bins + 1, dtype=int)
    for s in range(0, len(gt), window_stride):
        rel_arc = arc[s:] - arc[s]
        reach = rel_arc[-1]
        g = gt[s:] - gt[s]
        p = pred[s:] - pred[s]
        for b, d in enumerate(distances):
            if d > reach + 1e-12:
                break
            e = _interp_at_distance(rel_arc, p, d) - _interp_at_distance(rel_arc, g, d)
            sums[b] += np.linalg.norm(e)
            counts[b] += 1
    errors = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    return TranslationErrorCurve(distances, errors, counts)


def write_report(prefix: str | Path, report: PoseErrorReport,
                 curve: TranslationErrorCurve | None = None) -> tuple[Path, Path]:
    """Tab-separated per-frame table plus a JSON summary; returns both paths."""
    prefix = Path(prefix)
    table = prefix.with_suffix(".tsv")
    rows = ["frame\tsip_deg\tang_deg\tpos_cm\tmesh_cm"]
    for i, (s, a, p) in enumerate(zip(report.sip_deg, report.ang_deg, report.pos_cm)):
        rows.append(f"{i}\t{s:.6f}\t{a:.6f}\t{p:.6f}\tn/a")
    table.write_text("\n".join(rows) + "\n")
    summary = {"pose": report.means()}
    if curve is not None:
        summary["translation"] = {
            "distance_m": curve.distances.tolist(),
            "mean_error_m": curve.errors.tolist(),
            "windows": curve.counts.tolist(),
        }
    js = prefix.with_suffix(".json")
    js.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return table, js
