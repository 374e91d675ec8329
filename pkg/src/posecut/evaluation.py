"""Trajectory accuracy (rigidly aligned RMSE) and edge-classification scores."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from posecut.errors import AlignmentError
from posecut.g2o import INCORRECT, LabelSidecar
from posecut.geometry import Pose, Pose2, Pose3, matrix_to_quat
from posecut.optimizer import Estimate


@dataclass
class EvalReport:
    rmse: float
    n_nodes: int
    alignment: Pose
    precision: Optional[float] = None
    recall: Optional[float] = None
    f1: Optional[float] = None


def kabsch(src: np.ndarray, dst: np.ndarray):
    """Rotation R and translation t minimizing sum |R src_k + t - dst_k|^2 (no scale)."""
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    H = (src - mu_s).T @ (dst - mu_d)
    U, S, Vt = np.linalg.svd(H)
    D = np.eye(src.shape[1])
    D[-1, -1] = 1.0 if np.linalg.det(Vt.T @ U.T) >= 0 else -1.0
    R = Vt.T @ D @ U.T
    return R, mu_d - R @ mu_s, S


def _as_pose(R, t) -> Pose:
    if len(t) == 2:
        return Pose2(t[0], t[1], math.atan2(R[1, 0], R[0, 0]))
    return Pose3(tuple(t), matrix_to_quat(R))


def align_and_rmse(est: Estimate, gt: Estimate) -> EvalReport:
    """RMSE over common nodes after the best rigid alignment of ``est`` onto ``gt``."""
    common = sorted(set(est.poses) & set(gt.poses))
    if len(common) < 2:
        raise AlignmentError(f"need at least 2 common nodes, got {len(common)}")
    P = est.translations(common)
    Q = gt.translations(common)
    if not (np.all(np.isfinite(P)) and np.all(np.isfinite(Q))):
        raise AlignmentError("non-finite positions")
    R, t, S = kabsch(P, Q)
    if P.shape[1] == 3:
        # rotation is pinned down only if the points span at least a plane
        spread = np.linalg.svd(P - P.mean(axis=0), compute_uv=False)
        if spread[1] <= 1e-9 * max(spread[0], 1.0):
            raise AlignmentError("collinear point set: rotation about the line is undetermined")
    resid = P @ R.T + t - Q
    rmse = math.sqrt(float(np.mean(np.sum(resid * resid, axis=1))))
    return EvalReport(rmse, len(common), _as_pose(R, t))


def edge_metrics(removed: Iterable, labels: LabelSidecar):
    """(precision, recall, f1) of ``removed`` endpoint pairs as incorrect-edge detections.

    Precision is 1 when nothing was removed, recall is 1 when there is nothing
    to find; f1 is 0 when both are 0.
    """
    removed = set(removed)
    incorrect = {k for k, v in labels.items() if v == INCORRECT}
    hit = len(removed & incorrect)
    precision = hit / len(removed) if removed else 1.0
    recall = hit / len(incorrect) if incorrect else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def _num(v) -> str:
    return "NA" if v is None else "%.6f" % v


def report_line(dataset: str, variant: str, rep: EvalReport, wall_ms: Optional[float] = None) -> str:
    """Tab-separated: dataset, variant, rmse_m, precision, recall, f1, wall_ms."""
    fields = [dataset, variant, "%.6f" % rep.rmse, _num(rep.precision), _num(rep.recall), _num(rep.f1),
              "NA" if wall_ms is None else "%.1f" % wall_ms]
    return "\t".join(fields)


REPORT_HEADER = "dataset\tvariant\trmse_m\tprecision\trecall\tf1\twall_ms"
