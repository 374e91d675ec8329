"""Batch Levenberg-Marquardt pose-graph optimization on SE(2)/SE(3).

Residual of an edge ``i -> j`` with measurement ``z``::

    r = W * log(z^-1 * (X_i^-1 * X_j)),   W^T W = information

Poses are updated by right retraction ``X <- X * exp(d)``.  The gauge is
fixed by holding the smallest NodeId at its initial value.  SE(2) Jacobians
are analytic (compiled kernel); SE(3) ones use central differences.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from posecut import kernels
from posecut.errors import NumericalFailure
from posecut.geometry import Pose, Pose2, between, compose, exp_map, identity, inverse, log_map
from posecut.posegraph import ChainIndex, Edge, NodeId, PoseGraph

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LmConfig:
    max_iterations: int = 100
    lambda_init: float = 1e-4
    lambda_factor: float = 10.0
    rel_tol: float = 1e-9
    step_tol: float = 1e-10

    def __post_init__(self):
        if min(self.max_iterations, self.lambda_init, self.lambda_factor, self.rel_tol, self.step_tol) <= 0:
            raise ValueError("LM settings must be positive")


@dataclass
class Estimate:
    poses: Dict[NodeId, Pose]

    @property
    def anchor(self) -> NodeId:
        return min(self.poses)

    @property
    def dim(self) -> int:
        return next(iter(self.poses.values())).dim if self.poses else 2

    def __getitem__(self, n) -> Pose:
        return self.poses[n]

    def __contains__(self, n):
        return n in self.poses

    def __len__(self):
        return len(self.poses)

    def nodes(self):
        return sorted(self.poses)

    def translations(self, nodes=None) -> np.ndarray:
        nodes = self.nodes() if nodes is None else nodes
        return np.array([self.poses[n].translation for n in nodes])


@dataclass
class LmResult:
    estimate: Estimate
    errors: List[float] = field(default_factory=list)   # initial error, then one entry per accepted step
    iterations: int = 0
    converged: bool = False


def sqrt_information(info) -> np.ndarray:
    """Upper factor W with W^T W = info."""
    return np.linalg.cholesky(np.asarray(info, dtype=float)).T


def raw_error(e: Edge, xi: Pose, xj: Pose) -> np.ndarray:
    return log_map(between(e.z, between(xi, xj)))


def residual(e: Edge, est: Estimate) -> np.ndarray:
    """Whitened residual twist of one edge."""
    return sqrt_information(e.info) @ raw_error(e, est[e.source], est[e.target])


def total_error(g: PoseGraph, est: Estimate) -> float:
    """Half the sum of squared whitened residuals."""
    return 0.5 * sum(float(r @ r) for r in (residual(e, est) for e in g.edges.values()))


def initial_guess(g: PoseGraph) -> Estimate:
    """Dead-reckoned start point.

    The smallest node sits at the identity and its odometry segment follows by
    composition.  Other segments are attached through the first landmark edge
    (in edge order) that reaches an already placed segment; segments nothing
    reaches stay at the identity and a warning is issued.
    """
    chains = ChainIndex(g)
    if not g.nodes:
        return Estimate({})
    segments: Dict[int, List[NodeId]] = {}
    for n in sorted(g.nodes):
        segments.setdefault(chains.segment[n], []).append(n)
    base: Dict[int, Pose] = {chains.segment[min(g.nodes)]: identity(g.dim)}
    landmarks = [e for _, e in g.landmark_edges()]
    progress = True
    while progress and len(base) < len(segments):
        progress = False
        for e in landmarks:
            su, sv = chains.segment[e.source], chains.segment[e.target]
            if (su in base) == (sv in base):
                continue
            if su in base:
                placed = compose(compose(base[su], chains.pose[e.source]), e.z)
                base[sv] = compose(placed, inverse(chains.pose[e.target]))
            else:
                placed = compose(compose(base[sv], chains.pose[e.target]), inverse(e.z))
                base[su] = compose(placed, inverse(chains.pose[e.source]))
            progress = True
    missing = sorted(s for s in segments if s not in base)
    if missing:
        warnings.warn(f"{len(missing)} odometry segment(s) not linked by any landmark edge; placed at identity",
                      RuntimeWarning, stacklevel=2)
        for s in missing:
            base[s] = identity(g.dim)
    return Estimate({n: compose(base[chains.segment[n]], chains.pose[n]) for n in sorted(g.nodes)})


# -- linearization --------------------------------------------------------------

class _Problem:
    def __init__(self, g: PoseGraph, est: Estimate):
        self.dim = g.dim
        self.dof = 3 if g.dim == 2 else 6
        self.nodes = est.nodes()
        self.index = {n: k for k, n in enumerate(self.nodes)}
        edges = list(g.edges.values())
        self.edges = edges
        self.src = np.array([self.index[e.source] for e in edges], dtype=np.int64)
        self.dst = np.array([self.index[e.target] for e in edges], dtype=np.int64)
        self.W = np.array([sqrt_information(e.info) for e in edges]).reshape(-1, self.dof, self.dof)
        if self.dim == 2:
            self.meas = np.array([e.z.as_array() for e in edges]).reshape(-1, 3)

    def pack(self, est: Estimate):
        if self.dim == 2:
            return np.array([est[n].as_array() for n in self.nodes])
        return [est[n] for n in self.nodes]

    def unpack(self, x) -> Estimate:
        if self.dim == 2:
            return Estimate({n: Pose2(*x[k]) for k, n in enumerate(self.nodes)})
        return Estimate(dict(zip(self.nodes, x)))

    def retract(self, x, delta):
        """Apply ``X_k <- X_k * exp(delta_k)``; ``delta`` has one row per node."""
        if self.dim == 2:
            th = delta[:, 2]
            small = np.abs(th) < 1e-7
            safe = np.where(small, 1.0, th)
            a = np.where(small, 1.0 - th * th / 6.0, np.sin(safe) / safe)
            b = np.where(small, th / 2.0, 2.0 * np.sin(0.5 * safe) ** 2 / safe)
            tx = a * delta[:, 0] - b * delta[:, 1]
            ty = b * delta[:, 0] + a * delta[:, 1]
            c, s = np.cos(x[:, 2]), np.sin(x[:, 2])
            out = np.empty_like(x)
            out[:, 0] = x[:, 0] + c * tx - s * ty
            out[:, 1] = x[:, 1] + s * tx + c * ty
            out[:, 2] = np.arctan2(np.sin(x[:, 2] + th), np.cos(x[:, 2] + th))
            return out
        return [compose(p, exp_map(d)) if np.any(d) else p for p, d in zip(x, delta)]

    def residuals(self, x) -> np.ndarray:
        if self.dim == 2:
            res, _, _ = kernels.se2_linearize(x, self.src, self.dst, self.meas, self.W)
            return res
        out = np.empty((len(self.edges), 6))
        for k, e in enumerate(self.edges):
            out[k] = self.W[k] @ raw_error(e, x[self.src[k]], x[self.dst[k]])
        return out

    def linearize(self, x):
        if self.dim == 2:
            return kernels.se2_linearize(x, self.src, self.dst, self.meas, self.W)
        m = len(self.edges)
        res = self.residuals(x)
        Ji = np.empty((m, 6, 6))
        Jj = np.empty((m, 6, 6))
        h = 1e-6
        for k, e in enumerate(self.edges):
            xi, xj = x[self.src[k]], x[self.dst[k]]
            for c in range(6):
                d = np.zeros(6)
                d[c] = h
                ip, im = compose(xi, exp_map(d)), compose(xi, exp_map(-d))
                jp, jm = compose(xj, exp_map(d)), compose(xj, exp_map(-d))
                Ji[k, :, c] = self.W[k] @ (raw_error(e, ip, xj) - raw_error(e, im, xj)) / (2 * h)
                Jj[k, :, c] = self.W[k] @ (raw_error(e, xi, jp) - raw_error(e, xi, jm)) / (2 * h)
        return res, Ji, Jj

    def normal_equations(self, x):
        """Gauss-Newton system over every node but the anchor (index 0)."""
        res, Ji, Jj = self.linearize(x)
        d = self.dof
        m = len(self.edges)
        nvar = (len(self.nodes) - 1) * d
        rows = np.arange(m * d).reshape(m, d)
        rr = np.broadcast_to(rows[:, :, None], (m, d, d))
        blocks = []
        for J, idx in ((Ji, self.src), (Jj, self.dst)):
            keep = idx > 0
            cols = (idx[keep, None] - 1) * d + np.arange(d)[None, :]
            cc = np.broadcast_to(cols[:, None, :], (int(keep.sum()), d, d))
            blocks.append((J[keep].ravel(), rr[keep].ravel(), cc.ravel()))
        vals = np.concatenate([b[0] for b in blocks])
        r_ = np.concatenate([b[1] for b in blocks])
        c_ = np.concatenate([b[2] for b in blocks])
        J = sp.csr_matrix((vals, (r_, c_)), shape=(m * d, nvar))
        H = (J.T @ J).tocsc()
        g = J.T @ res.ravel()
        return H, g, 0.5 * float(res.ravel() @ res.ravel())


def levenberg_marquardt(g: PoseGraph, init: Estimate, cfg: LmConfig = LmConfig()) -> LmResult:
    """Levenberg-Marquardt with Marquardt diagonal damping.

    Steps that fail to lower the error are rejected and the damping is raised,
    so the recorded error sequence is non-increasing.
    """
    if len(init) == 0:
        return LmResult(init, [0.0], 0, True)
    missing = {n for e in g.edges.values() for n in e.endpoints} - set(init.poses)
    if missing:
        raise ValueError(f"estimate lacks {len(missing)} edge endpoint(s), e.g. {min(missing)}")
    prob = _Problem(g, init)
    x = prob.pack(init)
    err = 0.5 * float(np.sum(prob.residuals(x) ** 2))
    if not math.isfinite(err):
        raise NumericalFailure("initial error is not finite", init)
    result = LmResult(init, [err])
    if len(prob.nodes) < 2 or err == 0.0:
        result.converged = True
        return result
    lam = cfg.lambda_init
    H, grad, _ = prob.normal_equations(x)
    d = prob.dof
    for it in range(1, cfg.max_iterations + 1):
        result.iterations = it
        diag = H.diagonal()
        damp = sp.diags(lam * np.maximum(diag, 1e-9))
        try:
            step = spla.spsolve((H + damp).tocsc(), -grad)
        except RuntimeError as exc:  # singular factorization
            raise NumericalFailure(f"normal-equation solve failed: {exc}", prob.unpack(x)) from exc
        if not np.all(np.isfinite(step)):
            raise NumericalFailure("normal-equation solve produced non-finite values", prob.unpack(x))
        delta = np.vstack([np.zeros(d), step.reshape(-1, d)])
        x_new = prob.retract(x, delta)
        new_err = 0.5 * float(np.sum(prob.residuals(x_new) ** 2))
        if not math.isfinite(new_err):
            raise NumericalFailure("error became non-finite", prob.unpack(x))
        if new_err < err:
            decrease = (err - new_err) / err
            x, err = x_new, new_err
            result.errors.append(err)
            lam = max(lam / cfg.lambda_factor, 1e-12)
            if decrease < cfg.rel_tol or np.linalg.norm(step) < cfg.step_tol or err == 0.0:
                result.converged = True
                break
            H, grad, _ = prob.normal_equations(x)
        else:
            if np.linalg.norm(step) < cfg.step_tol:
                result.converged = True
                break
            lam *= cfg.lambda_factor
            if lam > 1e16:
                result.converged = True
                break
    log.debug("LM stopped after %d iterations, error %.6g -> %.6g", result.iterations, result.errors[0], err)
    result.estimate = prob.unpack(x)
    return result


def optimize(g: PoseGraph, init: Estimate, cfg: LmConfig = LmConfig()) -> Estimate:
    return levenberg_marquardt(g, init, cfg).estimate
