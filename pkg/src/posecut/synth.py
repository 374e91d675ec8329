"""Synthetic multi-session datasets with known ground truth and edge labels.

A Manhattan-world walk (unit steps, random 90 degree turns) is confined to a
square arena so that it revisits earlier places.  The walk is cut in half and
each half becomes one session.  Every inter-session pair of poses closer than
the revisit radius becomes a correct landmark edge; gross outliers are then
added between distant pairs with random measurements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from posecut.errors import GenerationError
from posecut.g2o import CORRECT, INCORRECT, LabelSidecar
from posecut.geometry import Pose, Pose2, Pose3, between, compose, exp_map
from posecut.optimizer import Estimate
from posecut.posegraph import LANDMARK, ODOMETRY, Edge, NodeId, PoseGraph

_HEADINGS = ((1, 0), (0, 1), (-1, 0), (0, -1))


@dataclass(frozen=True)
class SynthConfig:
    frames_per_session: int = 200
    step_length: float = 1.0
    turn_probability: float = 0.1
    odom_noise_sigma: Tuple[float, float] = (0.05, 0.01)
    revisit_radius: float = 2.0
    outlier_rate: float = 0.10
    min_outlier_distance: float = 20.0
    arena_size: float = 30.0     # side of the square the walk stays in, meters
    sessions: int = 2
    dim: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.frames_per_session < 2 or self.sessions < 2:
            raise ValueError("need at least 2 sessions of 2 frames")
        if not 0.0 <= self.outlier_rate < 1.0:
            raise ValueError("outlier_rate must lie in [0, 1)")
        if not 0.0 <= self.turn_probability <= 1.0:
            raise ValueError("turn_probability must lie in [0, 1]")
        if self.revisit_radius >= self.min_outlier_distance:
            raise ValueError("revisit_radius must be below min_outlier_distance")
        if self.step_length <= 0 or self.arena_size < 2 * self.step_length:
            raise ValueError("arena must hold at least two steps")
        if min(self.odom_noise_sigma) < 0:
            raise ValueError("noise sigmas must be non-negative")
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")


@dataclass
class LabeledDataset:
    ground_truth: Estimate
    graph: PoseGraph
    labels: LabelSidecar


def manhattan_walk(n: int, rng: np.random.Generator, turn_probability: float = 0.1,
                   step: float = 1.0, arena: float = 30.0) -> np.ndarray:
    """``(n, 3)`` array of planar lattice poses (x, y, heading).

    The walk starts at the arena centre heading +x.  A step that would leave
    the arena forces a turn (left or right at random, reversing only when
    both are blocked).
    """
    half = math.floor(arena / (2 * step))
    pos = np.zeros(2, dtype=np.int64)
    h = 0
    out = np.zeros((n, 3))
    for k in range(1, n):
        if rng.random() < turn_probability:
            h = (h + (1 if rng.random() < 0.5 else 3)) % 4
        if np.any(np.abs(pos + _HEADINGS[h]) > half):
            turns = [t for t in ((h + 1) % 4, (h + 3) % 4) if np.all(np.abs(pos + _HEADINGS[t]) <= half)]
            if turns:
                h = turns[int(rng.integers(len(turns)))]
            else:
                h = (h + 2) % 4
        pos = pos + _HEADINGS[h]
        out[k, :2] = pos * step
        out[k, 2] = h * math.pi / 2
    return out


def _lift(row, dim) -> Pose:
    if dim == 2:
        return Pose2(*row)
    half = 0.5 * row[2]
    return Pose3((row[0], row[1], 0.0), (math.cos(half), 0.0, 0.0, math.sin(half)))


def _noise_model(sigma, dim):
    st, sr = sigma
    k = 2 if dim == 2 else 3
    sig = np.array([st] * k + [sr] * (1 if dim == 2 else 3), dtype=float)
    # a zero sigma would give infinite information; fall back to unit weight
    info = np.diag(np.where(sig > 0, 1.0 / np.where(sig > 0, sig, 1.0) ** 2, 1.0))
    return sig, info


def _measure(gt_rel: Pose, sig: np.ndarray, rng: np.random.Generator) -> Pose:
    eps = rng.normal(size=len(sig)) * sig
    return compose(gt_rel, exp_map(eps)) if np.any(eps) else gt_rel


def generate_multisession(cfg: SynthConfig = SynthConfig()) -> LabeledDataset:
    """Ground truth, noisy graph and labels for one seeded dataset."""
    rng = np.random.default_rng(cfg.seed)
    n = cfg.frames_per_session
    walk = manhattan_walk(n * cfg.sessions, rng, cfg.turn_probability, cfg.step_length, cfg.arena_size)
    gt = {NodeId(k // n, k % n): _lift(walk[k], cfg.dim) for k in range(len(walk))}
    sig, info = _noise_model(cfg.odom_noise_sigma, cfg.dim)

    g = PoseGraph(cfg.dim)
    for node in sorted(gt):
        g.add_node(node, gt[node])
    for s in range(cfg.sessions):
        for f in range(n - 1):
            a, b = NodeId(s, f), NodeId(s, f + 1)
            g.add_edge(Edge(a, b, _measure(between(gt[a], gt[b]), sig, rng), info, ODOMETRY))

    labels: LabelSidecar = {}
    xy = walk[:, :2]
    for sa in range(cfg.sessions):
        for sb in range(sa + 1, cfg.sessions):
            d = np.linalg.norm(xy[sa * n:(sa + 1) * n, None, :] - xy[None, sb * n:(sb + 1) * n, :], axis=2)
            for i, j in zip(*np.nonzero(d <= cfg.revisit_radius)):
                a, b = NodeId(sa, int(i)), NodeId(sb, int(j))
                g.add_edge(Edge(a, b, _measure(between(gt[a], gt[b]), sig, rng), info, LANDMARK))
                labels[(a, b)] = CORRECT
    if not labels:
        raise GenerationError("no inter-session revisits within the revisit radius; enlarge it or the walk")
    truth = Estimate(gt)
    g, labels = inject_outliers(g, cfg.outlier_rate, rng, truth, cfg.min_outlier_distance, labels)
    return LabeledDataset(truth, g, labels)


def outlier_count(n_existing: int, rate: float) -> int:
    """Number of outliers so that they make up ``rate`` of all landmark edges."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("rate must lie in [0, 1)")
    return int(round(rate * n_existing / (1.0 - rate)))


def inject_outliers(g: PoseGraph, rate: float, rng, ground_truth: Estimate,
                    min_distance: float = 20.0, labels: Optional[LabelSidecar] = None,
                    info: Optional[np.ndarray] = None):
    """Add random incorrect landmark edges between distant inter-session poses.

    Each outlier joins a uniformly drawn node pair from different sessions
    whose ground-truth distance exceeds ``min_distance`` and that no edge
    already joins.  Its measurement points at a uniform random pose inside
    the trajectory bounding box (uniform heading / rotation).

    Returns the new graph and labels; edges already present and missing from
    ``labels`` are labeled correct.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    out = g.copy()
    labels = dict(labels or {})
    for _, e in g.landmark_edges():
        labels.setdefault((e.source, e.target), CORRECT)
    n_out = outlier_count(len(g.landmark_ids()), rate)
    if n_out == 0:
        return out, labels
    nodes = [n for n in sorted(g.nodes) if n in ground_truth]
    xyz = ground_truth.translations(nodes)
    sess = np.array([n.session for n in nodes])
    taken = {frozenset(e.endpoints) for e in g.edges.values()}
    ia, ib = np.nonzero((sess[:, None] < sess[None, :])
                        & (np.linalg.norm(xyz[:, None] - xyz[None, :], axis=2) > min_distance))
    pairs = [(nodes[a], nodes[b]) for a, b in zip(ia, ib) if frozenset((nodes[a], nodes[b])) not in taken]
    if len(pairs) < n_out:
        raise GenerationError(f"only {len(pairs)} eligible distant pairs for {n_out} outliers")
    if info is None:
        info = next((e.info for _, e in g.landmark_edges()), np.eye(3 if g.dim == 2 else 6))
    lo, hi = xyz.min(axis=0), xyz.max(axis=0)
    for k in np.sort(rng.choice(len(pairs), size=n_out, replace=False)):
        a, b = pairs[k]
        target = _random_pose(rng, lo, hi, g.dim)
        out.add_edge(Edge(a, b, between(ground_truth[a], target), info, LANDMARK))
        labels[(a, b)] = INCORRECT
    return out, labels


def _random_pose(rng, lo, hi, dim) -> Pose:
    t = lo + (hi - lo) * rng.random(len(lo))
    if dim == 2:
        return Pose2(t[0], t[1], rng.uniform(-math.pi, math.pi))
    q = rng.normal(size=4)   # normalized Gaussian 4-vector is uniform on SO(3)
    return Pose3(tuple(t), tuple(q / np.linalg.norm(q)))


def check_labels(ds: LabeledDataset, revisit_radius: float, min_outlier_distance: float) -> bool:
    """Post-hoc check of the label invariants against ground truth."""
    for (a, b), lab in ds.labels.items():
        d = float(np.linalg.norm(ds.ground_truth[a].translation - ds.ground_truth[b].translation))
        if lab == CORRECT and d > revisit_radius:
            return False
        if lab == INCORRECT and d <= min_outlier_distance:
            return False
    return True
