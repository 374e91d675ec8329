"""Pairwise-consistency outlier rejection for landmark edges.

Two landmark edges are consistent when the loop they close through odometry,
``z_a^-1 * odo(a.from -> b.from) * z_b * odo(b.to -> a.to)``, is close to the
identity.  The largest mutually consistent set is a maximum clique of the
consistency graph.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from posecut import kernels
from posecut.geometry import compose, inverse, rotation_angle, translation_norm
from posecut.posegraph import ChainIndex, PoseGraph


@dataclass(frozen=True)
class PcmConfig:
    gamma_t: float = 2.0
    gamma_r: float = 0.5
    exact_clique_limit: int = 150

    def __post_init__(self):
        if not (self.gamma_t > 0 and self.gamma_r > 0):
            raise ValueError("consistency thresholds must be positive")
        if self.exact_clique_limit < 0:
            raise ValueError("exact_clique_limit must be >= 0")


@dataclass
class ConsistencyGraph:
    vertices: List[int]          # landmark edge ids, ascending
    adjacency: np.ndarray        # bool (n, n), symmetric, zero diagonal

    def degree(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def n_edges(self) -> int:
        return int(self.adjacency.sum()) // 2

    def is_clique(self, ids) -> bool:
        idx = [self.vertices.index(i) for i in ids]
        sub = self.adjacency[np.ix_(idx, idx)]
        return bool(np.all(sub | np.eye(len(idx), dtype=bool)))


def _oriented(e):
    """Endpoints ordered so the lower NodeId comes first, measurement inverted to match."""
    if e.source <= e.target:
        return e.source, e.target, e.z
    return e.target, e.source, inverse(e.z)


def loop_error(g: PoseGraph, ida: int, idb: int, chains: Optional[ChainIndex] = None):
    """(translation norm, rotation angle) of the loop closed by two landmark edges.

    The two opening orders give conjugate loops: same angle, but the
    translation norm can differ.  The edge with the smaller endpoint pair
    therefore opens the loop, so the result depends neither on argument order
    nor on edge ids.  (Edges with equal endpoints give mutually inverse loops,
    whose norms agree.)  Returns None when the pair spans more than two
    sessions or the loop cannot be closed through odometry.
    """
    chains = chains or ChainIndex(g)
    ua, va, za = _oriented(g.edges[ida])
    ub, vb, zb = _oriented(g.edges[idb])
    if (ub, vb) < (ua, va):
        ua, va, za, ub, vb, zb = ub, vb, zb, ua, va, za
    if ua.session != ub.session or va.session != vb.session:
        return None
    if not (chains.connected(ua, ub) and chains.connected(vb, va)):
        return None
    L = compose(compose(compose(inverse(za), chains.relative(ua, ub)), zb), chains.relative(vb, va))
    return translation_norm(L), rotation_angle(L)


def pairwise_consistency(g: PoseGraph, ida: int, idb: int, cfg: PcmConfig = PcmConfig(),
                         chains: Optional[ChainIndex] = None) -> bool:
    """True iff the two landmark edges close a loop within both thresholds.

    Incomparable pairs (see :func:`loop_error`) count as inconsistent.
    """
    if ida == idb:
        return True
    err = loop_error(g, ida, idb, chains)
    if err is None:
        return False
    return err[0] <= cfg.gamma_t and err[1] <= cfg.gamma_r


def _comparable_mask(us, vs, chains):
    seg_u = np.array([chains.segment[u] for u in us])
    seg_v = np.array([chains.segment[v] for v in vs])
    # segments never straddle sessions, so equal segments imply equal sessions
    return (seg_u[:, None] == seg_u[None, :]) & (seg_v[:, None] == seg_v[None, :])


def build_consistency_graph(g: PoseGraph, cfg: PcmConfig = PcmConfig()) -> ConsistencyGraph:
    ids = sorted(g.landmark_ids())
    n = len(ids)
    adj = np.zeros((n, n), dtype=bool)
    if n < 2:
        return ConsistencyGraph(ids, adj)
    chains = ChainIndex(g)
    oriented = [_oriented(g.edges[i]) for i in ids]
    us = [o[0] for o in oriented]
    vs = [o[1] for o in oriented]
    mask = _comparable_mask(us, vs, chains)
    if g.dim == 2:
        # the kernel opens each loop with the lower row, so feed rows in endpoint order
        order = sorted(range(n), key=lambda k: (us[k], vs[k]))
        pf = np.array([chains.pose[us[k]].as_array() for k in order])
        pt = np.array([chains.pose[vs[k]].as_array() for k in order])
        z = np.array([oriented[k][2].as_array() for k in order])
        T, R = kernels.se2_loop_errors(pf, pt, z)
        ok = np.empty_like(T, dtype=bool)
        ok[np.ix_(order, order)] = (T <= cfg.gamma_t) & (R <= cfg.gamma_r)
        adj = mask & ok
    else:
        for a in range(n):
            for b in range(a + 1, n):
                if mask[a, b] and pairwise_consistency(g, ids[a], ids[b], cfg, chains):
                    adj[a, b] = adj[b, a] = True
    np.fill_diagonal(adj, False)
    return ConsistencyGraph(ids, adj)


def greedy_clique(adj: np.ndarray, max_seeds: int = 16) -> List[int]:
    """Greedy clique seeded from the densest core (local indices, ascending).

    Vertices are peeled by minimum degree; the last ``max_seeds`` peeled each
    seed a clique grown greedily inside their neighbourhood, always adding the
    candidate with most candidate neighbours (lowest index on ties).  The
    largest clique wins, ties to the lexicographically smaller index list.
    """
    adj = np.asarray(adj, dtype=bool).copy()
    n = adj.shape[0]
    if n == 0:
        return []
    np.fill_diagonal(adj, False)
    deg = adj.sum(axis=1).astype(np.int64)
    alive = np.ones(n, dtype=bool)
    order = np.empty(n, dtype=np.int64)
    big = n + 1
    for k in range(n):
        v = int(np.argmin(np.where(alive, deg, big)))
        order[k] = v
        alive[v] = False
        deg -= adj[v]
    best: List[int] = []
    for v in order[::-1][:max_seeds]:
        clique = [int(v)]
        cand = adj[v].copy()
        counts = adj[:, cand].sum(axis=1)
        while cand.any():
            size = int(cand.sum())
            universal = cand & (counts == size - 1)
            if universal.any():
                # adjacent to every other candidate: greedy would take these first anyway
                clique.extend(np.flatnonzero(universal).tolist())
                cand &= ~universal
                counts -= adj[:, universal].sum(axis=1)
                continue
            w = int(np.argmax(np.where(cand, counts, -1)))
            clique.append(w)
            removed = cand & ~adj[w]
            cand &= adj[w]
            counts -= adj[:, removed].sum(axis=1)
        clique.sort()
        if len(clique) > len(best) or (len(clique) == len(best) and clique < best):
            best = clique
    return best


def max_clique(cg: ConsistencyGraph, cfg: PcmConfig = PcmConfig()) -> List[int]:
    """Edge ids of a maximum clique (exact up to ``cfg.exact_clique_limit`` vertices)."""
    n = len(cg.vertices)
    if n == 0:
        return []
    if n <= cfg.exact_clique_limit:
        local = kernels.max_clique(cg.adjacency.astype(np.uint8))
    else:
        local = greedy_clique(cg.adjacency)
    return [cg.vertices[i] for i in sorted(local)]


def pcm_select(g: PoseGraph, cfg: PcmConfig = PcmConfig()) -> List[int]:
    """Ids of the landmark edges PCM keeps."""
    return max_clique(build_consistency_graph(g, cfg), cfg)


def pcm_filter(g: PoseGraph, cfg: PcmConfig = PcmConfig()) -> PoseGraph:
    keep = set(pcm_select(g, cfg))
    return g.without_edges(i for i in g.landmark_ids() if i not in keep)
