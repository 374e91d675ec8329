"""Support-weighted minimum-cost multicut over landmark edges.

Each landmark edge gets cost +1 when another landmark edge joins frames
within ``delta`` of both of its endpoints (a *support edge*) and -1
otherwise.  The signed graph is partitioned to minimise the total cost of
cut edges; landmark edges that end up between components are rejected.
"""

from __future__ import annotations

import heapq
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from posecut import kernels
from posecut.errors import CapacityError, FeasibilityError
from posecut.posegraph import NodeId, PoseGraph

LANDMARK_ONLY = "landmark-only"
FULL_GRAPH = "full"
EXACT_LIMIT = 10
_EPS = 1e-12


@dataclass(frozen=True)
class SupportConfig:
    delta: int = 1
    mode: str = LANDMARK_ONLY
    theta_odo: float = 1.0

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.mode not in (LANDMARK_ONLY, FULL_GRAPH):
            raise ValueError(f"unknown multicut mode {self.mode!r}")


@dataclass
class WeightedGraph:
    """Simple signed graph.  Edge ``k`` joins ``vertices[eu[k]]`` and ``vertices[ev[k]]``."""

    vertices: List[NodeId]
    eid: List[int] = field(default_factory=list)
    eu: List[int] = field(default_factory=list)
    ev: List[int] = field(default_factory=list)
    cost: List[float] = field(default_factory=list)
    origin: List[str] = field(default_factory=list)
    members: List[List[int]] = field(default_factory=list)

    def __post_init__(self):
        self.index = {v: i for i, v in enumerate(self.vertices)}

    @property
    def n(self) -> int:
        return len(self.vertices)

    @property
    def m(self) -> int:
        return len(self.eid)

    def add_edge(self, a: int, b: int, c: float, eid: int, origin: str = "landmark"):
        if a == b:
            raise ValueError("self-loops are not allowed")
        self.eid.append(eid)
        self.eu.append(min(a, b))
        self.ev.append(max(a, b))
        self.cost.append(float(c))
        self.origin.append(origin)
        self.members.append([eid])

    @classmethod
    def from_edges(cls, n: int, edges) -> "WeightedGraph":
        """Build from ``(u, v, cost)`` triples on integer vertices ``0..n-1``; ids follow input order."""
        G = cls([NodeId(0, i) for i in range(n)])
        for k, (u, v, c) in enumerate(edges):
            G.add_edge(u, v, c, k)
        return G


@dataclass
class Decomposition:
    component: Dict[NodeId, int]

    @classmethod
    def from_labels(cls, vertices, labels) -> "Decomposition":
        """Canonical form: components numbered 0.. in first-seen vertex order."""
        remap = {}
        comp = {}
        for v, lab in zip(vertices, labels):
            comp[v] = remap.setdefault(int(lab), len(remap))
        return cls(comp)

    def labels(self, G: WeightedGraph) -> np.ndarray:
        return np.array([self.component[v] for v in G.vertices], dtype=np.int64)

    @property
    def n_components(self) -> int:
        return len(set(self.component.values()))


@dataclass
class MulticutLabeling:
    y: Dict[int, int]          # edge id -> 1 if cut

    def cut_ids(self):
        return sorted(i for i, v in self.y.items() if v)


# -- support edges --------------------------------------------------------------

def _key(e):
    u, v = (e.source, e.target) if e.source <= e.target else (e.target, e.source)
    return u.session, u.frame, v.session, v.frame


def _norm(us, uf, vs, vf):
    return (us, uf, vs, vf) if (us, uf) <= (vs, vf) else (vs, vf, us, uf)


def support_counts(g: PoseGraph, delta: int) -> Dict[int, int]:
    """Number of distinct endpoint pairs that support each landmark edge.

    Only pairs inside the (2*delta+1)^2 window around the edge's own endpoint
    pair are candidates, the pair itself excluded, so the count is at most
    4*delta*(delta+1).  Parallel duplicates of the same pair are not support.
    """
    present = {_key(e) for _, e in g.landmark_edges()}
    out = {}
    for i, e in g.landmark_edges():
        us, uf, vs, vf = own = _key(e)
        cands = set()
        for du in range(-delta, delta + 1):
            for dv in range(-delta, delta + 1):
                if uf + du < 0 or vf + dv < 0:
                    continue
                k = _norm(us, uf + du, vs, vf + dv)
                if k != own and k[:2] != k[2:]:
                    cands.add(k)
        out[i] = len(cands & present)
    return out


def max_support_candidates(delta: int) -> int:
    return 4 * delta * (delta + 1)


def compute_support_weights(g: PoseGraph, cfg: SupportConfig = SupportConfig()) -> Dict[int, float]:
    return {i: (1.0 if c > 0 else -1.0) for i, c in support_counts(g, cfg.delta).items()}


def build_instance(g: PoseGraph, cfg: SupportConfig = SupportConfig()) -> WeightedGraph:
    """Signed multicut instance; parallel edges are merged by summing costs."""
    weights = compute_support_weights(g, cfg)
    if cfg.mode == FULL_GRAPH:
        verts = sorted(g.nodes)
    else:
        verts = sorted({n for _, e in g.landmark_edges() for n in e.endpoints})
    G = WeightedGraph(verts)
    slot = {}
    for i, e in g.edges.items():
        if e.is_landmark:
            c, origin = weights[i], "landmark"
        elif cfg.mode == FULL_GRAPH:
            c, origin = cfg.theta_odo, "odometry"
        else:
            continue
        a, b = G.index[e.source], G.index[e.target]
        pair = (min(a, b), max(a, b))
        k = slot.get(pair)
        if k is None:
            slot[pair] = G.m
            G.add_edge(a, b, c, i, origin)
        else:
            G.cost[k] += c
            G.members[k].append(i)
            G.eid[k] = min(G.eid[k], i)
            if origin == "landmark":
                G.origin[k] = "landmark"
    return G


# -- labelings ------------------------------------------------------------------

def _components(n, pairs):
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    return [find(x) for x in range(n)]


def labeling_of(G: WeightedGraph, d: Decomposition) -> MulticutLabeling:
    lab = d.labels(G)
    return MulticutLabeling({G.eid[k]: int(lab[G.eu[k]] != lab[G.ev[k]]) for k in range(G.m)})


def validate(G: WeightedGraph, y: MulticutLabeling) -> bool:
    """True iff ``y`` is a multicut: no cycle holds exactly one cut edge."""
    if set(y.y) != set(G.eid):
        return False
    joined = [(G.eu[k], G.ev[k]) for k in range(G.m) if not y.y[G.eid[k]]]
    comp = _components(G.n, joined)
    return all(bool(y.y[G.eid[k]]) == (comp[G.eu[k]] != comp[G.ev[k]]) for k in range(G.m))


def objective(G: WeightedGraph, y: MulticutLabeling) -> float:
    if not validate(G, y):
        raise FeasibilityError("labeling violates a cycle inequality")
    return float(sum(G.cost[k] for k in range(G.m) if y.y[G.eid[k]]))


def decomposition_objective(G: WeightedGraph, d: Decomposition) -> float:
    lab = d.labels(G)
    return _label_objective(G, lab)


def _label_objective(G, lab):
    return float(sum(G.cost[k] for k in range(G.m) if lab[G.eu[k]] != lab[G.ev[k]]))


def joined_decomposition(G: WeightedGraph) -> Decomposition:
    """Connected components of G: the all-zero labeling, objective 0."""
    return Decomposition.from_labels(G.vertices, _components(G.n, zip(G.eu, G.ev)))


# -- solvers --------------------------------------------------------------------

def solve_gaec(G: WeightedGraph) -> Decomposition:
    """Greedy additive edge contraction.

    Repeatedly contracts the edge of highest non-negative cost (smallest edge
    id on ties), summing the costs of edges that become parallel.  Zero-cost
    contractions leave the objective unchanged and favour fewer components,
    the same preference the exact solver uses on ties.
    """
    adj = [dict() for _ in range(G.n)]   # v -> {w: (cost, id)}
    for k in range(G.m):
        a, b = G.eu[k], G.ev[k]
        adj[a][b] = adj[b][a] = (G.cost[k], G.eid[k])
    heap = [(-c, i, min(a, b), max(a, b))
            for a in range(G.n) for b, (c, i) in adj[a].items() if a < b and c >= 0]
    heapq.heapify(heap)
    alive = [True] * G.n
    parent = list(range(G.n))
    while heap:
        negc, i, a, b = heapq.heappop(heap)
        if not (alive[a] and alive[b]) or adj[a].get(b) != (-negc, i):
            continue
        keep, gone = a, b
        alive[gone] = False
        parent[gone] = keep
        del adj[keep][gone]
        for w, (c, j) in list(adj[gone].items()):
            if w == keep:
                continue
            del adj[w][gone]
            if w in adj[keep]:
                c2, j2 = adj[keep][w]
                new = (c2 + c, min(j, j2))
            else:
                new = (c, j)
            adj[keep][w] = adj[w][keep] = new
            if new[0] >= 0:
                heapq.heappush(heap, (-new[0], new[1], min(keep, w), max(keep, w)))
        adj[gone] = {}

    def root(x):
        while parent[x] != x:
            x = parent[x]
        return x

    return Decomposition.from_labels(G.vertices, [root(v) for v in range(G.n)])


def _neighbours(G):
    nb = [[] for _ in range(G.n)]
    for k in range(G.m):
        a, b, c = G.eu[k], G.ev[k], G.cost[k]
        nb[a].append((b, c))
        nb[b].append((a, c))
    return nb


def refine_klj(G: WeightedGraph, d: Decomposition) -> Decomposition:
    """Local search: single-node moves (including to a fresh component) and component merges.

    Every accepted move strictly lowers the objective, so the search stops at
    a fixpoint no worse than ``d``.  If that fixpoint is still above zero the
    all-joined decomposition (objective 0) is returned instead.
    """
    lab = list(d.labels(G))
    nb = _neighbours(G)
    size = Counter(lab)
    next_label = max(lab, default=-1) + 1
    improved = True
    while improved:
        improved = False
        for v in range(G.n):
            cur = lab[v]
            acc = {}
            for w, c in nb[v]:
                acc[lab[w]] = acc.get(lab[w], 0.0) + c
            stay = acc.get(cur, 0.0)
            single = size[cur] == 1
            best_delta, target = 0.0, None
            if not single and stay < -_EPS:
                best_delta, target = stay, next_label
            for k in sorted(acc):
                if k == cur:
                    continue
                delta = stay - acc[k]
                if delta < best_delta - _EPS:
                    best_delta, target = delta, k
            if target is not None:
                lab[v] = target
                size[cur] -= 1
                size[target] += 1
                if target == next_label:
                    next_label += 1
                improved = True
        between = {}
        for k in range(G.m):
            a, b = lab[G.eu[k]], lab[G.ev[k]]
            if a != b:
                key = (min(a, b), max(a, b))
                between[key] = between.get(key, 0.0) + G.cost[k]
        if between:
            key, gain = min(between.items(), key=lambda kv: (-kv[1], kv[0]))
            if gain > _EPS:
                a, b = key
                lab = [a if x == b else x for x in lab]
                size[a] += size.pop(b)
                improved = True
    if _label_objective(G, lab) > _EPS:
        return joined_decomposition(G)
    return Decomposition.from_labels(G.vertices, lab)


def solve(G: WeightedGraph) -> Decomposition:
    """GAEC followed by local refinement."""
    return refine_klj(G, solve_gaec(G))


def solve_exact(G: WeightedGraph, return_count: bool = False):
    """Global optimum by enumerating every set partition (at most 10 vertices).

    Ties go to fewer components, then to the lexicographically first labeling.
    With ``return_count`` the number of partitions visited is returned too.
    """
    if G.n > EXACT_LIMIT:
        raise CapacityError(f"exact multicut limited to {EXACT_LIMIT} vertices, got {G.n}")
    labels, _, count = kernels.best_partition(G.n, np.array(G.eu, dtype=np.int64),
                                              np.array(G.ev, dtype=np.int64),
                                              np.array(G.cost, dtype=float))
    d = Decomposition.from_labels(G.vertices, labels)
    return (d, count) if return_count else d


def reject_cut_edges(g: PoseGraph, d: Decomposition) -> PoseGraph:
    """Drop landmark edges whose endpoints fall in different components."""
    return g.without_edges(cut_landmark_ids(g, d))


def cut_landmark_ids(g: PoseGraph, d: Decomposition) -> List[int]:
    return [i for i, e in g.landmark_edges()
            if d.component[e.source] != d.component[e.target]]


def graph_cut(g: PoseGraph, cfg: SupportConfig = SupportConfig()):
    """Full GC step.  Returns ``(cleaned graph, removed landmark edge ids)``."""
    G = build_instance(g, cfg)
    d = solve(G)
    removed = cut_landmark_ids(g, d)
    return g.without_edges(removed), removed
