"""Multi-session pose-graph model.

Nodes are keyed by ``NodeId(session, frame)``.  Edges live in insertion order
under stable integer ids; filtering stages return copies that keep the ids of
the surviving edges, so a labeling computed on one stage can be looked up on
the next.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Dict, Iterator, NamedTuple, Optional

import numpy as np

from posecut.errors import NotConnectedError, StructureError
from posecut.geometry import Pose, between, compose, identity, inverse

ODOMETRY = "odometry"
LANDMARK = "landmark"


class NodeId(NamedTuple):
    session: int
    frame: int

    def __repr__(self):
        return f"({self.session},{self.frame})"


@dataclass(frozen=True)
class Edge:
    source: NodeId
    target: NodeId
    z: Pose
    info: np.ndarray
    kind: str = LANDMARK

    def __post_init__(self):
        object.__setattr__(self, "source", NodeId(*self.source))
        object.__setattr__(self, "target", NodeId(*self.target))
        if self.source == self.target:
            raise StructureError(f"self-loop edge at {self.source}")
        if self.kind not in (ODOMETRY, LANDMARK):
            raise StructureError(f"unknown edge kind {self.kind!r}")
        info = np.asarray(self.info, dtype=float)
        d = 3 if self.z.dim == 2 else 6
        if info.shape != (d, d):
            raise StructureError(f"information matrix must be {d}x{d}, got {info.shape}")
        info.setflags(write=False)
        object.__setattr__(self, "info", info)
        if self.kind == ODOMETRY and not is_consecutive(self.source, self.target):
            raise StructureError(
                f"odometry edge {self.source}->{self.target} must join consecutive frames of one session")

    def __eq__(self, other):
        if not isinstance(other, Edge):
            return NotImplemented
        return (self.source == other.source and self.target == other.target
                and self.z == other.z and self.kind == other.kind
                and np.array_equal(self.info, other.info))

    __hash__ = None

    @property
    def is_odometry(self) -> bool:
        return self.kind == ODOMETRY

    @property
    def is_landmark(self) -> bool:
        return self.kind == LANDMARK

    @property
    def endpoints(self):
        return self.source, self.target


def is_consecutive(a: NodeId, b: NodeId) -> bool:
    return a.session == b.session and b.frame == a.frame + 1


def is_spd(info) -> bool:
    info = np.asarray(info, dtype=float)
    if not np.all(np.isfinite(info)) or not np.allclose(info, info.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(info).max())):
        return False
    try:
        np.linalg.cholesky(info)
    except np.linalg.LinAlgError:
        return False
    return bool(np.linalg.eigvalsh(info).min() > 0.0)


@dataclass
class PoseGraph:
    dim: int = 2
    nodes: Dict[NodeId, Optional[Pose]] = field(default_factory=dict)
    edges: Dict[int, Edge] = field(default_factory=dict)
    _next_id: int = 0
    _odom: Dict[NodeId, int] = field(default_factory=dict, repr=False)

    def add_node(self, n, pose: Optional[Pose] = None) -> NodeId:
        n = NodeId(*n)
        if n.session < 0 or n.frame < 0:
            raise StructureError(f"node ids must be non-negative, got {n}")
        if pose is not None and pose.dim != self.dim:
            raise StructureError(f"{self.dim}D graph cannot hold a {pose.dim}D pose")
        if pose is not None or n not in self.nodes:
            self.nodes[n] = pose
        return n

    def add_edge(self, e: Edge, eid: Optional[int] = None) -> int:
        """Append ``e`` and return its id.  Missing endpoints are created without a pose."""
        if e.z.dim != self.dim:
            raise StructureError(f"{self.dim}D graph cannot hold a {e.z.dim}D edge")
        if e.is_odometry and e.source in self._odom:
            raise StructureError(f"duplicate odometry edge {e.source}->{e.target}")
        if eid is None:
            eid = self._next_id
        elif eid in self.edges:
            raise StructureError(f"edge id {eid} already in use")
        for n in e.endpoints:
            if n not in self.nodes:
                self.add_node(n)
        self.edges[eid] = e
        self._next_id = max(self._next_id, eid + 1)
        if e.is_odometry:
            self._odom[e.source] = eid
        return eid

    # -- queries --------------------------------------------------------------

    def landmark_ids(self):
        return [i for i, e in self.edges.items() if e.is_landmark]

    def odometry_ids(self):
        return [i for i, e in self.edges.items() if e.is_odometry]

    def landmark_edges(self) -> Iterator[tuple]:
        return ((i, e) for i, e in self.edges.items() if e.is_landmark)

    def sessions(self):
        return sorted({n.session for n in self.nodes})

    def session_frames(self, session: int):
        return sorted(n.frame for n in self.nodes if n.session == session)

    def odometry_edge(self, n: NodeId) -> Optional[Edge]:
        """The odometry edge leaving ``n`` (towards frame + 1), if any."""
        eid = self._odom.get(n)
        return None if eid is None else self.edges[eid]

    def copy(self) -> "PoseGraph":
        return copy.copy(self)._replace_containers()

    def _replace_containers(self):
        self.nodes = dict(self.nodes)
        self.edges = dict(self.edges)
        self._odom = dict(self._odom)
        return self

    def without_edges(self, eids) -> "PoseGraph":
        """Copy with the given edge ids removed (node set unchanged)."""
        drop = set(eids)
        g = PoseGraph(self.dim, dict(self.nodes))
        g._next_id = self._next_id
        for i, e in self.edges.items():
            if i not in drop:
                g.add_edge(e, eid=i)
        return g

    def check_chains(self):
        """Raise StructureError if some session has a frame without its odometry edge."""
        for s in self.sessions():
            frames = self.session_frames(s)
            for f in frames[:-1]:
                if NodeId(s, f) not in self._odom:
                    raise StructureError(f"session {s}: odometry chain broken after frame {f}")

    def __eq__(self, other):
        if not isinstance(other, PoseGraph):
            return NotImplemented
        return (self.dim == other.dim and self.nodes == other.nodes
                and list(self.edges.items()) == list(other.edges.items()))


def odometry_relative(g: PoseGraph, a: NodeId, b: NodeId) -> Pose:
    """Compose odometry measurements from ``a`` to ``b`` within one session."""
    a, b = NodeId(*a), NodeId(*b)
    if a.session != b.session:
        raise NotConnectedError(f"{a} and {b} lie in different sessions")
    if a.frame > b.frame:
        return inverse(odometry_relative(g, b, a))
    rel = identity(g.dim)
    for f in range(a.frame, b.frame):
        e = g.odometry_edge(NodeId(a.session, f))
        if e is None:
            raise NotConnectedError(f"no odometry edge leaving ({a.session},{f})")
        rel = compose(rel, e.z)
    return rel


class ChainIndex:
    """Dead-reckoned pose of every node relative to the start of its odometry segment.

    ``relative(a, b)`` then costs one ``between`` instead of a chain walk.
    Nodes in the same segment are odometry-connected.
    """

    def __init__(self, g: PoseGraph):
        self.pose = {}
        self.segment = {}
        seg = 0
        for s in g.sessions():
            prev = None
            for f in g.session_frames(s):
                n = NodeId(s, f)
                if prev is not None:
                    e = g.odometry_edge(prev)
                    if e is not None and e.target == n:
                        self.pose[n] = compose(self.pose[prev], e.z)
                        self.segment[n] = seg
                        prev = n
                        continue
                    seg += 1
                self.pose[n] = identity(g.dim)
                self.segment[n] = seg
                prev = n
            seg += 1

    def connected(self, a: NodeId, b: NodeId) -> bool:
        return self.segment[a] == self.segment[b]

    def relative(self, a: NodeId, b: NodeId) -> Pose:
        if not self.connected(a, b):
            raise NotConnectedError(f"{a} and {b} are not joined by odometry")
        return between(self.pose[a], self.pose[b])


def decimate(g: PoseGraph, k: int, return_map: bool = False):
    """Keep every ``k``-th frame and divide frame ids by ``k``.

    Odometry is re-composed over each k-step span.  A landmark edge is moved to
    the nearest kept frame of each endpoint (ties go to the lower frame) and the
    odometry offset is folded into its measurement, so it still constrains the
    same physical poses.  Landmark edges whose endpoints collapse onto one node
    are dropped.  With ``return_map`` the old-to-new edge id map is returned too.
    """
    if k < 1:
        raise ValueError("decimation factor must be >= 1")
    if k == 1:
        out = g.copy()
        return (out, {i: i for i in g.edges}) if return_map else out

    kept = {}
    for s in g.sessions():
        frames = [f for f in g.session_frames(s) if f % k == 0]
        kept[s] = frames

    def anchor(n: NodeId) -> NodeId:
        frames = kept[n.session]
        if not frames:
            raise NotConnectedError(f"session {n.session} keeps no frame at rate 1/{k}")
        lo = (n.frame // k) * k
        cands = [f for f in (lo, lo + k) if f in frames] or frames
        best = min(cands, key=lambda f: (abs(f - n.frame), f))
        return NodeId(n.session, best)

    out = PoseGraph(g.dim)
    for s, frames in kept.items():
        for f in frames:
            out.add_node(NodeId(s, f // k), g.nodes[NodeId(s, f)])
        for f in frames:
            nxt = f + k
            if nxt not in frames:
                continue
            try:
                z = odometry_relative(g, NodeId(s, f), NodeId(s, nxt))
            except NotConnectedError:
                continue
            info = _span_information(g, NodeId(s, f), k)
            out.add_edge(Edge(NodeId(s, f // k), NodeId(s, nxt // k), z, info, ODOMETRY))

    mapping = {}
    for i, e in g.edges.items():
        if e.is_odometry:
            continue
        u, v = anchor(e.source), anchor(e.target)
        if u == v:
            continue
        z = compose(compose(odometry_relative(g, u, e.source), e.z), odometry_relative(g, e.target, v))
        ne = Edge(NodeId(u.session, u.frame // k), NodeId(v.session, v.frame // k), z, e.info, LANDMARK)
        mapping[i] = out.add_edge(ne)
    return (out, mapping) if return_map else out


def _span_information(g: PoseGraph, start: NodeId, k: int) -> np.ndarray:
    # covariances of a k-step chain add up to first order
    cov = 0.0
    for f in range(start.frame, start.frame + k):
        e = g.odometry_edge(NodeId(start.session, f))
        cov = cov + np.linalg.inv(e.info)
    info = np.linalg.inv(cov)
    return 0.5 * (info + info.T)
