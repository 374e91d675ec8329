"""Small graph builders shared by the tests."""

import numpy as np

from posecut.geometry import Pose2, between
from posecut.posegraph import LANDMARK, ODOMETRY, Edge, NodeId, PoseGraph


def chain_graph(truth, sessions, info=None, landmarks=()):
    """Noise-free graph over ``truth`` (dict NodeId -> Pose) with given landmark pairs."""
    dim = next(iter(truth.values())).dim
    info = np.eye(3 if dim == 2 else 6) if info is None else info
    g = PoseGraph(dim)
    for n in sorted(truth):
        g.add_node(n, truth[n])
    for s in sessions:
        frames = sorted(n.frame for n in truth if n.session == s)
        for a, b in zip(frames, frames[1:]):
            u, v = NodeId(s, a), NodeId(s, b)
            g.add_edge(Edge(u, v, between(truth[u], truth[v]), info, ODOMETRY))
    for u, v in landmarks:
        g.add_edge(Edge(u, v, between(truth[u], truth[v]), info, LANDMARK))
    return g


def straight_sessions(n=10, gap=0.0):
    """Two sessions walking the same line (session 1 shifted by ``gap`` in y)."""
    truth = {}
    for s in (0, 1):
        for f in range(n):
            truth[NodeId(s, f)] = Pose2(float(f), gap * s, 0.0)
    return truth
