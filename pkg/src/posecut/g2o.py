"""g2o-style text I/O for pose graphs and ground-truth edge labels.

Node ids are encoded as ``session * offset + frame``; the offset is declared in
a ``# SESSION_OFFSET n`` comment (default 100000).  Edge kind is inferred:
odometry iff both endpoints share a session and the target is the next frame.
A landmark edge that happens to look like odometry is followed by a
``# EDGE_KIND i j landmark`` comment so it survives a round trip while
staying invisible to other g2o tools.

Labels live in a separate sidecar of ``EDGE_LABEL i j 0|1`` lines, 1 meaning
the edge is incorrect.
"""

from __future__ import annotations

import io
import math
from typing import Dict, Tuple

import numpy as np

from posecut.errors import ParseError, StructureError, ValidationError
from posecut.geometry import Pose2, Pose3
from posecut.posegraph import LANDMARK, ODOMETRY, Edge, NodeId, PoseGraph, is_consecutive, is_spd

DEFAULT_SESSION_OFFSET = 100000

CORRECT = "correct"
INCORRECT = "incorrect"

LabelSidecar = Dict[Tuple[NodeId, NodeId], str]


def _fmt(v: float) -> str:
    s = "%.17g" % v
    return "0" if s == "-0" else s


def encode(n: NodeId, offset: int = DEFAULT_SESSION_OFFSET) -> int:
    if n.frame >= offset:
        raise ValueError(f"frame {n.frame} does not fit under session offset {offset}")
    return n.session * offset + n.frame


def decode(i: int, offset: int = DEFAULT_SESSION_OFFSET) -> NodeId:
    if i < 0:
        raise ValueError("negative node id")
    return NodeId(i // offset, i % offset)


def _upper(m: np.ndarray):
    d = m.shape[0]
    return [m[r, c] for r in range(d) for c in range(r, d)]


def _from_upper(vals, d):
    m = np.zeros((d, d))
    k = 0
    for r in range(d):
        for c in range(r, d):
            m[r, c] = m[c, r] = vals[k]
            k += 1
    return m


def _float(tok, lineno):
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"not a number: {tok!r}", lineno) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value {tok!r}", lineno)
    return v


def _int(tok, lineno):
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"not an integer: {tok!r}", lineno) from None


def _header(text, lineno_hint=None):
    offset = DEFAULT_SESSION_OFFSET
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if len(parts) >= 2 and parts[0] == "#" and parts[1] == "SESSION_OFFSET":
            if len(parts) != 3:
                raise ParseError("SESSION_OFFSET takes one integer", lineno)
            offset = _int(parts[2], lineno)
            if offset <= 0:
                raise ParseError("SESSION_OFFSET must be positive", lineno)
    return offset


_RECORD_SIZES = {   # fields after the record tag
    "VERTEX_SE2": 4,
    "EDGE_SE2": 11,
    "VERTEX_SE3:QUAT": 8,
    "EDGE_SE3:QUAT": 30,
}


def read_g2o(text: str) -> PoseGraph:
    offset = _header(text)
    kind_tags = {}
    records = []
    dim = None
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        if parts[0].startswith("#"):
            if len(parts) >= 2 and parts[0] == "#" and parts[1] == "EDGE_KIND":
                if len(parts) != 5 or parts[4] not in (ODOMETRY, LANDMARK):
                    raise ParseError("EDGE_KIND takes two ids and odometry|landmark", lineno)
                key = (_int(parts[2], lineno), _int(parts[3], lineno))
                prev = records[-1] if records else None
                if prev is None or not prev[1].startswith("EDGE") or (int(prev[2][1]), int(prev[2][2])) != key:
                    raise ParseError("EDGE_KIND must follow the edge it describes", lineno)
                kind_tags[len(records) - 1] = parts[4]
            continue
        tag = parts[0]
        if tag not in _RECORD_SIZES:
            raise ParseError(f"unknown record type {tag!r}", lineno)
        if len(parts) - 1 != _RECORD_SIZES[tag]:
            raise ParseError(f"{tag} expects {_RECORD_SIZES[tag]} fields, got {len(parts) - 1}", lineno)
        rec_dim = 2 if tag.endswith("SE2") else 3
        if dim is None:
            dim = rec_dim
        elif dim != rec_dim:
            raise ParseError("file mixes SE2 and SE3 records", lineno)
        records.append((lineno, tag, parts))

    g = PoseGraph(dim or 2)
    for k, (lineno, tag, parts) in enumerate(records):
        try:
            if tag.startswith("VERTEX"):
                n = decode(_int(parts[1], lineno), offset)
                vals = [_float(p, lineno) for p in parts[2:]]
                if tag == "VERTEX_SE2":
                    pose = Pose2(*vals)
                else:
                    pose = Pose3(tuple(vals[:3]), (vals[6], vals[3], vals[4], vals[5]))
                if g.nodes.get(n) is not None:
                    raise ParseError(f"duplicate vertex {parts[1]}", lineno)
                g.add_node(n, pose)
            else:
                i, j = _int(parts[1], lineno), _int(parts[2], lineno)
                u, v = decode(i, offset), decode(j, offset)
                vals = [_float(p, lineno) for p in parts[3:]]
                if tag == "EDGE_SE2":
                    z = Pose2(*vals[:3])
                    info = _from_upper(vals[3:], 3)
                else:
                    z = Pose3(tuple(vals[:3]), (vals[6], vals[3], vals[4], vals[5]))
                    info = _from_upper(vals[7:], 6)
                if not is_spd(info):
                    raise ValidationError("information matrix is not symmetric positive definite", lineno)
                kind = kind_tags.get(k)
                if kind is None:
                    kind = ODOMETRY if is_consecutive(u, v) else LANDMARK
                g.add_edge(Edge(u, v, z, info, kind))
        except StructureError as exc:
            raise ParseError(str(exc), lineno) from exc
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from exc
    return g


def write_g2o(g: PoseGraph, offset: int = DEFAULT_SESSION_OFFSET) -> str:
    out = io.StringIO()
    out.write(f"# SESSION_OFFSET {offset}\n")
    for n in sorted(g.nodes, key=lambda n: encode(n, offset)):
        pose = g.nodes[n]
        i = encode(n, offset)
        if g.dim == 2:
            pose = pose or Pose2()
            out.write(f"VERTEX_SE2 {i} {_fmt(pose.x)} {_fmt(pose.y)} {_fmt(pose.theta)}\n")
        else:
            pose = pose or Pose3()
            w, x, y, z = pose.q
            vals = " ".join(_fmt(v) for v in (*pose.t, x, y, z, w))
            out.write(f"VERTEX_SE3:QUAT {i} {vals}\n")
    for e in g.edges.values():
        i, j = encode(e.source, offset), encode(e.target, offset)
        info = " ".join(_fmt(v) for v in _upper(e.info))
        if g.dim == 2:
            meas = " ".join(_fmt(v) for v in (e.z.x, e.z.y, e.z.theta))
            out.write(f"EDGE_SE2 {i} {j} {meas} {info}\n")
        else:
            w, x, y, z = e.z.q
            meas = " ".join(_fmt(v) for v in (*e.z.t, x, y, z, w))
            out.write(f"EDGE_SE3:QUAT {i} {j} {meas} {info}\n")
        if e.is_landmark and is_consecutive(e.source, e.target):
            out.write(f"# EDGE_KIND {i} {j} {LANDMARK}\n")
    return out.getvalue()


def read_labels(text: str) -> LabelSidecar:
    offset = _header(text)
    labels = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] != "EDGE_LABEL":
            raise ParseError(f"unknown record type {parts[0]!r}", lineno)
        if len(parts) != 4 or parts[3] not in ("0", "1"):
            raise ParseError("EDGE_LABEL takes two ids and 0|1", lineno)
        try:
            key = (decode(_int(parts[1], lineno), offset), decode(_int(parts[2], lineno), offset))
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from exc
        labels[key] = INCORRECT if parts[3] == "1" else CORRECT
    return labels


def write_labels(labels: LabelSidecar, offset: int = DEFAULT_SESSION_OFFSET) -> str:
    out = io.StringIO()
    out.write(f"# SESSION_OFFSET {offset}\n")
    for (u, v), lab in labels.items():
        flag = 1 if lab == INCORRECT else 0
        out.write(f"EDGE_LABEL {encode(u, offset)} {encode(v, offset)} {flag}\n")
    return out.getvalue()


def load_g2o(path) -> PoseGraph:
    with open(path, encoding="ascii") as fh:
        return read_g2o(fh.read())


def save_g2o(g: PoseGraph, path, offset: int = DEFAULT_SESSION_OFFSET):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(write_g2o(g, offset))


def load_labels(path) -> LabelSidecar:
    with open(path, encoding="ascii") as fh:
        return read_labels(fh.read())


def save_labels(labels: LabelSidecar, path, offset: int = DEFAULT_SESSION_OFFSET):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(write_labels(labels, offset))
