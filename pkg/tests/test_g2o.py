import math

import numpy as np
import pytest

from posecut.errors import ParseError, ValidationError
from posecut.g2o import (CORRECT, INCORRECT, decode, encode, load_g2o, read_g2o, read_labels, save_g2o,
                         write_g2o, write_labels)
from posecut.geometry import Pose2, Pose3
from posecut.posegraph import LANDMARK, ODOMETRY, Edge, NodeId, PoseGraph

MINIMAL = "VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 1 0 0\nEDGE_SE2 0 1 1 0 0 1 0 0 1 0 1\n"


def random_info(rng, d):
    A = rng.normal(size=(d, d))
    return A @ A.T + d * np.eye(d)


def random_graph(rng, dim, sessions=2, frames=5, n_landmarks=4):
    g = PoseGraph(dim)

    def pose():
        if dim == 2:
            return Pose2(*rng.normal(size=2) * 10, rng.uniform(-math.pi, math.pi))
        return Pose3(tuple(rng.normal(size=3) * 10), tuple(rng.normal(size=4)))

    d = 3 if dim == 2 else 6
    for s in range(sessions):
        for f in range(frames):
            g.add_node((s, f), pose())
        for f in range(frames - 1):
            g.add_edge(Edge((s, f), (s, f + 1), pose(), random_info(rng, d), ODOMETRY))
    for _ in range(n_landmarks):
        a = (int(rng.integers(sessions)), int(rng.integers(frames)))
        b = (int(rng.integers(sessions)), int(rng.integers(frames)))
        if a != b:
            g.add_edge(Edge(a, b, pose(), random_info(rng, d), LANDMARK))
    # a landmark edge shaped like odometry needs the kind tag to survive
    g.add_edge(Edge((0, 1), (0, 2), pose(), np.eye(d), LANDMARK))
    return g


def test_minimal_file():
    g = read_g2o(MINIMAL)
    assert len(g.nodes) == 2
    assert len(g.odometry_ids()) == 1 and not g.landmark_ids()


def test_session_decoding():
    g = read_g2o("# SESSION_OFFSET 100000\nVERTEX_SE2 100005 0 0 0\n")
    assert list(g.nodes) == [NodeId(1, 5)]
    assert decode(encode(NodeId(3, 7), 1000), 1000) == NodeId(3, 7)
    with pytest.raises(ValueError):
        encode(NodeId(0, 1000), 1000)


def test_custom_offset_round_trip():
    g = read_g2o("# SESSION_OFFSET 50\nVERTEX_SE2 51 0 0 0\nVERTEX_SE2 52 1 0 0\nEDGE_SE2 51 52 1 0 0 1 0 0 1 0 1\n")
    assert g.odometry_edge(NodeId(1, 1)) is not None
    assert "VERTEX_SE2 51" in write_g2o(g, 50)


@pytest.mark.parametrize("dim", [2, 3])
def test_round_trip_random_graphs(dim):
    rng = np.random.default_rng(dim)
    for _ in range(100):
        g = random_graph(rng, dim)
        text = write_g2o(g)
        h = read_g2o(text)
        assert h == g
        assert write_g2o(h) == text


def test_empty_graph_is_header_only():
    text = write_g2o(PoseGraph(2))
    assert all(line.startswith("#") for line in text.splitlines())
    assert len(read_g2o(text).nodes) == 0


def test_se3_vertex_field_count():
    g = PoseGraph(3)
    g.add_node((0, 0), Pose3((1, 2, 3)))
    line = [l for l in write_g2o(g).splitlines() if l.startswith("VERTEX")][0]
    assert len(line.split()) - 1 == 8


def test_edge_kind_tag_round_trip():
    rng = np.random.default_rng(0)
    g = random_graph(rng, 2)
    text = write_g2o(g)
    assert "# EDGE_KIND 1 2 landmark" in text
    h = read_g2o(text)
    assert len(h.landmark_ids()) == len(g.landmark_ids())


@pytest.mark.parametrize("text, lineno", [
    ("VERTEX_SE2 0 0 0\n", 1),
    ("VERTEX_SE2 0 0 0 0\nVERTEX_XY 1 2 3\n", 2),
    ("VERTEX_SE2 0 a 0 0\n", 1),
    ("VERTEX_SE2 0 0 0 0\nVERTEX_SE2 0 0 0 0\n", 2),
    ("EDGE_SE2 0 1 1 0 0 1 0 0 1 0\n", 1),
    ("VERTEX_SE2 0 0 0 0\nVERTEX_SE3:QUAT 1 0 0 0 0 0 0 1\n", 2),
    ("EDGE_SE2 0 0 1 0 0 1 0 0 1 0 1\n", 1),
])
def test_parse_errors_carry_line_numbers(text, lineno):
    with pytest.raises(ParseError) as info:
        read_g2o(text)
    assert info.value.lineno == lineno


def test_non_spd_information_rejected():
    with pytest.raises(ValidationError):
        read_g2o("EDGE_SE2 0 1 1 0 0 1 0 0 -1 0 1\n")


def test_locale_independent_numbers():
    with pytest.raises(ParseError):
        read_g2o("VERTEX_SE2 0 1,5 0 0\n")
    g = read_g2o("VERTEX_SE2 0 1.5e0 -0.25 0\n")
    assert g.nodes[NodeId(0, 0)].x == 1.5


def test_seventeen_digits_exact():
    g = PoseGraph(2)
    g.add_node((0, 0), Pose2(0.1, 1 / 3, 2.0 ** -40))
    assert read_g2o(write_g2o(g)).nodes[NodeId(0, 0)] == g.nodes[NodeId(0, 0)]


def test_labels_round_trip():
    labels = {(NodeId(0, 1), NodeId(1, 4)): CORRECT, (NodeId(0, 7), NodeId(1, 2)): INCORRECT}
    text = write_labels(labels)
    assert "EDGE_LABEL 7 100002 1" in text
    assert read_labels(text) == labels
    with pytest.raises(ParseError):
        read_labels("EDGE_LABEL 1 2 3\n")


def test_file_helpers(tmp_path):
    g = read_g2o(MINIMAL)
    save_g2o(g, tmp_path / "a.g2o")
    assert load_g2o(tmp_path / "a.g2o") == g
