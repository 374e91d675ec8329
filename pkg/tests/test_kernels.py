import math

import numpy as np
import pytest

from oracles import brute_force_clique_size, brute_force_multicut, random_graph
from posecut import kernels
from posecut.geometry import Pose2, between, compose, exp_map, inverse, log_map, rotation_angle, translation_norm


def test_backend_reported():
    assert kernels.BACKEND in ("python", "cython")


def random_se2_problem(rng, n=15, m=40, spread=5.0):
    poses = np.column_stack([rng.normal(size=(n, 2)) * spread, rng.uniform(-math.pi, math.pi, n)])
    src = rng.integers(0, n, m)
    dst = (src + rng.integers(1, n, m)) % n
    meas = np.column_stack([rng.normal(size=(m, 2)) * spread, rng.uniform(-math.pi, math.pi, m)])
    W = np.array([np.linalg.cholesky(np.eye(3) + 0.3 * np.outer(v, v)).T for v in rng.normal(size=(m, 3))])
    return poses, src.astype(np.int64), dst.astype(np.int64), meas, W


def geometric_residual(xi, xj, z, W):
    return W @ log_map(between(Pose2(*z), between(Pose2(*xi), Pose2(*xj))))


def test_se2_linearize_residual_matches_geometry(backend, rng):
    poses, src, dst, meas, W = random_se2_problem(rng)
    res, _, _ = backend.se2_linearize(poses, src, dst, meas, W)
    for k in range(len(src)):
        want = geometric_residual(poses[src[k]], poses[dst[k]], meas[k], W[k])
        assert np.allclose(res[k], want, atol=1e-10)


def test_se2_jacobians_match_finite_differences(backend, rng):
    poses, src, dst, meas, W = random_se2_problem(rng)
    # include the small-angle series branch
    meas[:5, 2] = poses[dst[:5], 2] - poses[src[:5], 2] + rng.normal(size=5) * 1e-5
    _, Ji, Jj = backend.se2_linearize(poses, src, dst, meas, W)
    h = 1e-6
    for k in range(len(src)):
        xi, xj = Pose2(*poses[src[k]]), Pose2(*poses[dst[k]])
        for c in range(3):
            d = np.zeros(3)
            d[c] = h

            def r(a, b):
                return geometric_residual(a.as_array(), b.as_array(), meas[k], W[k])

            num_i = (r(compose(xi, exp_map(d)), xj) - r(compose(xi, exp_map(-d)), xj)) / (2 * h)
            num_j = (r(xi, compose(xj, exp_map(d))) - r(xi, compose(xj, exp_map(-d)))) / (2 * h)
            assert np.allclose(Ji[k, :, c], num_i, atol=1e-6)
            assert np.allclose(Jj[k, :, c], num_j, atol=1e-6)


def test_se2_loop_errors_match_compose(backend, rng):
    m = 12
    mk = lambda: np.column_stack([rng.normal(size=(m, 2)) * 4, rng.uniform(-math.pi, math.pi, m)])
    pf, pt, z = mk(), mk(), mk()
    T, R = backend.se2_loop_errors(pf, pt, z)
    assert np.array_equal(T, T.T) and np.array_equal(R, R.T)
    P = lambda a: Pose2(*a)
    for a in range(m):
        for b in range(a + 1, m):
            L = compose(compose(compose(inverse(P(z[a])), between(P(pf[a]), P(pf[b]))), P(z[b])),
                        between(P(pt[b]), P(pt[a])))
            assert T[a, b] == pytest.approx(translation_norm(L), abs=1e-9)
            assert R[a, b] == pytest.approx(rotation_angle(L), abs=1e-9)


def test_max_clique_matches_brute_force(backend, rng):
    for _ in range(40):
        n = int(rng.integers(1, 14))
        adj = random_graph(rng, n, rng.uniform(0.2, 0.9))
        got = backend.max_clique(adj.astype(np.uint8))
        assert len(got) == brute_force_clique_size(adj)
        assert all(adj[a, b] for a in got for b in got if a != b)


def test_max_clique_lexicographic_tie_break(backend):
    # two disjoint triangles: {0,1,2} beats {3,4,5}; then {1,2,3} beats {2,3,4}
    adj = np.zeros((6, 6), dtype=np.uint8)
    for tri in ((3, 4, 5), (0, 1, 2)):
        for a in tri:
            for b in tri:
                if a != b:
                    adj[a, b] = 1
    assert list(backend.max_clique(adj)) == [0, 1, 2]
    adj2 = np.zeros((5, 5), dtype=np.uint8)
    for tri in ((2, 3, 4), (1, 2, 3)):
        for a in tri:
            for b in tri:
                if a != b:
                    adj2[a, b] = 1
    assert list(backend.max_clique(adj2)) == [1, 2, 3]


def test_best_partition_matches_enumeration(backend, rng):
    for _ in range(30):
        n = int(rng.integers(1, 8))
        pairs = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.5]
        cost = rng.choice([-1.0, 1.0, 2.5, -0.5], len(pairs))
        eu = np.array([p[0] for p in pairs], dtype=np.int64)
        ev = np.array([p[1] for p in pairs], dtype=np.int64)
        labels, obj, count = backend.best_partition(n, eu, ev, cost)
        want, want_count = brute_force_multicut(n, [(u, v, c) for (u, v), c in zip(pairs, cost)])
        assert obj == pytest.approx(want)
        assert count == want_count
        assert sum(c for (u, v), c in zip(pairs, cost) if labels[u] != labels[v]) == pytest.approx(want)


def test_backends_agree(rng):
    from conftest import BACKENDS
    if len(BACKENDS) < 2:
        pytest.skip("compiled extension not built")
    py, cy = BACKENDS["python"], BACKENDS["cython"]
    args = random_se2_problem(rng)
    for a, b in zip(py.se2_linearize(*args), cy.se2_linearize(*args)):
        assert np.allclose(a, b, atol=1e-12)
    for _ in range(20):
        adj = random_graph(rng, 25, 0.6).astype(np.uint8)
        assert list(py.max_clique(adj)) == list(cy.max_clique(adj))
    eu, ev = np.triu_indices(8, 1)
    cost = rng.choice([-1.0, 1.0], len(eu))
    lp, op, cp = py.best_partition(8, eu.astype(np.int64), ev.astype(np.int64), cost)
    lc, oc, cc = cy.best_partition(8, eu.astype(np.int64), ev.astype(np.int64), cost)
    assert list(lp) == list(lc) and op == oc and cp == cc == 4140
