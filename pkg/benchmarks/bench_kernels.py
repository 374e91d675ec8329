"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel: best-of-N wall time for each backend and the
speed-up.  Both backends are also checked to agree on the inputs used.
"""

import argparse
import sys
import timeit

import numpy as np

from posecut import _pykernels

try:
    from posecut import _ckernels
except ImportError:
    _ckernels = None


def _se2_inputs(rng, n_nodes=2000, n_edges=6000):
    poses = np.column_stack([rng.normal(size=(n_nodes, 2)) * 20, rng.uniform(-np.pi, np.pi, n_nodes)])
    src = rng.integers(0, n_nodes, n_edges)
    dst = (src + rng.integers(1, n_nodes, n_edges)) % n_nodes
    meas = np.column_stack([rng.normal(size=(n_edges, 2)), rng.uniform(-np.pi, np.pi, n_edges)])
    W = np.broadcast_to(np.diag([20.0, 20.0, 100.0]), (n_edges, 3, 3)).copy()
    return poses, src.astype(np.int64), dst.astype(np.int64), meas, W


def _loop_inputs(rng, m=600):
    def p():
        return np.column_stack([rng.normal(size=(m, 2)) * 10, rng.uniform(-np.pi, np.pi, m)])
    return p(), p(), p()


def _clique_input(rng, n=60, density=0.5):
    # planted clique of 12 in a random graph
    a = rng.random((n, n)) < density
    a = np.triu(a, 1)
    a = a | a.T
    k = rng.choice(n, 12, replace=False)
    a[np.ix_(k, k)] = True
    np.fill_diagonal(a, False)
    return a.astype(np.uint8)


def _partition_input(rng, n=9):
    iu = np.triu_indices(n, 1)
    keep = rng.random(len(iu[0])) < 0.5
    eu, ev = iu[0][keep].astype(np.int64), iu[1][keep].astype(np.int64)
    cost = rng.choice([-1.0, 1.0], len(eu))
    return n, eu, ev, cost


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    if isinstance(a, list):
        return a == b
    if isinstance(a, (int, float)):
        return abs(a - b) <= 1e-9
    return np.allclose(a, b, atol=1e-9)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; nothing to compare", file=sys.stderr)
        return 1
    rng = np.random.default_rng(7)
    cases = [
        ("se2_linearize", _se2_inputs(rng)),
        ("se2_loop_errors", _loop_inputs(rng)),
        ("max_clique", (_clique_input(rng),)),
        ("best_partition", _partition_input(rng)),
    ]
    print(f"{'kernel':<18}{'python ms':>12}{'cython ms':>12}{'speed-up':>10}  agree")
    for name, args_ in cases:
        py, cy = getattr(_pykernels, name), getattr(_ckernels, name)
        agree = _same(py(*args_), cy(*args_))
        t_py = min(timeit.repeat(lambda: py(*args_), number=1, repeat=args.repeat)) * 1e3
        t_cy = min(timeit.repeat(lambda: cy(*args_), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<18}{t_py:>12.2f}{t_cy:>12.2f}{t_py / t_cy:>9.1f}x  {agree}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
