"""Reference implementations of the hot kernels (numpy / pure Python).

Same signatures and results as the compiled ``_ckernels`` module; used when
the extension is not built or ``POSECUT_PURE_PYTHON`` is set.
"""

import numpy as np

_SERIES = 1e-3


def _wrap(a):
    return a - 2.0 * np.pi * np.ceil((a - np.pi) / (2.0 * np.pi))


def _jr_coeffs(th):
    """sin(th)/th, (1-cos th)/th^2, (th - sin th)/th^2 with series near zero."""
    small = np.abs(th) < _SERIES
    safe = np.where(small, 1.0, th)
    t2 = th * th
    a = np.where(small, 1.0 - t2 / 6.0 + t2 * t2 / 120.0, np.sin(safe) / safe)
    half = np.sin(0.5 * safe)
    f1 = np.where(small, 0.5 - t2 / 24.0 + t2 * t2 / 720.0, 2.0 * half * half / (safe * safe))
    f2 = np.where(small, th / 6.0 - th * t2 / 120.0, (safe - np.sin(safe)) / (safe * safe))
    return a, f1, f2


def se2_linearize(poses, src, dst, meas, sqrt_info):
    """Whitened SE(2) between-residuals and their Jacobians.

    For each edge k the error is ``log(z^-1 * (X_src^-1 * X_dst))``; the
    Jacobians are taken w.r.t. right-multiplicative perturbations
    ``X <- X * exp(d)`` of the two endpoint poses.

    Returns
    -------
    res : (m, 3)
    Ji, Jj : (m, 3, 3)
    """
    poses = np.asarray(poses, dtype=float)
    xi, xj = poses[src], poses[dst]
    c, s = np.cos(xi[:, 2]), np.sin(xi[:, 2])
    dx, dy = xj[:, 0] - xi[:, 0], xj[:, 1] - xi[:, 1]
    rx = c * dx + s * dy
    ry = -s * dx + c * dy
    rth = xj[:, 2] - xi[:, 2]
    cz, sz = np.cos(meas[:, 2]), np.sin(meas[:, 2])
    ex0, ey0 = rx - meas[:, 0], ry - meas[:, 1]
    ex = cz * ex0 + sz * ey0
    ey = -sz * ex0 + cz * ey0
    eth = _wrap(rth - meas[:, 2])

    a, f1, f2 = _jr_coeffs(eth)
    b = eth * f1
    det = a * a + b * b
    # log: V^-1 applied to the translation
    r0 = (a * ex + b * ey) / det
    r1 = (-b * ex + a * ey) / det
    # right Jacobian third column, top part
    u0 = r0 * f2 - r1 * f1
    u1 = r0 * f1 + r1 * f2
    m = len(src)
    Jinv = np.zeros((m, 3, 3))
    Jinv[:, 0, 0] = a / det
    Jinv[:, 0, 1] = -b / det
    Jinv[:, 1, 0] = b / det
    Jinv[:, 1, 1] = a / det
    Jinv[:, 0, 2] = -(a * u0 - b * u1) / det
    Jinv[:, 1, 2] = -(b * u0 + a * u1) / det
    Jinv[:, 2, 2] = 1.0

    # adjoint of rel^-1
    cr, sr = np.cos(rth), np.sin(rth)
    ix = -cr * rx - sr * ry
    iy = sr * rx - cr * ry
    Ad = np.zeros((m, 3, 3))
    Ad[:, 0, 0] = cr
    Ad[:, 0, 1] = sr
    Ad[:, 1, 0] = -sr
    Ad[:, 1, 1] = cr
    Ad[:, 0, 2] = iy
    Ad[:, 1, 2] = -ix
    Ad[:, 2, 2] = 1.0

    Jj = Jinv
    Ji = -np.einsum("kab,kbc->kac", Jinv, Ad)
    e = np.stack([r0, r1, eth], axis=1)
    res = np.einsum("kab,kb->ka", sqrt_info, e)
    return res, np.einsum("kab,kbc->kac", sqrt_info, Ji), np.einsum("kab,kbc->kac", sqrt_info, Jj)


def _se2_compose(a, b):
    c, s = np.cos(a[..., 2]), np.sin(a[..., 2])
    return np.stack([
        a[..., 0] + c * b[..., 0] - s * b[..., 1],
        a[..., 1] + s * b[..., 0] + c * b[..., 1],
        a[..., 2] + b[..., 2],
    ], axis=-1)


def _se2_between(a, b):
    c, s = np.cos(a[..., 2]), np.sin(a[..., 2])
    dx, dy = b[..., 0] - a[..., 0], b[..., 1] - a[..., 1]
    return np.stack([c * dx + s * dy, -s * dx + c * dy, b[..., 2] - a[..., 2]], axis=-1)


def _se2_inverse(a):
    c, s = np.cos(a[..., 2]), np.sin(a[..., 2])
    return np.stack([-c * a[..., 0] - s * a[..., 1], s * a[..., 0] - c * a[..., 1], -a[..., 2]], axis=-1)


def se2_loop_errors(pf, pt, z):
    """Translation norm and |rotation| of the four-edge loop for every edge pair.

    Entry (a, b) with a < b is the loop
    ``z_a^-1 * (pf_a^-1 pf_b) * z_b * (pt_b^-1 pt_a)``; the lower triangle
    mirrors the upper one so the relation is symmetric by construction.
    """
    pf, pt, z = (np.asarray(v, dtype=float) for v in (pf, pt, z))
    m = len(z)
    A = slice(None), None
    B = None, slice(None)
    zinv = _se2_inverse(z)
    o1 = _se2_between(pf[A], pf[B])
    o2 = _se2_between(pt[B], pt[A])
    L = _se2_compose(_se2_compose(_se2_compose(zinv[A], o1), np.broadcast_to(z[B], o1.shape)), o2)
    trans = np.hypot(L[..., 0], L[..., 1])
    rot = np.abs(_wrap(L[..., 2]))
    iu = np.triu_indices(m, 1)
    T = np.zeros((m, m))
    R = np.zeros((m, m))
    T[iu] = trans[iu]
    R[iu] = rot[iu]
    return T + T.T, R + R.T


def _bits(i):
    while i:
        low = i & -i
        yield low.bit_length() - 1
        i ^= low


def max_clique(adj):
    """Maximum clique with lexicographically smallest sorted vertex list.

    Pass 1 finds the clique number with pivoted Bron-Kerbosch and a size
    bound; pass 2 walks cliques in lexicographic order and stops at the first
    one of that size.
    """
    adj = np.asarray(adj, dtype=bool)
    n = adj.shape[0]
    if n == 0:
        return []
    nb = []
    for v in range(n):
        mask = 0
        for u in np.flatnonzero(adj[v]):
            if u != v:
                mask |= 1 << int(u)
        nb.append(mask)

    best = 0

    def expand(r, P, X):
        nonlocal best
        if not P:
            if r > best:
                best = r
            return
        if r + bin(P).count("1") <= best:
            return
        PX = P | X
        pivot = max(_bits(PX), key=lambda u: bin(P & nb[u]).count("1"))
        for v in list(_bits(P & ~nb[pivot])):
            expand(r + 1, P & nb[v], X & nb[v])
            P &= ~(1 << v)
            X |= 1 << v
            if r + bin(P).count("1") <= best:
                return

    expand(0, (1 << n) - 1, 0)
    omega = best
    chosen = []

    def find(P):
        if len(chosen) == omega:
            return True
        while P:
            if len(chosen) + bin(P).count("1") < omega:
                return False
            low = P & -P
            v = low.bit_length() - 1
            P ^= low
            chosen.append(v)
            # keep only later neighbours so each clique is visited once, in order
            if find(P & nb[v]):
                return True
            chosen.pop()
        return False

    find((1 << n) - 1)
    return chosen


def best_partition(n, eu, ev, cost, tol=1e-12):
    """Exhaustive minimum of sum(cost_e * [label_u != label_v]) over set partitions.

    Partitions are restricted-growth strings visited in lexicographic order.
    Ties go to fewer blocks, then to the earlier string.

    Returns ``(labels, objective, n_partitions)``.
    """
    eu = np.asarray(eu, dtype=np.int64)
    ev = np.asarray(ev, dtype=np.int64)
    cost = np.asarray(cost, dtype=float)
    if n == 0:
        return np.zeros(0, dtype=np.int64), 0.0, 1
    A = np.zeros((1, 1), dtype=np.int8)
    mx = np.zeros(1, dtype=np.int8)
    for _ in range(1, n):
        counts = mx.astype(np.int64) + 2
        total = int(counts.sum())
        starts = np.repeat(np.cumsum(counts) - counts, counts)
        newcol = (np.arange(total) - starts).astype(np.int8)
        A = np.repeat(A, counts, axis=0)
        mx = np.maximum(np.repeat(mx, counts), newcol)
        A = np.concatenate([A, newcol[:, None]], axis=1)
    obj = np.zeros(len(A))
    for u, v, c in zip(eu, ev, cost):
        obj += c * (A[:, u] != A[:, v])
    best = obj.min()
    cand = np.flatnonzero(obj <= best + tol)
    blocks = mx[cand]
    pick = cand[np.flatnonzero(blocks == blocks.min())[0]]
    return A[pick].astype(np.int64), float(obj[pick]), len(A)
