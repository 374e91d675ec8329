# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels.  Contracts are documented in ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, sqrt, fabs, ceil, M_PI
from libc.stdlib cimport malloc, calloc, free
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef double _SERIES = 1e-3


cdef inline double _wrap(double a) nogil:
    return a - 2.0 * M_PI * ceil((a - M_PI) / (2.0 * M_PI))


def se2_linearize(double[:, ::1] poses, const int64_t[::1] src, const int64_t[::1] dst,
                  double[:, ::1] meas, double[:, :, ::1] sqrt_info):
    cdef Py_ssize_t m = src.shape[0]
    res_a = np.empty((m, 3))
    ji_a = np.empty((m, 3, 3))
    jj_a = np.empty((m, 3, 3))
    cdef double[:, ::1] res = res_a
    cdef double[:, :, ::1] Ji = ji_a
    cdef double[:, :, ::1] Jj = jj_a
    cdef Py_ssize_t k, r, col, q
    cdef int64_t i, j
    cdef double c, s, dx, dy, rx, ry, rth, cz, sz, ex0, ey0, ex, ey, eth
    cdef double a, f1, f2, b, det, t2, half, r0, r1, u0, u1, cr, sr, ix, iy, acc
    cdef double Jinv[3][3]
    cdef double Ad[3][3]
    cdef double Jl[3][3]
    cdef double e[3]
    with nogil:
        for k in range(m):
            i = src[k]
            j = dst[k]
            c = cos(poses[i, 2])
            s = sin(poses[i, 2])
            dx = poses[j, 0] - poses[i, 0]
            dy = poses[j, 1] - poses[i, 1]
            rx = c * dx + s * dy
            ry = -s * dx + c * dy
            rth = poses[j, 2] - poses[i, 2]
            cz = cos(meas[k, 2])
            sz = sin(meas[k, 2])
            ex0 = rx - meas[k, 0]
            ey0 = ry - meas[k, 1]
            ex = cz * ex0 + sz * ey0
            ey = -sz * ex0 + cz * ey0
            eth = _wrap(rth - meas[k, 2])

            t2 = eth * eth
            if fabs(eth) < _SERIES:
                a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0
                f1 = 0.5 - t2 / 24.0 + t2 * t2 / 720.0
                f2 = eth / 6.0 - eth * t2 / 120.0
            else:
                a = sin(eth) / eth
                half = sin(0.5 * eth)
                f1 = 2.0 * half * half / t2
                f2 = (eth - sin(eth)) / t2
            b = eth * f1
            det = a * a + b * b
            r0 = (a * ex + b * ey) / det
            r1 = (-b * ex + a * ey) / det
            u0 = r0 * f2 - r1 * f1
            u1 = r0 * f1 + r1 * f2

            Jinv[0][0] = a / det
            Jinv[0][1] = -b / det
            Jinv[0][2] = -(a * u0 - b * u1) / det
            Jinv[1][0] = b / det
            Jinv[1][1] = a / det
            Jinv[1][2] = -(b * u0 + a * u1) / det
            Jinv[2][0] = 0.0
            Jinv[2][1] = 0.0
            Jinv[2][2] = 1.0

            cr = cos(rth)
            sr = sin(rth)
            ix = -cr * rx - sr * ry
            iy = sr * rx - cr * ry
            Ad[0][0] = cr
            Ad[0][1] = sr
            Ad[0][2] = iy
            Ad[1][0] = -sr
            Ad[1][1] = cr
            Ad[1][2] = -ix
            Ad[2][0] = 0.0
            Ad[2][1] = 0.0
            Ad[2][2] = 1.0

            for r in range(3):
                for col in range(3):
                    acc = 0.0
                    for q in range(3):
                        acc = acc + Jinv[r][q] * Ad[q][col]
                    Jl[r][col] = -acc

            e[0] = r0
            e[1] = r1
            e[2] = eth
            for r in range(3):
                acc = 0.0
                for q in range(3):
                    acc = acc + sqrt_info[k, r, q] * e[q]
                res[k, r] = acc
                for col in range(3):
                    acc = 0.0
                    for q in range(3):
                        acc = acc + sqrt_info[k, r, q] * Jl[q][col]
                    Ji[k, r, col] = acc
                    acc = 0.0
                    for q in range(3):
                        acc = acc + sqrt_info[k, r, q] * Jinv[q][col]
                    Jj[k, r, col] = acc
    return res_a, ji_a, jj_a


cdef inline void _compose(double* a, double* b, double* out) nogil:
    cdef double c = cos(a[2]), s = sin(a[2])
    cdef double x = a[0] + c * b[0] - s * b[1]
    cdef double y = a[1] + s * b[0] + c * b[1]
    out[0] = x
    out[1] = y
    out[2] = a[2] + b[2]


cdef inline void _between(double* a, double* b, double* out) nogil:
    cdef double c = cos(a[2]), s = sin(a[2])
    cdef double dx = b[0] - a[0], dy = b[1] - a[1]
    out[0] = c * dx + s * dy
    out[1] = -s * dx + c * dy
    out[2] = b[2] - a[2]


def se2_loop_errors(double[:, ::1] pf, double[:, ::1] pt, double[:, ::1] z):
    cdef Py_ssize_t m = z.shape[0]
    T_a = np.zeros((m, m))
    R_a = np.zeros((m, m))
    cdef double[:, ::1] T = T_a
    cdef double[:, ::1] R = R_a
    cdef Py_ssize_t a, b
    cdef double zinv[3]
    cdef double o1[3]
    cdef double o2[3]
    cdef double L[3]
    cdef double c, s, tn, rn
    with nogil:
        for a in range(m):
            c = cos(z[a, 2])
            s = sin(z[a, 2])
            zinv[0] = -c * z[a, 0] - s * z[a, 1]
            zinv[1] = s * z[a, 0] - c * z[a, 1]
            zinv[2] = -z[a, 2]
            for b in range(a + 1, m):
                _between(&pf[a, 0], &pf[b, 0], o1)
                _between(&pt[b, 0], &pt[a, 0], o2)
                _compose(zinv, o1, L)
                _compose(L, &z[b, 0], L)
                _compose(L, o2, L)
                tn = sqrt(L[0] * L[0] + L[1] * L[1])
                rn = fabs(_wrap(L[2]))
                T[a, b] = tn
                T[b, a] = tn
                R[a, b] = rn
                R[b, a] = rn
    return T_a, R_a


# -- maximum clique on word bitsets -------------------------------------------

cdef struct CliqueSearch:
    int n
    int W
    uint64_t* nb      # n * W
    uint64_t* buf     # scratch: (n + 2) * 2 * W
    int best
    int omega
    int* chosen
    int depth


cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil
    int __builtin_ctzll(unsigned long long) nogil


cdef inline int _popcount(uint64_t* s, int W) nogil:
    cdef int k, c = 0
    for k in range(W):
        c += __builtin_popcountll(s[k])
    return c


cdef inline bint _empty(uint64_t* s, int W) nogil:
    cdef int k
    for k in range(W):
        if s[k]:
            return False
    return True


cdef void _expand(CliqueSearch* C, int level, int r, uint64_t* P, uint64_t* X) nogil:
    cdef int W = C.W
    cdef int k, u, v, cnt, bestcnt, pivot
    cdef uint64_t word, low
    cdef uint64_t* nP
    cdef uint64_t* nX
    cdef uint64_t* nbu
    if _empty(P, W):
        if r > C.best:
            C.best = r
        return
    if r + _popcount(P, W) <= C.best:
        return
    # pivot from P | X maximizing |P & N(u)|, lowest id on ties
    pivot = -1
    bestcnt = -1
    for k in range(W):
        word = P[k] | X[k]
        while word:
            low = word & (~word + 1)
            u = k * 64 + __builtin_ctzll(word)
            word ^= low
            nbu = C.nb + u * W
            cnt = 0
            for v in range(W):
                cnt += __builtin_popcountll(P[v] & nbu[v])
            if cnt > bestcnt:
                bestcnt = cnt
                pivot = u
    nP = C.buf + (level + 1) * 2 * W
    nX = nP + W
    nbu = C.nb + pivot * W
    for k in range(W):
        word = P[k] & ~nbu[k]
        while word:
            low = word & (~word + 1)
            v = k * 64 + __builtin_ctzll(word)
            word ^= low
            for u in range(W):
                nP[u] = P[u] & C.nb[v * W + u]
                nX[u] = X[u] & C.nb[v * W + u]
            _expand(C, level + 1, r + 1, nP, nX)
            P[k] &= ~low
            X[k] |= low
            if r + _popcount(P, W) <= C.best:
                return


cdef bint _find(CliqueSearch* C, int level, uint64_t* P) nogil:
    cdef int W = C.W
    cdef int k, v, u
    cdef uint64_t low
    cdef uint64_t* nP
    if C.depth == C.omega:
        return True
    nP = C.buf + (level + 1) * 2 * W
    for k in range(W):
        while P[k]:
            if C.depth + _popcount(P, W) < C.omega:
                return False
            low = P[k] & (~P[k] + 1)
            v = k * 64 + __builtin_ctzll(P[k])
            P[k] ^= low
            C.chosen[C.depth] = v
            C.depth += 1
            for u in range(W):
                nP[u] = P[u] & C.nb[v * W + u]
            if _find(C, level + 1, nP):
                return True
            C.depth -= 1
    return False


def max_clique(adj):
    a = np.ascontiguousarray(np.asarray(adj, dtype=np.uint8))
    cdef Py_ssize_t n = a.shape[0]
    if n == 0:
        return []
    cdef const unsigned char[:, ::1] A = a
    cdef CliqueSearch C
    cdef int i, j, k
    C.n = <int>n
    C.W = <int>((n + 63) // 64)
    C.nb = <uint64_t*>calloc(n * C.W, sizeof(uint64_t))
    C.buf = <uint64_t*>calloc((n + 2) * 2 * C.W, sizeof(uint64_t))
    C.chosen = <int*>calloc(n + 1, sizeof(int))
    if C.nb == NULL or C.buf == NULL or C.chosen == NULL:
        free(C.nb)
        free(C.buf)
        free(C.chosen)
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                for j in range(n):
                    if i != j and A[i, j]:
                        C.nb[i * C.W + j // 64] |= (<uint64_t>1) << (j % 64)
            C.best = 0
            for k in range(C.W):
                C.buf[k] = 0
                C.buf[C.W + k] = 0
            for i in range(n):
                C.buf[i // 64] |= (<uint64_t>1) << (i % 64)
            _expand(&C, 0, 0, C.buf, C.buf + C.W)
            C.omega = C.best
            C.depth = 0
            for k in range(C.W):
                C.buf[k] = 0
            for i in range(n):
                C.buf[i // 64] |= (<uint64_t>1) << (i % 64)
            _find(&C, 0, C.buf)
        return [C.chosen[i] for i in range(C.depth)]
    finally:
        free(C.nb)
        free(C.buf)
        free(C.chosen)


# -- exhaustive set-partition search --------------------------------------------

cdef struct PartitionSearch:
    int n
    int* labels
    int* best_labels
    int* adj_start   # CSR over lower-numbered neighbours
    int* adj_v
    double* adj_c
    double best_obj
    int best_blocks
    long long count
    double tol


cdef void _enum(PartitionSearch* E, int i, int mx, double partial) nogil:
    cdef int l, p, blocks
    cdef double add
    if i == E.n:
        E.count += 1
        blocks = mx + 1
        if partial < E.best_obj - E.tol or (fabs(partial - E.best_obj) <= E.tol and blocks < E.best_blocks):
            E.best_obj = partial
            E.best_blocks = blocks
            for l in range(E.n):
                E.best_labels[l] = E.labels[l]
        return
    for l in range(mx + 2):
        add = 0.0
        for p in range(E.adj_start[i], E.adj_start[i + 1]):
            if E.labels[E.adj_v[p]] != l:
                add += E.adj_c[p]
        E.labels[i] = l
        _enum(E, i + 1, l if l > mx else mx, partial + add)


def best_partition(int n, eu, ev, cost, double tol=1e-12):
    eu = np.asarray(eu, dtype=np.int64)
    ev = np.asarray(ev, dtype=np.int64)
    cost = np.asarray(cost, dtype=float)
    if n == 0:
        return np.zeros(0, dtype=np.int64), 0.0, 1
    hi = np.maximum(eu, ev)
    lo = np.minimum(eu, ev)
    order = np.argsort(hi, kind="stable")
    starts = np.searchsorted(hi[order], np.arange(n + 1)).astype(np.intc)
    adj_v = np.ascontiguousarray(lo[order], dtype=np.intc)
    adj_c = np.ascontiguousarray(cost[order], dtype=float)
    labels = np.zeros(n, dtype=np.intc)
    best = np.zeros(n, dtype=np.intc)
    cdef int[::1] s_mv = starts
    cdef int[::1] v_mv = adj_v
    cdef double[::1] c_mv = adj_c if len(adj_c) else np.zeros(1)
    cdef int[::1] l_mv = labels
    cdef int[::1] b_mv = best
    cdef PartitionSearch E
    E.n = n
    E.labels = &l_mv[0]
    E.best_labels = &b_mv[0]
    E.adj_start = &s_mv[0]
    E.adj_v = NULL
    if adj_v.shape[0] > 0:
        E.adj_v = &v_mv[0]
    E.adj_c = &c_mv[0]
    E.best_obj = float("inf")
    E.best_blocks = n + 1
    E.count = 0
    E.tol = tol
    with nogil:
        E.labels[0] = 0
        _enum(&E, 1, 0, 0.0)
    return best.astype(np.int64), float(E.best_obj), int(E.count)
