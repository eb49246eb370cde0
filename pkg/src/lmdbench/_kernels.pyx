# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. ``_kernels_py`` holds the reference twins."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

# per-case segment table: (edge_a, edge_b, ref_corner) x up to 2, -1 = unused
cdef int _TABLE[16][6]
cdef int _SADDLE[2][2][6]


def _fill_tables():
    rows = {
        1: (3, 0, 0), 14: (3, 0, 0),
        2: (0, 1, 1), 13: (0, 1, 1),
        4: (1, 2, 2), 11: (1, 2, 2),
        8: (2, 3, 3), 7: (2, 3, 3),
        3: (3, 1, 0), 12: (3, 1, 0),
        6: (0, 2, 1), 9: (0, 2, 1),
    }
    cdef int c, k
    for c in range(16):
        for k in range(6):
            _TABLE[c][k] = -1
    for c, r in rows.items():
        for k in range(3):
            _TABLE[c][k] = r[k]
    # [saddle 5 or 10][center high]
    sad = {
        (0, 1): (0, 1, 1, 2, 3, 3),
        (0, 0): (3, 0, 0, 1, 2, 2),
        (1, 1): (3, 0, 0, 1, 2, 2),
        (1, 0): (0, 1, 1, 2, 3, 3),
    }
    for (a, b), r in sad.items():
        for k in range(6):
            _SADDLE[a][b][k] = r[k]


_fill_tables()


def penta_factor(double[:, ::1] e, double[:, ::1] c, double[:, ::1] d,
                 double[:, ::1] a, double[:, ::1] b):
    """Row-wise LU of a batch of pentadiagonal matrices (no pivoting).

    Row ``i`` of matrix ``m`` holds e (i,i-2), c (i,i-1), d (i,i),
    a (i,i+1), b (i,i+2). Returns (gamma, mu, alpha, beta).
    """
    cdef Py_ssize_t nm = d.shape[0], n = d.shape[1], m, i
    gamma_ = np.zeros((nm, n))
    mu_ = np.zeros((nm, n))
    alpha_ = np.zeros((nm, n))
    beta_ = np.zeros((nm, n))
    cdef double[:, ::1] g = gamma_, mu = mu_, al = alpha_, be = beta_
    for m in range(nm):
        mu[m, 0] = d[m, 0]
        al[m, 0] = a[m, 0] / mu[m, 0]
        be[m, 0] = b[m, 0] / mu[m, 0]
        g[m, 1] = c[m, 1]
        mu[m, 1] = d[m, 1] - al[m, 0] * g[m, 1]
        al[m, 1] = (a[m, 1] - be[m, 0] * g[m, 1]) / mu[m, 1]
        be[m, 1] = b[m, 1] / mu[m, 1]
        for i in range(2, n):
            g[m, i] = c[m, i] - al[m, i - 2] * e[m, i]
            mu[m, i] = d[m, i] - be[m, i - 2] * e[m, i] - al[m, i - 1] * g[m, i]
            al[m, i] = (a[m, i] - be[m, i - 1] * g[m, i]) / mu[m, i]
            be[m, i] = b[m, i] / mu[m, i]
    return gamma_, mu_, alpha_, beta_


def penta_solve(double[:, ::1] e, double[:, ::1] g, double[:, ::1] mu,
                double[:, ::1] al, double[:, ::1] be, double complex[:, ::1] rhs):
    """Solve in place for a batch of complex right-hand sides, one per matrix."""
    cdef Py_ssize_t nm = mu.shape[0], n = mu.shape[1], m, i
    for m in range(nm):
        rhs[m, 0] = rhs[m, 0] / mu[m, 0]
        rhs[m, 1] = (rhs[m, 1] - rhs[m, 0] * g[m, 1]) / mu[m, 1]
        for i in range(2, n):
            rhs[m, i] = (rhs[m, i] - rhs[m, i - 2] * e[m, i] - rhs[m, i - 1] * g[m, i]) / mu[m, i]
        rhs[m, n - 2] = rhs[m, n - 2] - al[m, n - 2] * rhs[m, n - 1]
        for i in range(n - 3, -1, -1):
            rhs[m, i] = rhs[m, i] - al[m, i] * rhs[m, i + 1] - be[m, i] * rhs[m, i + 2]


cdef inline void _edge_point(int edge, double v0, double v1, double v2, double v3,
                             double level, double x0, double y0,
                             double* px, double* py) nogil:
    cdef double t
    if edge == 0:
        t = (level - v0) / (v1 - v0)
        px[0] = x0 + t
        py[0] = y0
    elif edge == 1:
        t = (level - v1) / (v2 - v1)
        px[0] = x0 + 1.0
        py[0] = y0 + t
    elif edge == 2:
        t = (level - v3) / (v2 - v3)
        px[0] = x0 + t
        py[0] = y0 + 1.0
    else:
        t = (level - v0) / (v3 - v0)
        px[0] = x0
        py[0] = y0 + t


def marching_segments(double[:, ::1] f, double level):
    """Oriented level-set segments, periodic in x, open in y.

    Returns ``(src, dst, pts)``: edge ids and an (nseg, 4) array of
    endpoints (x0, y0, x1, y1) in grid-index units, oriented so values above
    ``level`` lie to the left of each segment.
    """
    cdef Py_ssize_t ny = f.shape[0], nx = f.shape[1]
    cdef Py_ssize_t i, j, i1, nseg = 0, cap = 4 * nx + 16
    cdef cnp.int64_t nh = ny * nx
    cdef double v0, v1, v2, v3, px, py, qx, qy, cx, cy, cross, mean
    cdef int case, s, ea, eb, ref, high, k, tmp
    cdef int* row
    cdef cnp.int64_t eid[4]
    src_ = np.empty(cap, dtype=np.int64)
    dst_ = np.empty(cap, dtype=np.int64)
    pts_ = np.empty((cap, 4))
    cdef cnp.int64_t[::1] src = src_, dst = dst_
    cdef double[:, ::1] pts = pts_
    for j in range(ny - 1):
        for i in range(nx):
            i1 = i + 1 if i + 1 < nx else 0
            v0 = f[j, i]
            v1 = f[j, i1]
            v2 = f[j + 1, i1]
            v3 = f[j + 1, i]
            case = (v0 > level) | ((v1 > level) << 1) | ((v2 > level) << 2) | ((v3 > level) << 3)
            if case == 0 or case == 15:
                continue
            if case == 5 or case == 10:
                mean = 0.25 * (v0 + v1 + v2 + v3)
                row = _SADDLE[0 if case == 5 else 1][1 if mean > level else 0]
            else:
                row = _TABLE[case]
            eid[0] = j * nx + i
            eid[1] = nh + j * nx + i1
            eid[2] = (j + 1) * nx + i
            eid[3] = nh + j * nx + i
            for s in range(2):
                ea = row[3 * s]
                if ea < 0:
                    break
                eb = row[3 * s + 1]
                ref = row[3 * s + 2]
                _edge_point(ea, v0, v1, v2, v3, level, i, j, &px, &py)
                _edge_point(eb, v0, v1, v2, v3, level, i, j, &qx, &qy)
                cx = i + (1.0 if ref == 1 or ref == 2 else 0.0)
                cy = j + (1.0 if ref >= 2 else 0.0)
                high = (case >> ref) & 1
                cross = (qx - px) * (cy - py) - (qy - py) * (cx - px)
                if (cross > 0) != (high == 1):
                    tmp = ea; ea = eb; eb = tmp
                    px, qx = qx, px
                    py, qy = qy, py
                if nseg == cap:
                    cap *= 2
                    src_ = np.resize(src_, cap)
                    dst_ = np.resize(dst_, cap)
                    pts_ = np.resize(pts_, (cap, 4))
                    src = src_
                    dst = dst_
                    pts = pts_
                src[nseg] = eid[ea]
                dst[nseg] = eid[eb]
                pts[nseg, 0] = px
                pts[nseg, 1] = py
                pts[nseg, 2] = qx
                pts[nseg, 3] = qy
                nseg += 1
    return src_[:nseg].copy(), dst_[:nseg].copy(), pts_[:nseg].copy()
