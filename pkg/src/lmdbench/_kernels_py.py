"""Pure-Python/numpy twins of the compiled kernels in ``_kernels.pyx``.

Same signatures and results; used when the extension is not built or when
``LMDBENCH_PURE_PYTHON=1`` is set.
"""

import numpy as np

_TABLE = {
    1: ((3, 0, 0),), 14: ((3, 0, 0),),
    2: ((0, 1, 1),), 13: ((0, 1, 1),),
    4: ((1, 2, 2),), 11: ((1, 2, 2),),
    8: ((2, 3, 3),), 7: ((2, 3, 3),),
    3: ((3, 1, 0),), 12: ((3, 1, 0),),
    6: ((0, 2, 1),), 9: ((0, 2, 1),),
}
# (case, center_high) -> segments
_SADDLE = {
    (5, True): ((0, 1, 1), (2, 3, 3)),
    (5, False): ((3, 0, 0), (1, 2, 2)),
    (10, True): ((3, 0, 0), (1, 2, 2)),
    (10, False): ((0, 1, 1), (2, 3, 3)),
}
_CORNER = ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0))


def penta_factor(e, c, d, a, b):
    nm, n = d.shape
    g = np.zeros((nm, n))
    mu = np.zeros((nm, n))
    al = np.zeros((nm, n))
    be = np.zeros((nm, n))
    mu[:, 0] = d[:, 0]
    al[:, 0] = a[:, 0] / mu[:, 0]
    be[:, 0] = b[:, 0] / mu[:, 0]
    g[:, 1] = c[:, 1]
    mu[:, 1] = d[:, 1] - al[:, 0] * g[:, 1]
    al[:, 1] = (a[:, 1] - be[:, 0] * g[:, 1]) / mu[:, 1]
    be[:, 1] = b[:, 1] / mu[:, 1]
    for i in range(2, n):
        g[:, i] = c[:, i] - al[:, i - 2] * e[:, i]
        mu[:, i] = d[:, i] - be[:, i - 2] * e[:, i] - al[:, i - 1] * g[:, i]
        al[:, i] = (a[:, i] - be[:, i - 1] * g[:, i]) / mu[:, i]
        be[:, i] = b[:, i] / mu[:, i]
    return g, mu, al, be


def penta_solve(e, g, mu, al, be, rhs):
    n = mu.shape[1]
    rhs[:, 0] /= mu[:, 0]
    rhs[:, 1] = (rhs[:, 1] - rhs[:, 0] * g[:, 1]) / mu[:, 1]
    for i in range(2, n):
        rhs[:, i] = (rhs[:, i] - rhs[:, i - 2] * e[:, i] - rhs[:, i - 1] * g[:, i]) / mu[:, i]
    rhs[:, n - 2] -= al[:, n - 2] * rhs[:, n - 1]
    for i in range(n - 3, -1, -1):
        rhs[:, i] -= al[:, i] * rhs[:, i + 1] + be[:, i] * rhs[:, i + 2]


def _edge_point(edge, v, level, x0, y0):
    v0, v1, v2, v3 = v
    if edge == 0:
        return x0 + (level - v0) / (v1 - v0), y0
    if edge == 1:
        return x0 + 1.0, y0 + (level - v1) / (v2 - v1)
    if edge == 2:
        return x0 + (level - v3) / (v2 - v3), y0 + 1.0
    return x0, y0 + (level - v0) / (v3 - v0)


def marching_segments(f, level):
    f = np.ascontiguousarray(f, dtype=np.float64)
    ny, nx = f.shape
    nh = ny * nx
    v0 = f[:-1]
    v1 = np.roll(f, -1, axis=1)[:-1]
    v2 = np.roll(f, -1, axis=1)[1:]
    v3 = f[1:]
    case = ((v0 > level).astype(np.int64) | (v1 > level) << 1
            | (v2 > level) << 2 | (v3 > level) << 3)
    src, dst, pts = [], [], []
    for j, i in zip(*np.nonzero((case != 0) & (case != 15))):
        j = int(j)
        i = int(i)
        i1 = (i + 1) % nx
        cs = int(case[j, i])
        v = (f[j, i], f[j, i1], f[j + 1, i1], f[j + 1, i])
        if cs in (5, 10):
            rows = _SADDLE[(cs, 0.25 * sum(v) > level)]
        else:
            rows = _TABLE[cs]
        eid = (j * nx + i, nh + j * nx + i1, (j + 1) * nx + i, nh + j * nx + i)
        for ea, eb, ref in rows:
            px, py = _edge_point(ea, v, level, i, j)
            qx, qy = _edge_point(eb, v, level, i, j)
            cx = i + _CORNER[ref][0]
            cy = j + _CORNER[ref][1]
            cross = (qx - px) * (cy - py) - (qy - py) * (cx - px)
            if (cross > 0) != bool((cs >> ref) & 1):
                ea, eb = eb, ea
                px, py, qx, qy = qx, qy, px, py
            src.append(eid[ea])
            dst.append(eid[eb])
            pts.append((px, py, qx, qy))
    return (np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64),
            np.array(pts, dtype=np.float64).reshape(-1, 4))
