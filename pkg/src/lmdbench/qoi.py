"""Interface extraction and scalar quantities of interest.

Coordinates are unit-normalized: cell (i, j) sits at ((i + 0.5) / nx,
(j + 0.5) / ny). Curves are oriented with the solid (phi above the level)
on the left, so a solid disk is traversed counterclockwise and has positive
curvature.

A closed curve may wind around the periodic x direction. Its ``wrap``
field counts the x-periods crossed; the closing segment joins the last
vertex to ``first + (wrap, 0)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields

import numpy as np

from . import kernels
from .errors import DegenerateCurveError, FormatError
from .fields import read_snapshot

UNDEFINED = math.nan


def is_undefined(x):
    return x is None or (isinstance(x, float) and math.isnan(x))


@dataclass
class InterfaceCurve:
    vertices: np.ndarray  # (n, 2)
    closed: bool
    wrap: int = 0

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise ValueError("vertices must have shape (n, 2)")
        if len(self.vertices) < 3:
            raise DegenerateCurveError(f"curve has {len(self.vertices)} vertices, need >= 3")
        if self.wrap and not self.closed:
            raise ValueError("only closed curves can wrap")

    @property
    def shift(self):
        return np.array([float(self.wrap), 0.0])

    def polyline(self):
        """Vertices with the closing vertex appended for closed curves."""
        if self.closed:
            return np.vstack([self.vertices, self.vertices[:1] + self.shift])
        return self.vertices

    def segment_lengths(self):
        return np.hypot(*np.diff(self.polyline(), axis=0).T)

    def length(self):
        return float(self.segment_lengths().sum())

    def reversed(self):
        v = self.vertices[::-1].copy()
        if self.closed and self.wrap:
            # keep the closing segment: new first vertex is old last
            return InterfaceCurve(v, True, -self.wrap)
        return InterfaceCurve(v, self.closed, self.wrap)

    def vertex_weights(self):
        """Arc length attributed to each vertex (half of each adjacent segment)."""
        seg = self.segment_lengths()
        if self.closed:
            return 0.5 * (seg + np.roll(seg, 1))
        w = np.zeros(len(self.vertices))
        w[:-1] += 0.5 * seg
        w[1:] += 0.5 * seg
        return w


def _chain(src, dst, pts, nx):
    """Link oriented segments into polylines in grid-index units."""
    nseg = len(src)
    by_src = {int(s): k for k, s in enumerate(src)}
    dst_set = set(int(d) for d in dst)
    used = np.zeros(nseg, dtype=bool)
    out = []

    def walk(k0):
        verts = [pts[k0, :2].copy()]
        k = k0
        while True:
            used[k] = True
            p = pts[k, 2:].copy()
            p[0] += nx * round((verts[-1][0] - p[0]) / nx)
            verts.append(p)
            nxt = by_src.get(int(dst[k]))
            if nxt is None:
                return np.array(verts), False, 0
            if nxt == k0:
                start = verts[0]
                last = verts.pop()
                wrap = int(round((last[0] - start[0]) / nx))
                return np.array(verts), True, wrap
            if used[nxt]:  # malformed topology; stop rather than loop
                return np.array(verts), False, 0
            k = nxt

    heads = [k for k in range(nseg) if int(src[k]) not in dst_set]
    for k in heads:
        if not used[k]:
            out.append(walk(k))
    for k in range(nseg):
        if not used[k]:
            out.append(walk(k))
    return out


def extract_interface(phi, level=0.5):
    """Level-set curves of a field (FieldState or array), periodic in x."""
    if hasattr(phi, "phi"):
        phi = phi.phi
    phi = np.ascontiguousarray(phi, dtype=np.float64)
    ny, nx = phi.shape
    src, dst, pts = kernels.marching_segments(phi, float(level))
    curves = []
    for verts, closed, wrap in _chain(src, dst, pts, nx):
        keep = np.ones(len(verts), dtype=bool)
        keep[1:] = np.hypot(*np.diff(verts, axis=0).T) > 1e-12
        verts = verts[keep]
        if closed and len(verts) > 1 and np.hypot(*(verts[-1] - verts[0] - [wrap * nx, 0])) <= 1e-12:
            verts = verts[:-1]
        if len(verts) < 3:
            continue
        norm = (verts + 0.5) / np.array([nx, ny])
        if closed:
            norm[:, 0] -= math.floor(norm[0, 0])
        curves.append(InterfaceCurve(norm, closed, wrap))
    return curves


def resample_uniform(curve, ds):
    """Vertices at uniform arc spacing (as close to ``ds`` as divides the length)."""
    poly = curve.polyline()
    seg = np.hypot(*np.diff(poly, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    L = s[-1]
    if not ds > 0 or ds > L:
        raise DegenerateCurveError(f"ds={ds} exceeds curve length {L}")
    if curve.closed:
        n = max(int(round(L / ds)), 3)
        t = np.arange(n) * (L / n)
    else:
        n = max(int(round(L / ds)), 2)
        t = np.linspace(0.0, L, n + 1)
    v = np.column_stack([np.interp(t, s, poly[:, 0]), np.interp(t, s, poly[:, 1])])
    if not curve.closed:
        v[0], v[-1] = poly[0], poly[-1]
    return InterfaceCurve(v, curve.closed, curve.wrap)


def _extended(curve, pad):
    v = curve.vertices
    if curve.closed:
        sh = curve.shift
        return np.vstack([v[-pad:] - sh, v, v[:pad] + sh])
    return v


def smooth_vertices(curve, width=5):
    """Box average of vertex coordinates; open ends use shrinking windows."""
    half = width // 2
    v = curve.vertices
    if curve.closed:
        ext = _extended(curve, half)
        kern = np.ones(width) / width
        out = np.column_stack([np.convolve(ext[:, k], kern, mode="valid") for k in range(2)])
    else:
        n = len(v)
        out = v.copy()
        for i in range(1, n - 1):
            h = min(half, i, n - 1 - i)
            out[i] = v[i - h:i + h + 1].mean(axis=0)
    return InterfaceCurve(out, curve.closed, curve.wrap)


def curvature_profile(curve, smooth=True):
    """Signed curvature at every vertex of a uniformly sampled curve."""
    if len(curve.vertices) < 5:
        raise DegenerateCurveError("curvature needs at least 5 vertices")
    if smooth:
        curve = smooth_vertices(curve)
    if curve.closed:
        e = _extended(curve, 1)
        d1 = 0.5 * (e[2:] - e[:-2])
        d2 = e[2:] - 2.0 * e[1:-1] + e[:-2]
    else:
        v = curve.vertices
        d1 = np.empty_like(v)
        d2 = np.empty_like(v)
        d1[1:-1] = 0.5 * (v[2:] - v[:-2])
        d2[1:-1] = v[2:] - 2.0 * v[1:-1] + v[:-2]
        d1[0] = 0.5 * (-3.0 * v[0] + 4.0 * v[1] - v[2])
        d1[-1] = 0.5 * (3.0 * v[-1] - 4.0 * v[-2] + v[-3])
        d2[0] = 2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]
        d2[-1] = 2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]
    num = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    den = (d1[:, 0] ** 2 + d1[:, 1] ** 2) ** 1.5
    return num / den


def curvature_stats(curves, smooth=True):
    """Arc-length weighted mean and std of |k| pooled over all curves."""
    ks, ws = [], []
    for c in curves:
        if len(c.vertices) < 5:
            continue
        ks.append(np.abs(curvature_profile(c, smooth=smooth)))
        ws.append(c.vertex_weights())
    if not ks:
        return UNDEFINED, UNDEFINED
    k = np.concatenate(ks)
    w = np.concatenate(ws)
    if w.sum() <= 0:
        return UNDEFINED, UNDEFINED
    mu = float(np.average(k, weights=w))
    sigma = float(np.sqrt(np.average((k - mu) ** 2, weights=w)))
    return mu, sigma


def perimeter(curves):
    return float(sum(c.length() for c in curves))


def _curve_extrema(y, closed, tol=1e-12):
    n = len(y)
    dy = np.diff(np.append(y, y[0])) if closed else np.diff(y)
    sgn = np.where(dy > tol, 1, np.where(dy < -tol, -1, 0))
    nz = np.flatnonzero(sgn)
    mins, maxs = [], []
    if len(nz) == 0:
        return mins, maxs
    pairs = list(zip(nz[:-1], nz[1:]))
    if closed:
        pairs.append((nz[-1], nz[0] + len(dy)))
    for a, b in pairs:
        sa, sb = sgn[a % len(dy)], sgn[b % len(dy)]
        if sa == sb:
            continue
        mid = ((a + 1 + b) // 2) % n
        (maxs if sa > 0 else mins).append(float(y[mid]))
    return mins, maxs


def extrema_sets(curves):
    """Pooled (S_min, S_max): y at strict local minima / maxima of each curve."""
    s_min, s_max = [], []
    for c in curves:
        mins, maxs = _curve_extrema(c.vertices[:, 1], c.closed)
        s_min.extend(mins)
        s_max.extend(maxs)
    return s_min, s_max


def ligament_and_depth(s_min, s_max):
    """(mean ligament height, maximum penetration depth); NaN when undefined."""
    mu_d = float(np.mean(s_max) - np.mean(s_min)) if len(s_min) and len(s_max) else UNDEFINED
    max_p = float(1.0 - min(s_min)) if len(s_min) else UNDEFINED
    return mu_d, max_p


def masses(state):
    """Domain integrals of phi, cA, cB in nm^2."""
    a = state.grid.cell_area
    return (float(state.phi.sum() * a), float(state.cA.sum() * a), float(state.cB.sum() * a))


@dataclass
class QoiRecord:
    step: int
    time_s: float
    mu_k: float
    sigma_k: float
    perimeter: float
    mu_d: float
    max_p: float
    m_phi: float
    m_A: float
    m_B: float


QOI_COLUMNS = tuple(f.name for f in fields(QoiRecord))


def compute_qoi(state, level=0.5, ds=None, smooth=True):
    """QoiRecord for one state; ``ds`` defaults to four grid spacings (normalized)."""
    curves = extract_interface(state.phi, level)
    if ds is None:
        ds = 4.0 / max(state.grid.nx, state.grid.ny)
    resampled = []
    for c in curves:
        if c.length() > 5 * ds:
            resampled.append(resample_uniform(c, ds))
    mu_k, sigma_k = curvature_stats(resampled, smooth=smooth) if resampled else (UNDEFINED, UNDEFINED)
    s_min, s_max = extrema_sets(resampled)
    mu_d, max_p = ligament_and_depth(s_min, s_max)
    m_phi, m_A, m_B = masses(state)
    p = perimeter(curves) if curves else UNDEFINED
    return QoiRecord(state.step, state.time, mu_k, sigma_k, p, mu_d, max_p, m_phi, m_A, m_B)


def qoi_timeseries(snapshots, dx=0.2, **kw):
    """Records for a sequence of states or snapshot paths, ordered by time."""
    recs = []
    for s in snapshots:
        if isinstance(s, (str, bytes)) or hasattr(s, "__fspath__"):
            try:
                s = read_snapshot(s, dx)
            except OSError as exc:
                raise OSError(f"cannot read snapshot {s}: {exc}") from exc
        recs.append(compute_qoi(s, **kw))
    recs.sort(key=lambda r: (r.time_s, r.step))
    return recs


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def write_qoi_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(QOI_COLUMNS)
        for r in records:
            w.writerow([_fmt(getattr(r, c)) for c in QOI_COLUMNS])


def read_qoi_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != QOI_COLUMNS:
        raise FormatError(f"{path}: unexpected QoI header", field="header")
    out = []
    for row in rows[1:]:
        vals = [int(row[0])] + [UNDEFINED if v == "" else float(v) for v in row[1:]]
        out.append(QoiRecord(*vals))
    return out
