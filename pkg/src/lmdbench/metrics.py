"""Two-point autocorrelation and the relative-error measures built on it."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import AlignmentError, FormatError, ShapeError

UNDEFINED = math.nan
FIELD_NAMES = ("phi", "cA", "cB")


def autocorrelation(u):
    """S(r) = (1/N) sum_x u(x) u(x + r) over the periodic torus."""
    u = np.asarray(u, dtype=np.float64)
    if not np.all(np.isfinite(u)):
        raise ValueError("autocorrelation requires a finite field")
    F = np.fft.rfft2(u)
    return np.fft.irfft2(F * np.conj(F), s=u.shape) / u.size


def ac_relative_error(u_true, u_pred):
    """||S_pred - S_true||_2 / ||S_true||_2 over all offsets; NaN if undefined."""
    u_true = np.asarray(u_true, dtype=np.float64)
    u_pred = np.asarray(u_pred, dtype=np.float64)
    if u_true.shape != u_pred.shape:
        raise ShapeError(f"shape mismatch {u_true.shape} vs {u_pred.shape}")
    s_true = autocorrelation(u_true)
    denom = np.linalg.norm(s_true)
    if denom == 0.0:
        return UNDEFINED
    return float(np.linalg.norm(autocorrelation(u_pred) - s_true) / denom)


def qoi_relative_error(q_true, q_pred):
    """L2 relative error over slots where both entries are defined."""
    a = np.asarray(q_true, dtype=np.float64)
    b = np.asarray(q_pred, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch {a.shape} vs {b.shape}")
    ok = np.isfinite(a) & np.isfinite(b)
    if not ok.any():
        return UNDEFINED
    denom = np.linalg.norm(a[ok])
    if denom == 0.0:
        return UNDEFINED
    return float(np.linalg.norm(b[ok] - a[ok]) / denom)


@dataclass
class MetricsRecord:
    step: int
    time_s: float
    eac_phi: float
    eac_cA: float
    eac_cB: float


METRICS_COLUMNS = tuple(f.name for f in fields(MetricsRecord))


def state_errors(true_state, pred_state):
    """MetricsRecord comparing two states field by field."""
    vals = [ac_relative_error(getattr(true_state, f), getattr(pred_state, f)) for f in FIELD_NAMES]
    return MetricsRecord(true_state.step, true_state.time, *vals)


def _check_aligned(runs, time_tol=1e-9):
    ref = runs[0]
    bad = set()
    for run in runs[1:]:
        if len(run) != len(ref):
            n = min(len(run), len(ref))
            bad.update(s.step for s in ref[n:])
            bad.update(s.step for s in run[n:])
        for a, b in zip(ref, run):
            scale = max(abs(a.time), abs(b.time), 1e-300)
            if a.step != b.step or abs(a.time - b.time) > time_tol * scale:
                bad.add(a.step)
    if bad:
        listed = sorted(bad)
        raise AlignmentError(f"misaligned timelines at steps {listed}", offending=listed)


def pairwise_discrepancy(runs):
    """Per-time mean of ac_relative_error over all unordered pairs of runs.

    ``runs`` is a sequence of runs, each a time-ordered list of FieldStates.
    A pair whose error is undefined is left out of that slot's mean.
    """
    runs = [list(r) for r in runs]
    if len(runs) < 2:
        raise ValueError("pairwise_discrepancy needs at least two runs")
    _check_aligned(runs)
    pairs = list(itertools.combinations(range(len(runs)), 2))
    out = []
    for t in range(len(runs[0])):
        acc = {f: [] for f in FIELD_NAMES}
        for a, b in pairs:
            for f in FIELD_NAMES:
                e = ac_relative_error(getattr(runs[a][t], f), getattr(runs[b][t], f))
                if not math.isnan(e):
                    acc[f].append(e)
        vals = [float(np.mean(acc[f])) if acc[f] else UNDEFINED for f in FIELD_NAMES]
        s = runs[0][t]
        out.append(MetricsRecord(s.step, s.time, *vals))
    return out


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def write_metrics_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_COLUMNS)
        for r in records:
            w.writerow([_fmt(getattr(r, c)) for c in METRICS_COLUMNS])


def read_metrics_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != METRICS_COLUMNS:
        raise FormatError(f"{path}: unexpected metrics header", field="header")
    return [MetricsRecord(int(r[0]), *[UNDEFINED if v == "" else float(v) for v in r[1:]])
            for r in rows[1:]]
