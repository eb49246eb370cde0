"""Datasets, training, surrogate roll-outs, evaluation and speedup accounting."""

from __future__ import annotations

import csv
import logging
import math
import os
import time as _time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import AlignmentError, ConfigError, DatasetError, NumericError
from .fields import FieldState, list_snapshots, project_simplex, read_snapshot
from .metrics import qoi_relative_error, state_errors, write_metrics_csv
from .qoi import compute_qoi, write_qoi_csv
from .solver import MemorySink, StepReport, run_hf

log = logging.getLogger(__name__)


# ------------------------------------------------------------------ schedule

@dataclass(frozen=True)
class LeapSpec:
    leap_steps: int
    dt: float = 1e-12

    def __post_init__(self):
        if int(self.leap_steps) != self.leap_steps or self.leap_steps < 1:
            raise ConfigError(f"leap_steps={self.leap_steps} must be an integer >= 1")

    @property
    def dtau(self):
        return self.leap_steps * self.dt


@dataclass(frozen=True)
class RolloutSchedule:
    n_init: int
    n_leaps: int
    n_relax: int = 0
    leap_steps: int = 1000

    def __post_init__(self):
        for k in ("n_init", "n_leaps", "n_relax"):
            v = getattr(self, k)
            if int(v) != v or v < 0:
                raise ConfigError(f"rollout.{k}={v} must be a non-negative integer")
        LeapSpec(self.leap_steps)

    @property
    def cycle(self):
        return self.leap_steps + self.n_relax

    def leap_end(self, k):
        """Step index right after the surrogate pass of cycle k (0-based)."""
        return self.n_init + k * self.cycle + self.leap_steps

    def cycle_end(self, k):
        return self.n_init + (k + 1) * self.cycle

    @property
    def final_step(self):
        return self.n_init + self.n_leaps * self.cycle

    @property
    def total_hf_steps(self):
        return self.n_init + self.n_leaps * self.n_relax

    def emitted_steps(self):
        """Steps at which a roll-out snapshot becomes available, in order."""
        out = []
        for k in range(self.n_leaps):
            out.append(self.leap_end(k))
            if self.n_relax:
                out.append(self.cycle_end(k))
        return out


def plan_schedule(schedule):
    """Segments (kind, start_step, end_step) without running anything."""
    segs = []
    if schedule.n_init:
        segs.append(("hf", 0, schedule.n_init))
    for k in range(schedule.n_leaps):
        start = schedule.n_init + k * schedule.cycle
        segs.append(("leap", start, start + schedule.leap_steps))
        if schedule.n_relax:
            segs.append(("relax", start + schedule.leap_steps, schedule.cycle_end(k)))
    return segs


# ------------------------------------------------------------------ dataset

@dataclass
class Pair:
    run: str
    step_in: int
    step_out: int
    x: np.ndarray  # (3, ny, nx)
    y: np.ndarray


def pairs_from_states(runs, leap_steps, names=None):
    """Pairs (t, t + leap) inside each run of time-ordered FieldStates."""
    pairs, skipped = [], 0
    for r, states in enumerate(runs):
        name = names[r] if names else str(r)
        by_step = {s.step: s for s in states}
        for s in sorted(by_step):
            tgt = by_step.get(s + leap_steps)
            if tgt is None:
                skipped += 1
                continue
            pairs.append(Pair(name, s, s + leap_steps,
                              by_step[s].as_array(), tgt.as_array()))
    return pairs, skipped


def build_dataset(run_dirs, leap, dx=0.2):
    """All (snapshot_t, snapshot_{t+leap}) pairs within each run directory."""
    leap_steps = leap.leap_steps if isinstance(leap, LeapSpec) else int(leap)
    runs, names = [], []
    for d in run_dirs:
        paths = list_snapshots(d)
        runs.append([read_snapshot(p, dx) for p in paths])
        names.append(str(d))
    pairs, skipped = pairs_from_states(runs, leap_steps, names)
    if skipped:
        log.warning("%d snapshots had no counterpart %d steps later", skipped, leap_steps)
    if not pairs:
        raise DatasetError(f"no (t, t+{leap_steps}) snapshot pairs in {len(run_dirs)} run(s)")
    return pairs


# ------------------------------------------------------------------ training

@dataclass
class TrainConfig:
    epochs: int = 20
    lr: float = 1e-4
    batch_size: int = 1
    seed: int = 0
    max_steps: int | None = None  # stop after this many optimizer steps

    def __post_init__(self):
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ConfigError("train.epochs must be >= 1")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ConfigError("train.batch_size must be >= 1")
        if not self.lr >= 0:
            raise ConfigError("train.lr must be >= 0")
        if self.max_steps is not None and self.max_steps < 0:
            raise ConfigError("train.max_steps must be >= 0")


@dataclass
class TrainResult:
    epoch_loss: list = field(default_factory=list)
    step_loss: list = field(default_factory=list)
    steps: int = 0


def _batch_grads(model, batch):
    """Mean loss and mean gradients over a batch (one tape per sample)."""
    params = model.parameters()
    acc = [None] * len(params)
    total = 0.0
    for pr in batch:
        for p in params:
            p.grad = None
        ad.new_tape()
        loss = ad.mse_loss(model(ad.Tensor(pr.x)), pr.y)
        ad.backward(loss)
        total += float(loss.data)
        for i, p in enumerate(params):
            if p.grad is not None:
                acc[i] = p.grad.copy() if acc[i] is None else acc[i] + p.grad
    n = len(batch)
    return total / n, [None if g is None else g / n for g in acc]


def train(model, pairs, cfg, loss_csv=None):
    """Seeded, epoch-shuffled MSE minimization with Adam."""
    if not pairs:
        raise DatasetError("training set is empty")
    rng = np.random.default_rng(cfg.seed)
    state = ad.AdamState(lr=cfg.lr)
    params = model.parameters()
    res = TrainResult()
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(pairs))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            if cfg.max_steps is not None and res.steps >= cfg.max_steps:
                break
            batch = [pairs[i] for i in order[start:start + cfg.batch_size]]
            loss, grads = _batch_grads(model, batch)
            if not math.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch} step {res.steps}",
                                   step=res.steps)
            ad.adam_step(params, grads, state)
            res.steps += 1
            losses.append(loss)
            res.step_loss.append(loss)
        if losses:
            res.epoch_loss.append(float(np.mean(losses)))
    for p in params:
        p.grad = None
    if loss_csv is not None:
        write_loss_csv(res.epoch_loss, loss_csv)
    return res


def write_loss_csv(epoch_loss, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("epoch", "mean_mse"))
        for i, v in enumerate(epoch_loss):
            w.writerow((i, repr(float(v))))


def evaluate_loss(model, pairs):
    return float(np.mean([np.mean((model.predict(p.x) - p.y) ** 2) for p in pairs]))


# ------------------------------------------------------------------ roll-outs

@dataclass
class RolloutResult:
    init_states: list  # HF snapshots at cadence during the initial segment
    states: list  # one per emitted step of the schedule
    hf_wall_s: float = 0.0
    model_wall_s: float = 0.0
    hf_steps: int = 0
    forward_passes: int = 0


def surrogate_leap(model, state, leap_steps, dt):
    """One forward pass; outputs are projected onto the mole-fraction simplex."""
    out = model.predict(state.as_array())
    cA, cB = out[1], out[2]
    if (cA + cB).max() > 1.0:
        cA, cB = project_simplex(cA, cB)
    return FieldState(out[0].copy(), cA.copy(), cB.copy(), state.grid,
                      state.time + leap_steps * dt, state.step + leap_steps)


def _check_model_grid(model, state):
    cfg = model.cfg
    if (cfg.height, cfg.width) != state.grid.shape or cfg.in_channels != 3:
        raise ConfigError(f"model expects {(cfg.in_channels, cfg.height, cfg.width)}, "
                          f"state grid is {state.grid.shape}")


def _rollout(state0, model, schedule, p, solver_cfg, sink=None):
    _check_model_grid(model, state0)
    if state0.step != 0:
        raise ConfigError(f"roll-out must start at step 0, got {state0.step}")
    init_sink = MemorySink()
    res = RolloutResult([], [])
    t0 = _time.perf_counter()
    state = run_hf(state0, p, solver_cfg, schedule.n_init, sink=init_sink)
    res.hf_wall_s += _time.perf_counter() - t0
    res.hf_steps += schedule.n_init
    res.init_states = init_sink.states
    if sink is not None:
        for s, r in zip(init_sink.states, init_sink.reports):
            sink.emit(s, r)
    start = _time.perf_counter()

    def emit(s):
        res.states.append(s)
        if sink is not None:
            sink.emit(s, StepReport.of(s, _time.perf_counter() - start))

    for _ in range(schedule.n_leaps):
        t0 = _time.perf_counter()
        state = surrogate_leap(model, state, schedule.leap_steps, solver_cfg.dt)
        res.model_wall_s += _time.perf_counter() - t0
        res.forward_passes += 1
        emit(state)
        if schedule.n_relax:
            t0 = _time.perf_counter()
            state = run_hf(state, p, solver_cfg, schedule.n_relax)
            res.hf_wall_s += _time.perf_counter() - t0
            res.hf_steps += schedule.n_relax
            emit(state)
    return res


def rollout_auto(state0, model, schedule, p, solver_cfg, sink=None):
    """n_init HF steps, then n_leaps chained surrogate passes."""
    if schedule.n_relax:
        raise ConfigError("rollout_auto needs n_relax = 0; use rollout_hybrid")
    return _rollout(state0, model, schedule, p, solver_cfg, sink)


def rollout_hybrid(state0, model, schedule, p, solver_cfg, sink=None):
    """Alternate surrogate leaps with n_relax HF relaxation steps."""
    return _rollout(state0, model, schedule, p, solver_cfg, sink)


# ------------------------------------------------------------------ evaluation

QOI_ERROR_COLUMNS = ("mean_curvature", "curvature_std", "interface_perimeter", "total_mass",
                     "cA_mass", "cB_mass", "max_penetration_depth", "mean_ligament_height")
_QOI_FIELDS = ("mu_k", "sigma_k", "perimeter", "m_phi", "m_A", "m_B", "max_p", "mu_d")


@dataclass
class Evaluation:
    metrics: list  # MetricsRecord per aligned step
    qoi_pred: list
    qoi_true: list
    qoi_errors: dict  # Table-2 column -> relative error (NaN if undefined)


def evaluate(pred, truth, out_dir=None):
    """Compare two state timeseries on the steps they share."""
    t_by_step = {s.step: s for s in truth}
    common = [s for s in pred if s.step in t_by_step]
    if not common:
        raise AlignmentError("prediction and truth share no steps",
                             offending=sorted(s.step for s in pred))
    metrics = [state_errors(t_by_step[s.step], s) for s in common]
    q_pred = [compute_qoi(s) for s in common]
    q_true = [compute_qoi(t_by_step[s.step]) for s in common]
    errs = {}
    for col, f in zip(QOI_ERROR_COLUMNS, _QOI_FIELDS):
        errs[col] = qoi_relative_error([getattr(q, f) for q in q_true],
                                       [getattr(q, f) for q in q_pred])
    ev = Evaluation(metrics, q_pred, q_true, errs)
    if out_dir is not None:
        write_evaluation(ev, out_dir)
    return ev


def write_qoi_errors_csv(errors, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(QOI_ERROR_COLUMNS)
        w.writerow(["" if math.isnan(errors[c]) else repr(errors[c]) for c in QOI_ERROR_COLUMNS])


def write_evaluation(ev, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    write_metrics_csv(ev.metrics, os.path.join(out_dir, "metrics.csv"))
    write_qoi_csv(ev.qoi_pred, os.path.join(out_dir, "qoi_pred.csv"))
    write_qoi_csv(ev.qoi_true, os.path.join(out_dir, "qoi_truth.csv"))
    write_qoi_errors_csv(ev.qoi_errors, os.path.join(out_dir, "qoi_errors.csv"))


# ------------------------------------------------------------------ timing

@dataclass
class SpeedupReport:
    t_hf_step: float
    t_model_pass: float
    leap_steps: int
    n_init: int
    n_leaps: int
    n_relax: int
    per_leap: float
    end_to_end: float
    end_to_end_limit: float

    def to_text(self):
        return "".join(f"{k} = {v!r}\n" for k, v in self.__dict__.items())


def speedup_report(t_hf_step, t_model_pass, schedule):
    """Per-leap and end-to-end speedups of a schedule over a pure HF run."""
    if not (t_hf_step > 0 and t_model_pass > 0):
        raise NumericError("timings must be positive")
    per_leap = schedule.leap_steps * t_hf_step / t_model_pass
    total = schedule.final_step * t_hf_step
    hf_part = schedule.total_hf_steps * t_hf_step
    e2e = total / (hf_part + schedule.n_leaps * t_model_pass)
    limit = total / hf_part if hf_part > 0 else math.inf
    return SpeedupReport(t_hf_step, t_model_pass, schedule.leap_steps, schedule.n_init,
                         schedule.n_leaps, schedule.n_relax, per_leap, e2e, limit)


def read_steps_timing(csv_path):
    """Mean wall seconds per HF step from a ``steps.csv`` (wall_s is cumulative)."""
    with open(csv_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) < 2:
        raise NumericError(f"{csv_path}: need at least two timing rows")
    s0, s1 = int(rows[0]["step"]), int(rows[-1]["step"])
    w0, w1 = float(rows[0]["wall_s"]), float(rows[-1]["wall_s"])
    if s1 <= s0 or w1 <= w0:
        raise NumericError(f"{csv_path}: non-increasing timing rows")
    return (w1 - w0) / (s1 - s0)


def discover_runs(data_dir):
    """Run directories (containing snapshots) directly under ``data_dir``."""
    out = []
    for name in sorted(os.listdir(data_dir)):
        d = os.path.join(data_dir, name)
        if os.path.isdir(d) and list_snapshots(d):
            out.append(d)
    return out


def load_series(directory, dx=0.2):
    return [read_snapshot(p, dx) for p in list_snapshots(directory)]

