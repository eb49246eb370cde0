"""Command implementations behind the ``lmdbench`` CLI.

Every command takes a resolved RunConfig and an output directory, writes
the resolved config there, and returns a dict summary.
"""

from __future__ import annotations

import json
import os

from .errors import ConfigError, DatasetError
from .fields import init_state, list_snapshots, read_snapshot
from .metrics import pairwise_discrepancy, write_metrics_csv
from .model import build, load_weights, save_weights
from .orchestrate import (
    build_dataset,
    discover_runs,
    evaluate,
    load_series,
    rollout_hybrid,
    speedup_report,
    train,
)
from .qoi import qoi_timeseries, write_qoi_csv
from .solver import DirectorySink, run_hf

CONFIG_NAME = "resolved_config.json"


def _prepare(cfg, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    cfg.write(os.path.join(out_dir, CONFIG_NAME))


def _initial_state(cfg, seed):
    init = cfg.init
    return init_state(cfg.grid(), init["solid_fraction"], init["noise_amp"], seed)


def simulate(cfg, out_dir):
    """``init.n_runs`` HF runs with seeds init.seed, init.seed + 1, ..."""
    _prepare(cfg, out_dir)
    p, scfg = cfg.params(), cfg.solver()
    run_dirs = []
    for r in range(cfg.init["n_runs"]):
        d = os.path.join(out_dir, "runs", f"run_{r:03d}")
        sink = DirectorySink(d)
        state = _initial_state(cfg, cfg.init["seed"] + r)
        sink.write_state(state)
        run_hf(state, p, scfg, cfg.n_steps, sink=sink)
        run_dirs.append(d)
    return {"runs": run_dirs}


def _data_dirs(cfg, out_dir):
    data_dir = cfg.section("paths")["data_dir"] or os.path.join(out_dir, "runs")
    if not os.path.isdir(data_dir):
        raise DatasetError(f"data directory {data_dir} does not exist")
    runs = discover_runs(data_dir)
    if not runs and list_snapshots(data_dir):
        runs = [data_dir]
    if not runs:
        raise DatasetError(f"no snapshot runs under {data_dir}")
    return runs


def train_cmd(cfg, out_dir):
    _prepare(cfg, out_dir)
    leap = cfg.schedule().leap_steps
    dx = cfg.grid().dx
    pairs = build_dataset(_data_dirs(cfg, out_dir), leap, dx)
    tcfg = cfg.train()
    model = build(cfg.model(), seed=tcfg.seed)
    res = train(model, pairs, tcfg, loss_csv=os.path.join(out_dir, "loss.csv"))
    weights = os.path.join(out_dir, "model.uafw")
    save_weights(model, weights)
    return {"weights": weights, "pairs": len(pairs), "steps": res.steps,
            "final_loss": res.epoch_loss[-1] if res.epoch_loss else None}


def rollout_cmd(cfg, out_dir, weights=None, n_relax=None):
    _prepare(cfg, out_dir)
    weights = weights or cfg.section("paths")["weights"] or os.path.join(out_dir, "model.uafw")
    model = load_weights(weights, expected=cfg.model())
    sched = cfg.schedule()
    if n_relax is not None:
        if n_relax < 0:
            raise ConfigError("--hybrid must be >= 0")
        sched = type(sched)(sched.n_init, sched.n_leaps, n_relax, sched.leap_steps)
    d = os.path.join(out_dir, "rollout")
    sink = DirectorySink(d)
    state0 = _initial_state(cfg, cfg.init["seed"])
    sink.write_state(state0)
    res = rollout_hybrid(state0, model, sched, cfg.params(), cfg.solver(), sink=sink)
    timing = {
        "hf_wall_s": res.hf_wall_s, "hf_steps": res.hf_steps,
        "model_wall_s": res.model_wall_s, "forward_passes": res.forward_passes,
        "t_hf_step": res.hf_wall_s / res.hf_steps if res.hf_steps else None,
        "t_model_pass": res.model_wall_s / res.forward_passes if res.forward_passes else None,
    }
    with open(os.path.join(out_dir, "timing.json"), "w") as fh:
        json.dump(timing, fh, indent=2)
    return {"rollout_dir": d, "emitted_steps": [s.step for s in res.states]}


def qoi_cmd(cfg, out_dir, snapshot_dir):
    _prepare(cfg, out_dir)
    paths = list_snapshots(snapshot_dir)
    if not paths:
        raise DatasetError(f"no snapshots in {snapshot_dir}")
    recs = qoi_timeseries(paths, dx=cfg.grid().dx)
    path = os.path.join(out_dir, "qoi.csv")
    write_qoi_csv(recs, path)
    return {"qoi_csv": path, "rows": len(recs)}


def metrics_cmd(cfg, out_dir, pred_dir, truth_dirs):
    """Errors of ``pred_dir`` against the first truth dir; with three or more
    truth dirs, also the pairwise ground-truth discrepancy."""
    _prepare(cfg, out_dir)
    dx = cfg.grid().dx
    truths = [load_series(d, dx) for d in truth_dirs]
    if any(not t for t in truths):
        raise DatasetError("a truth directory holds no snapshots")
    pred = load_series(pred_dir, dx)
    if not pred:
        raise DatasetError(f"no snapshots in {pred_dir}")
    ev = evaluate(pred, truths[0], out_dir)
    out = {"aligned_steps": len(ev.metrics), "qoi_errors": ev.qoi_errors}
    if len(truths) >= 3:
        disc = pairwise_discrepancy(truths)
        path = os.path.join(out_dir, "discrepancy.csv")
        write_metrics_csv(disc, path)
        out["discrepancy_csv"] = path
    return out


def report_cmd(cfg, out_dir, timing_path=None, t_hf=None, t_model=None):
    _prepare(cfg, out_dir)
    if timing_path is not None:
        with open(timing_path) as fh:
            timing = json.load(fh)
        t_hf = t_hf if t_hf is not None else timing.get("t_hf_step")
        t_model = t_model if t_model is not None else timing.get("t_model_pass")
    if t_hf is None or t_model is None:
        raise ConfigError("report needs --timing or both --t-hf and --t-model")
    rep = speedup_report(float(t_hf), float(t_model), cfg.schedule())
    path = os.path.join(out_dir, "report.txt")
    with open(path, "w") as fh:
        fh.write(rep.to_text())
    return {"report": path, "per_leap": rep.per_leap, "end_to_end": rep.end_to_end}


def snapshot_steps(directory, dx=0.2):
    return [read_snapshot(p, dx).step for p in list_snapshots(directory)]
