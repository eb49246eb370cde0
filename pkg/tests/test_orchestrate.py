import csv
import math

import numpy as np
import pytest
from _util import disk_field

from lmdbench import autodiff as ad
from lmdbench.energy import ModelParams
from lmdbench.errors import AlignmentError, ConfigError, DatasetError, NumericError
from lmdbench.fields import FieldState, GridSpec, init_state, snapshot_name, write_snapshot
from lmdbench.metrics import METRICS_COLUMNS, ac_relative_error
from lmdbench.model import UAFNOConfig, build
from lmdbench.orchestrate import (
    QOI_ERROR_COLUMNS,
    LeapSpec,
    RolloutSchedule,
    TrainConfig,
    build_dataset,
    evaluate,
    evaluate_loss,
    pairs_from_states,
    plan_schedule,
    read_steps_timing,
    rollout_auto,
    rollout_hybrid,
    speedup_report,
    surrogate_leap,
    train,
)
from lmdbench.qoi import QOI_COLUMNS, read_qoi_csv
from lmdbench.solver import DirectorySink, MemorySink, SolverConfig, run_hf

P = ModelParams()
G16 = GridSpec(16, 16)
TINY = UAFNOConfig(height=16, width=16, enc_levels=2, base_channels=4, n_blocks=1, heads=2,
                   mlp_hidden=8)


@pytest.fixture(autouse=True)
def fresh_tape():
    ad.new_tape()


def write_run(d, steps, seed=0, g=G16):
    d.mkdir(parents=True, exist_ok=True)
    for k in steps:
        s = init_state(g, seed=seed + k)
        s.step, s.time = k, k * 1e-12
        write_snapshot(s, str(d / snapshot_name(k)))
    return str(d)


def toy_pairs(n=3):
    states = []
    for k in range(n + 1):
        s = init_state(G16, seed=k)
        s.step = 10 * k
        states.append(s)
    pairs, skipped = pairs_from_states([states], 10)
    assert len(pairs) == n and skipped == 1
    return pairs


# ------------------------------------------------------------------ schedule

def test_schedule_validation():
    with pytest.raises(ConfigError):
        LeapSpec(0)
    with pytest.raises(ConfigError):
        RolloutSchedule(n_init=-1, n_leaps=1)
    assert LeapSpec(50000).dtau == pytest.approx(5e-8)


def test_full_scale_auto_timeline():
    s = RolloutSchedule(n_init=10 ** 6, n_leaps=100, n_relax=0, leap_steps=50000)
    assert s.final_step == 6 * 10 ** 6
    steps = s.emitted_steps()
    assert len(steps) == 100 and steps[0] == 1_050_000 and steps[-1] == 6_000_000
    assert np.all(np.diff(steps) == 50000)


def test_hybrid_timeline_reference():
    s = RolloutSchedule(n_init=10 ** 6, n_leaps=3, n_relax=10000, leap_steps=50000)
    assert s.emitted_steps() == [1_050_000, 1_060_000, 1_110_000, 1_120_000, 1_170_000, 1_180_000]
    assert s.total_hf_steps == 10 ** 6 + 3 * 10000


def test_timeline_matches_direct_counting():
    for n_init, leap, relax, n in ((7, 5, 3, 4), (0, 2, 0, 3), (10, 1, 1, 5)):
        s = RolloutSchedule(n_init, n, relax, leap)
        step, seen = n_init, []
        for _ in range(n):
            step += leap
            seen.append(step)
            if relax:
                step += relax
                seen.append(step)
        assert s.emitted_steps() == seen and s.final_step == step
        segs = plan_schedule(s)
        assert sum(b - a for _, a, b in segs) == s.final_step
        assert all(segs[i][2] == segs[i + 1][1] for i in range(len(segs) - 1))


# ------------------------------------------------------------------ dataset

def test_dataset_counting(tmp_path):
    d = write_run(tmp_path / "r0", [0, 50000, 100000])
    pairs = build_dataset([d], LeapSpec(50000))
    assert [(p.step_in, p.step_out) for p in pairs] == [(0, 50000), (50000, 100000)]
    assert pairs[0].x.shape == (3, 16, 16)
    with pytest.raises(DatasetError):
        build_dataset([d], 200000)


def test_pairs_never_straddle_runs(tmp_path):
    a = write_run(tmp_path / "a", [0, 10])
    b = write_run(tmp_path / "b", [20, 30])
    pairs = build_dataset([a, b], 10)
    assert [(p.run, p.step_in) for p in pairs] == [(a, 0), (b, 20)]
    with pytest.raises(DatasetError):
        build_dataset([a, b], 20)  # (10 in a, 30 in b) must not pair


# ------------------------------------------------------------------ training

def test_train_lr_zero_keeps_weights(tmp_path):
    m = build(TINY, seed=0)
    before = {k: v.data.copy() for k, v in m.params.items()}
    pairs = toy_pairs()
    res = train(m, pairs, TrainConfig(epochs=2, lr=0.0), loss_csv=str(tmp_path / "loss.csv"))
    assert all(np.array_equal(before[k], m[k].data) for k in before)
    assert res.epoch_loss[0] == pytest.approx(res.epoch_loss[1], rel=1e-14)
    rows = list(csv.reader(open(tmp_path / "loss.csv")))
    assert rows[0] == ["epoch", "mean_mse"] and len(rows) == 3


def test_train_determinism_and_progress():
    pairs = toy_pairs()
    runs = []
    for _ in range(2):
        m = build(TINY, seed=1)
        runs.append((train(m, pairs, TrainConfig(epochs=3, lr=1e-3, seed=7)), m))
    assert runs[0][0].step_loss == runs[1][0].step_loss
    assert all(np.array_equal(runs[0][1][k].data, runs[1][1][k].data) for k in runs[0][1].params)
    m0 = build(TINY, seed=1)
    assert evaluate_loss(runs[0][1], pairs) < evaluate_loss(m0, pairs)


def test_train_batching_and_limits():
    pairs = toy_pairs(5)
    res = train(build(TINY), pairs, TrainConfig(epochs=2, batch_size=2))
    assert res.steps == 6
    res = train(build(TINY), pairs, TrainConfig(epochs=5, max_steps=4))
    assert res.steps == 4
    with pytest.raises(DatasetError):
        train(build(TINY), [], TrainConfig())
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)


def test_train_non_finite_loss():
    m = build(TINY)
    pairs = toy_pairs(1)
    pairs[0].y = np.full_like(pairs[0].y, np.nan)
    with pytest.raises(NumericError):
        train(m, pairs, TrainConfig(epochs=1))


# ------------------------------------------------------------------ roll-outs

def test_surrogate_leap_clock_and_simplex():
    m = build(TINY, seed=0)
    m["head.b"].data[...] = [0.0, 5.0, 5.0]  # push cA + cB above 1
    s = init_state(G16, seed=0)
    out = surrogate_leap(m, s, 50, 1e-12)
    assert out.step == 50 and out.time == pytest.approx(5e-11)
    assert (out.cA + out.cB).max() <= 1.0 + 1e-15 and out.cA.min() >= 0


def test_rollouts():
    m = build(TINY, seed=0)
    s0 = init_state(G16, seed=2)
    cfg = SolverConfig(snapshot_cadence=5)
    sched = RolloutSchedule(n_init=10, n_leaps=3, n_relax=0, leap_steps=100)
    a = rollout_auto(s0, m, sched, P, cfg)
    b = rollout_hybrid(s0, m, sched, P, cfg)
    assert [s.step for s in a.states] == sched.emitted_steps() == [110, 210, 310]
    assert [s.step for s in a.init_states] == [5, 10]
    assert a.forward_passes == 3 and a.hf_steps == 10
    for x, y in zip(a.states, b.states):
        assert all(np.array_equal(getattr(x, f), getattr(y, f)) for f in ("phi", "cA", "cB"))
    hyb = RolloutSchedule(n_init=10, n_leaps=2, n_relax=4, leap_steps=100)
    mem = MemorySink()
    h = rollout_hybrid(s0, m, hyb, P, cfg, sink=mem)
    assert [s.step for s in h.states] == hyb.emitted_steps() == [110, 114, 214, 218]
    assert [s.step for s in mem.states] == [5, 10, 110, 114, 214, 218]
    assert h.hf_steps == 18
    with pytest.raises(ConfigError):
        rollout_auto(s0, m, hyb, P, cfg)
    pure = rollout_auto(s0, m, RolloutSchedule(10, 0), P, cfg)
    assert pure.states == [] and pure.forward_passes == 0
    with pytest.raises(ConfigError):
        rollout_auto(init_state(GridSpec(32, 32)), m, sched, P, cfg)


# ------------------------------------------------------------------ evaluation

def disk_series(radii, steps, n=64):
    out = []
    for r, k in zip(radii, steps):
        phi = disk_field(n, r)
        z = np.zeros_like(phi)
        out.append(FieldState(phi, z + 0.2 * phi, z + 0.3 * phi, GridSpec(n, n), k * 1e-12, k))
    return out


def test_evaluate_self_is_zero(tmp_path):
    truth = disk_series([0.2, 0.22, 0.24], [10, 20, 30])
    ev = evaluate(truth, truth, str(tmp_path))
    assert all(r.eac_phi == 0 and r.eac_cA == 0 and r.eac_cB == 0 for r in ev.metrics)
    assert set(ev.qoi_errors) == set(QOI_ERROR_COLUMNS) and len(QOI_ERROR_COLUMNS) == 8
    assert all(v == 0 or math.isnan(v) for v in ev.qoi_errors.values())


def test_evaluate_against_independent_recomputation(tmp_path):
    truth = disk_series([0.2, 0.22, 0.24], [10, 20, 30])
    pred = disk_series([0.21, 0.2, 0.26, 0.3], [10, 20, 30, 40])
    ev = evaluate(pred, truth, str(tmp_path))
    with open(tmp_path / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert tuple(rows[0]) == METRICS_COLUMNS and len(rows) == 3
    for row, t, p in zip(rows, truth, pred):
        assert float(row["eac_phi"]) == pytest.approx(ac_relative_error(t.phi, p.phi), abs=1e-12)
    qt, qp = read_qoi_csv(tmp_path / "qoi_truth.csv"), read_qoi_csv(tmp_path / "qoi_pred.csv")
    with open(tmp_path / "qoi_errors.csv") as fh:
        erow = next(csv.DictReader(fh))
    fields = dict(zip(QOI_ERROR_COLUMNS, ("mu_k", "sigma_k", "perimeter", "m_phi", "m_A", "m_B",
                                          "max_p", "mu_d")))
    for col, f in fields.items():
        a = np.array([getattr(r, f) for r in qt])
        b = np.array([getattr(r, f) for r in qp])
        ok = np.isfinite(a) & np.isfinite(b)
        if not ok.any():
            assert erow[col] == ""
            continue
        want = math.sqrt(sum((b[i] - a[i]) ** 2 for i in np.flatnonzero(ok))) / math.sqrt(
            sum(a[i] ** 2 for i in np.flatnonzero(ok)))
        assert float(erow[col]) == pytest.approx(want, abs=1e-12)
    assert float(erow["interface_perimeter"]) > 0
    assert tuple(read_qoi_csv(tmp_path / "qoi_pred.csv")[0].__dict__) == QOI_COLUMNS
    with pytest.raises(AlignmentError):
        evaluate(disk_series([0.2], [5]), truth)


# ------------------------------------------------------------------ timing

def test_speedup_paper_numbers():
    sched = RolloutSchedule(n_init=10 ** 6, n_leaps=100, n_relax=0, leap_steps=50000)
    rep = speedup_report(0.026, 0.116, sched)
    assert rep.per_leap == pytest.approx(50000 * 0.026 / 0.116, rel=1e-14)
    assert rep.per_leap == pytest.approx(11200, rel=0.01)
    assert rep.end_to_end == pytest.approx(6.0, rel=0.01)
    assert rep.end_to_end_limit == pytest.approx(6.0, rel=1e-14)
    assert speedup_report(0.026, 1e-12, sched).end_to_end == pytest.approx(6.0, rel=1e-9)
    assert "per_leap = " in rep.to_text()


def test_speedup_bounds_and_errors():
    for t_model in (1e-9, 0.116, 5.0):
        s = RolloutSchedule(n_init=1000, n_leaps=50, n_relax=500, leap_steps=500)
        assert speedup_report(0.026, t_model, s).end_to_end < 2
    with pytest.raises(NumericError):
        speedup_report(0.0, 0.1, RolloutSchedule(1, 1))


def test_read_steps_timing(tmp_path):
    d = tmp_path / "run"
    run_hf(init_state(G16), P, SolverConfig(snapshot_cadence=5), 15, sink=DirectorySink(str(d)))
    t = read_steps_timing(str(d / "steps.csv"))
    assert 0 < t < 1
    (tmp_path / "one.csv").write_text("step,wall_s\n5,0.1\n")
    with pytest.raises(NumericError):
        read_steps_timing(str(tmp_path / "one.csv"))
