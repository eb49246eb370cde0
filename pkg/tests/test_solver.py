import time
from dataclasses import replace

import numpy as np
import pytest
from _util import brute_species_rhs, smooth_state

from lmdbench.energy import ModelParams, total_free_energy
from lmdbench.errors import NumericError, ParameterError
from lmdbench.fields import BoundarySpec, FieldState, GridSpec, init_state, list_snapshots, read_snapshot
from lmdbench.solver import (
    DirectorySink,
    MemorySink,
    SemiImplicitOperator,
    SolverConfig,
    StepReport,
    adaptive_stabilization,
    default_stabilization,
    explicit_species_rhs,
    hf_step,
    run_hf,
    step_phi,
    step_species_semi_implicit,
    stiff_rate,
)

P = ModelParams()
CLOSED = BoundarySpec("closed")
PAPER = BoundarySpec("paper")


def dense_second_difference(ny):
    """y second difference with a mirrored bottom ghost and a zero top ghost."""
    d = -2.0 * np.eye(ny) + np.eye(ny, k=1) + np.eye(ny, k=-1)
    d[0, 0] += 1.0
    return d


def test_config_validation():
    with pytest.raises(ParameterError):
        SolverConfig(dt=0.0)
    with pytest.raises(ParameterError):
        SolverConfig(stabilization=-1.0)
    with pytest.raises(ParameterError):
        SolverConfig(snapshot_cadence=0)


def test_stabilization_defaults():
    s = smooth_state(0)
    assert SolverConfig().S(P) == default_stabilization(P)
    assert SolverConfig().S(P, s) == pytest.approx(0.5 * stiff_rate(s, P), rel=1e-15)
    assert SolverConfig(stabilization=3e-27).S(P, s) == 3e-27
    # pure solid: no mobility, no stiffness
    g = GridSpec(8, 8)
    solid = FieldState(np.ones(g.shape), np.full(g.shape, 0.3), np.full(g.shape, 0.7), g)
    assert adaptive_stabilization(solid, P) == 0.0


def test_stiff_rate_matches_eigenvalues():
    s = smooth_state(3, n=8)
    from lmdbench.energy import mobility_matrix
    maa, mab, mbb = mobility_matrix(s.phi, s.cA, s.cB, P)
    K = np.array([[2.0, 1.0], [1.0, 2.0]])
    rho = max(np.max(np.abs(np.linalg.eigvals(np.array([[maa[j, i], mab[j, i]], [mab[j, i], mbb[j, i]]]) @ K)))
              for j in range(8) for i in range(8))
    assert stiff_rate(s, P) == pytest.approx(P.kappa * rho, rel=1e-12)


def test_phi_step_trivial_cases():
    s = smooth_state(1)
    assert np.array_equal(step_phi(s, replace(P, M_phi=0.0), 1e-12, PAPER), s.phi)
    out = step_phi(s, P, 1e-9, PAPER)
    assert out.min() >= 0.0 and out.max() <= 1.0


@pytest.mark.parametrize("bc", [PAPER, CLOSED], ids=["paper", "closed"])
def test_species_rhs_matches_face_loop(bc):
    s = smooth_state(2, n=8)
    rA, rB = explicit_species_rhs(s, P, bc)
    bA, bB = brute_species_rhs(s, P, bc)
    scale = max(np.abs(bA).max(), np.abs(bB).max())
    assert np.abs(rA - bA).max() / scale < 1e-12
    assert np.abs(rB - bB).max() / scale < 1e-12


def test_species_rhs_uniform_and_conservative():
    g = GridSpec(16, 16)
    u = FieldState(np.full(g.shape, 0.3), np.full(g.shape, 0.2), np.full(g.shape, 0.3), g)
    rA, rB = explicit_species_rhs(u, P, CLOSED)
    assert np.all(rA == 0) and np.all(rB == 0)
    rA, rB = explicit_species_rhs(smooth_state(5), P, CLOSED)
    assert abs(rA.sum()) < 1e-12 * np.abs(rA).sum()
    assert abs(rB.sum()) < 1e-12 * np.abs(rB).sum()


def test_zero_stabilization_is_forward_euler():
    s = smooth_state(4)
    cfg = SolverConfig(dt=1e-14, stabilization=0.0, boundary=PAPER)
    rA, rB = explicit_species_rhs(s, P, PAPER)
    nA, nB = step_species_semi_implicit(s, P, cfg)
    assert np.array_equal(nA, s.cA + cfg.dt * rA)
    assert np.array_equal(nB, s.cB + cfg.dt * rB)


@pytest.mark.parametrize("bc", [PAPER, CLOSED], ids=["paper", "closed"])
def test_operator_matches_dense_solve(bc):
    ny, nx = 16, 8
    g = GridSpec(nx, ny)
    rng = np.random.default_rng(0)
    c, r = rng.random((ny, nx)), rng.normal(size=(ny, nx)) * 1e8
    dt, S = 1e-12, 3e-27
    op = SemiImplicitOperator(g, dt, S, bc)
    Dx = -2.0 * np.eye(nx) + np.roll(np.eye(nx), 1, 1) + np.roll(np.eye(nx), -1, 1)
    if bc.periodic_y:
        Dy = -2.0 * np.eye(ny) + np.roll(np.eye(ny), 1, 1) + np.roll(np.eye(ny), -1, 1)
    else:
        Dy = dense_second_difference(ny)
    L = np.kron(np.eye(ny), Dx) + np.kron(Dy, np.eye(nx))
    B = L @ L / g.dx_m ** 4
    A = np.eye(nx * ny) + dt * S * B
    rhs = c.ravel() + dt * r.ravel() + dt * S * B @ c.ravel()
    want = np.linalg.solve(A, rhs).reshape(ny, nx)
    assert np.abs(op.step(c, r) - want).max() < 1e-12
    assert np.allclose(op.apply_B(c), (B @ c.ravel()).reshape(ny, nx), rtol=1e-10, atol=0)


def test_closed_mode_conservation():
    s = smooth_state(0)
    cfg = SolverConfig(dt=1e-12, boundary=CLOSED)
    m0 = s.cA.sum(), s.cB.sum()
    s = run_hf(s, P, cfg, 1000)
    assert abs(s.cA.sum() - m0[0]) / m0[0] <= 1e-8
    assert abs(s.cB.sum() - m0[1]) / m0[1] <= 1e-8


def _gap(a, b):
    return max(np.linalg.norm(getattr(a, f) - getattr(b, f)) / np.linalg.norm(getattr(b, f))
               for f in ("phi", "cA", "cB"))


def test_small_step_equivalence_and_stabilization_invariance():
    s0 = smooth_state(1)
    S0 = adaptive_stabilization(s0, P)
    runs = {}
    for key, S, explicit in (("S", S0, False), ("2S", 2 * S0, False), ("expl", None, True)):
        s = s0
        cfg = SolverConfig(dt=1e-14, stabilization=S, boundary=CLOSED)
        for _ in range(200):
            s = hf_step(s, P, cfg, explicit=explicit)
        runs[key] = s
    gap = _gap(runs["S"], runs["expl"])
    assert gap < 1e-4

    def linf(a, b):
        return max(np.abs(getattr(a, f) - getattr(b, f)).max() for f in ("phi", "cA", "cB"))

    assert linf(runs["S"], runs["2S"]) < 10 * linf(runs["S"], runs["expl"])


def test_free_energy_non_increasing():
    s = smooth_state(0)
    cfg = SolverConfig(dt=1e-13, boundary=CLOSED)
    F = [total_free_energy(s, P, CLOSED).F_total]
    for _ in range(500):
        s = hf_step(s, P, cfg)
        F.append(total_free_energy(s, P, CLOSED).F_total)
    F = np.array(F)
    assert np.all(np.diff(F) <= 1e-6 * np.abs(F[:-1]))
    assert F[-1] < F[0]


def test_obstacle_clamp_and_simplex():
    s = init_state(GridSpec(32, 32), 0.75, 0.025, 3)
    s = run_hf(s, P, SolverConfig(dt=1e-12), 50)
    assert s.phi.min() >= 0 and s.phi.max() <= 1
    assert s.cA.min() >= 0 and s.cB.min() >= 0 and (s.cA + s.cB).max() <= 1 + 1e-15


def test_run_zero_steps_and_time():
    s = smooth_state(0)
    assert run_hf(s, P, SolverConfig(), 0) is s
    out = run_hf(s, P, SolverConfig(dt=1e-12), 7)
    assert out.step == 7 and out.time == pytest.approx(7e-12, rel=1e-14)
    with pytest.raises(ParameterError):
        run_hf(s, P, SolverConfig(), -1)


def test_nonfinite_raises_with_step():
    s = smooth_state(0)
    s.phi[3, 3] = np.nan
    with pytest.raises(NumericError) as ei:
        hf_step(s, P, SolverConfig(boundary=CLOSED))
    assert ei.value.step == 0


def test_determinism():
    a = run_hf(init_state(GridSpec(32, 32), seed=5), P, SolverConfig(), 30)
    b = run_hf(init_state(GridSpec(32, 32), seed=5), P, SolverConfig(), 30)
    for f in ("phi", "cA", "cB"):
        assert np.array_equal(getattr(a, f), getattr(b, f))


def test_sinks_and_cadence(tmp_path):
    s = init_state(GridSpec(16, 16), seed=1)
    mem = MemorySink()
    final = run_hf(s, P, SolverConfig(snapshot_cadence=4), 10, sink=mem)
    assert [x.step for x in mem.states] == [4, 8]
    assert isinstance(mem.reports[0], StepReport) and mem.reports[0].step == 4
    d = tmp_path / "run"
    sink = DirectorySink(str(d))
    run_hf(s, P, SolverConfig(snapshot_cadence=5), 10, sink=sink)
    paths = list_snapshots(str(d))
    assert len(paths) == 2
    back = read_snapshot(paths[-1])
    assert back.step == 10 and np.array_equal(back.phi, final.phi)
    lines = (d / "steps.csv").read_text().splitlines()
    assert lines[0].split(",") == list(StepReport.CSV_COLUMNS)
    assert [int(x.split(",")[0]) for x in lines[1:]] == [5, 10]


def test_paper_mode_dealloying_trend():
    # liquid advances: solid mass decreases over a short paper-mode run
    s = init_state(GridSpec(32, 32), 0.75, 0.025, 0)
    cfg = SolverConfig(dt=1e-12, snapshot_cadence=1000)
    mem = MemorySink()
    t = time.perf_counter()
    run_hf(s, P, cfg, 4000, sink=mem)
    assert time.perf_counter() - t < 60
    m = [r.m_phi for r in mem.reports]
    assert all(b < a for a, b in zip(m, m[1:]))
