"""High-fidelity time integration.

phi: forward Euler with an obstacle clamp to [0, 1].
cA, cB: stabilized semi-implicit step

    (1 + dt S B) c^{n+1} = c^n + dt (R(c^n) + S B c^n)

where R is the conservative explicit right-hand side and B the discrete
biharmonic. B is diagonal in x-Fourier space; in y it is the square of the
ghost-cell second-difference matrix, giving one pentadiagonal solve per mode.
In closed (fully periodic) mode B is diagonal in 2D Fourier space.
"""

from __future__ import annotations

import csv
import math
import os
import time as _time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kernels
from .energy import (
    dF_dphi,
    diffusion_potentials,
    mobility_matrix,
    reservoir_potentials,
)
from .errors import NumericError, ParameterError
from .fields import BoundarySpec, FieldState, project_simplex, snapshot_name, write_snapshot


def default_stabilization(p):
    """Fixed S = 2 D_liq (V_a / kT) kappa / 4, a state-independent bound."""
    return 2.0 * p.D_liq / p.kT_over_Va * p.kappa * 0.25


def stiff_rate(state, p):
    """max_x of the spectral radius of kappa M(x) K, K = [[2, 1], [1, 2]].

    kappa M K is the coefficient matrix of the biharmonic part of the
    species equations (the cC gradient couples A and B through K).
    """
    maa, mab, mbb = mobility_matrix(state.phi, state.cA, state.cB, p)
    a, b = 2.0 * maa + mab, maa + 2.0 * mab
    c, d = 2.0 * mab + mbb, mab + 2.0 * mbb
    tr, det = a + d, a * d - b * c
    rho = 0.5 * tr + np.sqrt(np.maximum(0.25 * tr * tr - det, 0.0))
    return p.kappa * float(rho.max())


def adaptive_stabilization(state, p):
    """S = stiff_rate / 2, the smallest S for which every Fourier mode of the
    frozen-coefficient problem has amplification factor <= 1."""
    return 0.5 * stiff_rate(state, p)


@dataclass
class SolverConfig:
    dt: float = 1e-12
    stabilization: float | None = None  # None -> adaptive_stabilization(state) each step
    boundary: BoundarySpec = field(default_factory=BoundarySpec)
    snapshot_cadence: int = 1000

    def __post_init__(self):
        if not self.dt > 0:
            raise ParameterError(f"dt={self.dt} must be positive")
        if self.stabilization is not None and self.stabilization < 0:
            raise ParameterError("stabilization must be >= 0")
        if self.snapshot_cadence < 1:
            raise ParameterError("snapshot_cadence must be >= 1")

    def S(self, p, state=None):
        if self.stabilization is not None:
            return self.stabilization
        if state is None:
            return default_stabilization(p)
        return adaptive_stabilization(state, p)


@dataclass
class StepReport:
    step: int
    time_s: float
    wall_s: float
    m_phi: float
    m_A: float
    m_B: float
    phi_min: float
    phi_max: float
    cA_min: float
    cA_max: float
    cB_min: float
    cB_max: float

    CSV_COLUMNS = ("step", "time_s", "wall_s", "m_phi", "m_A", "m_B", "phi_min", "phi_max")

    @classmethod
    def of(cls, state, wall_s):
        area = state.grid.cell_area
        return cls(state.step, state.time, wall_s,
                   float(state.phi.sum() * area), float(state.cA.sum() * area),
                   float(state.cB.sum() * area),
                   float(state.phi.min()), float(state.phi.max()),
                   float(state.cA.min()), float(state.cA.max()),
                   float(state.cB.min()), float(state.cB.max()))

    def csv_row(self):
        return [repr(getattr(self, c)) if isinstance(getattr(self, c), float)
                else getattr(self, c) for c in self.CSV_COLUMNS]


def step_phi(state, p, dt, bc=BoundarySpec()):
    rate = p.M_phi_si * math.pi ** 2 / (8.0 * p.eta)
    raw = state.phi - dt * rate * dF_dphi(state, p, bc)
    if not np.all(np.isfinite(raw)):
        raise NumericError(f"non-finite phi update at step {state.step}", step=state.step)
    return np.clip(raw, 0.0, 1.0)


def explicit_species_rhs(state, p, bc=BoundarySpec()):
    """Conservative flux-form div(sum_j M_ij grad mu_j) for i = A, B."""
    dx = state.grid.dx_m
    muA, muB = diffusion_potentials(state, p, bc)
    maa, mab, mbb = mobility_matrix(state.phi, state.cA, state.cB, p)

    def face_fluxes(axis):
        # flux on the face between cell k and k+1 along axis (periodic wrap)
        fa = 0.5 * (maa + np.roll(maa, -1, axis))
        fab = 0.5 * (mab + np.roll(mab, -1, axis))
        fb = 0.5 * (mbb + np.roll(mbb, -1, axis))
        da = np.roll(muA, -1, axis) - muA
        db = np.roll(muB, -1, axis) - muB
        return fa * da + fab * db, fab * da + fb * db

    jxA, jxB = face_fluxes(1)
    jyA, jyB = face_fluxes(0)
    if not bc.periodic_y:
        # top face: reservoir ghost has zero mobility, so the face average is half the cell's
        resA, resB = reservoir_potentials(p, bc)
        da = resA - muA[-1]
        db = resB - muB[-1]
        jyA[-1] = 0.5 * (maa[-1] * da + mab[-1] * db)
        jyB[-1] = 0.5 * (mab[-1] * da + mbb[-1] * db)
        below_A = np.vstack([np.zeros((1, jyA.shape[1])), jyA[:-1]])
        below_B = np.vstack([np.zeros((1, jyB.shape[1])), jyB[:-1]])
    else:
        below_A = np.roll(jyA, 1, 0)
        below_B = np.roll(jyB, 1, 0)
    rA = (jxA - np.roll(jxA, 1, 1) + jyA - below_A) / (dx * dx)
    rB = (jxB - np.roll(jxB, 1, 1) + jyB - below_B) / (dx * dx)
    return rA, rB


def _second_difference(bc_mode, ny):
    """Dimensionless y second-difference matrix with ghost rows folded in."""
    d2 = np.zeros((ny, ny))
    i = np.arange(ny)
    d2[i, i] = -2.0
    d2[i[1:], i[:-1]] = 1.0
    d2[i[:-1], i[1:]] = 1.0
    d2[0, 0] = -1.0  # Neumann bottom: ghost mirrors row 0
    # Dirichlet top: ghost is the (zero) boundary value, row keeps -2
    return d2


@lru_cache(maxsize=8)
def _y_bands(bc_mode, ny):
    """{offset: (diagonal of D2, diagonal of D2^2)}, zero-padded to length ny."""
    d2 = _second_difference(bc_mode, ny)
    d2sq = d2 @ d2

    def diag(m, k):
        return np.concatenate([np.zeros(max(-k, 0)), np.diagonal(m, k), np.zeros(max(k, 0))])

    return {k: (diag(d2, k) if abs(k) < 2 else None, diag(d2sq, k)) for k in range(-2, 3)}


class SemiImplicitOperator:
    """Pre-factored linear part of the species step for one (grid, dt, S, bc)."""

    def __init__(self, grid, dt, S, bc):
        self.grid = grid
        self.dt = dt
        self.S = S
        self.bc = bc
        ny, nx = grid.shape
        dx4 = grid.dx_m ** 4
        ax = 4.0 * np.sin(np.pi * np.arange(nx // 2 + 1) / nx) ** 2
        self.coef = dt * S / dx4
        if bc.periodic_y:
            ay = 4.0 * np.sin(np.pi * np.arange(ny) / ny) ** 2
            self.symbol = (ay[:, None] + ax[None, :]) ** 2  # B * dx^4, rfft2 layout
            self.denom = 1.0 + self.coef * self.symbol
            return
        bands = _y_bands(bc.mode, ny)
        dg = {k: bands[k][0] for k in range(-1, 2)}
        dsq = {k: bands[k][1] for k in range(-2, 3)}

        # rows of M_m = I + coef (a^2 I - 2 a D2 + D2^2)
        a = ax[:, None]
        self.e = np.ascontiguousarray(np.broadcast_to(self.coef * dsq[-2], (len(ax), ny)))
        c = self.coef * (-2.0 * a * dg[-1] + dsq[-1])
        d = 1.0 + self.coef * (a * a - 2.0 * a * dg[0] + dsq[0])
        u1 = self.coef * (-2.0 * a * dg[1] + dsq[1])
        u2 = np.broadcast_to(self.coef * dsq[2], (len(ax), ny))
        self.ax = ax
        self.d2_diag = dg[0]
        self.factors = kernels.penta_factor(
            self.e, np.ascontiguousarray(c), np.ascontiguousarray(d),
            np.ascontiguousarray(u1), np.ascontiguousarray(u2))
        if not np.all(np.isfinite(self.factors[1])) or np.any(self.factors[1] <= 0):
            raise NumericError("singular banded system in semi-implicit operator")

    def _apply_A(self, chat):
        """(a I - D2) along axis 0 of an (ny, nmodes) x-Fourier array."""
        out = self.ax[None, :] * chat - self.d2_diag[:, None] * chat
        out[1:] -= chat[:-1]
        out[:-1] -= chat[1:]
        return out

    def apply_B(self, c):
        """Discrete biharmonic of a real field (1/m^4)."""
        dx4 = self.grid.dx_m ** 4
        if self.bc.periodic_y:
            return np.fft.irfft2(self.symbol * np.fft.rfft2(c), s=c.shape) / dx4
        chat = np.fft.rfft(c, axis=1)
        return np.fft.irfft(self._apply_A(self._apply_A(chat)), n=c.shape[1], axis=1) / dx4

    def step(self, c, rhs):
        """c^{n+1} for one species given the explicit rhs R(c^n)."""
        dt = self.dt
        if self.bc.periodic_y:
            ch = np.fft.rfft2(c)
            new = (ch + dt * np.fft.rfft2(rhs) + self.coef * self.symbol * ch) / self.denom
            return np.fft.irfft2(new, s=c.shape)
        chat = np.fft.rfft(c, axis=1)
        b = chat + dt * np.fft.rfft(rhs, axis=1) + self.coef * self._apply_A(self._apply_A(chat))
        sol = np.ascontiguousarray(b.T)
        kernels.penta_solve(self.e, *self.factors, sol)
        return np.fft.irfft(sol.T, n=c.shape[1], axis=1)


@lru_cache(maxsize=16)
def _operator(grid, dt, S, bc):
    return SemiImplicitOperator(grid, dt, S, bc)


def step_species_semi_implicit(state, p, cfg, rhs=None):
    """Return (cA, cB) after one stabilized step, projected onto the simplex."""
    bc = cfg.boundary
    if rhs is None:
        rhs = explicit_species_rhs(state, p, bc)
    rA, rB = rhs
    S = cfg.S(p, state)
    if S == 0.0:
        newA = state.cA + cfg.dt * rA
        newB = state.cB + cfg.dt * rB
    else:
        op = _operator(state.grid, cfg.dt, S, bc)
        newA = op.step(state.cA, rA)
        newB = op.step(state.cB, rB)
    if not (np.all(np.isfinite(newA)) and np.all(np.isfinite(newB))):
        raise NumericError(f"non-finite species update at step {state.step}", step=state.step)
    if (newA.min() < 0 or newB.min() < 0 or (newA + newB).max() > 1):
        newA, newB = project_simplex(newA, newB)
    return newA, newB


def step_species_explicit(state, p, cfg):
    """Forward-Euler reference for the species equations (no stabilization)."""
    rA, rB = explicit_species_rhs(state, p, cfg.boundary)
    newA = state.cA + cfg.dt * rA
    newB = state.cB + cfg.dt * rB
    if (newA.min() < 0 or newB.min() < 0 or (newA + newB).max() > 1):
        newA, newB = project_simplex(newA, newB)
    return newA, newB


def hf_step(state, p, cfg, explicit=False):
    phi = step_phi(state, p, cfg.dt, cfg.boundary)
    mid = FieldState(phi, state.cA, state.cB, state.grid, state.time, state.step)
    if explicit:
        cA, cB = step_species_explicit(mid, p, cfg)
    else:
        cA, cB = step_species_semi_implicit(mid, p, cfg)
    return FieldState(phi, cA, cB, state.grid, state.time + cfg.dt, state.step + 1)


class MemorySink:
    """Collects emitted snapshots and reports in lists."""

    def __init__(self):
        self.states = []
        self.reports = []

    def emit(self, state, report):
        self.states.append(state.copy())
        self.reports.append(report)


class DirectorySink:
    """Writes snapshot files and a ``steps.csv`` of StepReports."""

    def __init__(self, directory, csv_name="steps.csv"):
        self.directory = directory
        os.makedirs(directory, exist_ok=True)
        self.csv_path = os.path.join(directory, csv_name)
        if not os.path.exists(self.csv_path):
            with open(self.csv_path, "w", newline="") as fh:
                csv.writer(fh).writerow(StepReport.CSV_COLUMNS)
        self.reports = []

    def write_state(self, state):
        path = os.path.join(self.directory, snapshot_name(state.step))
        write_snapshot(state, path)
        return path

    def emit(self, state, report):
        self.write_state(state)
        self.reports.append(report)
        with open(self.csv_path, "a", newline="") as fh:
            csv.writer(fh).writerow(report.csv_row())


def run_hf(state, p, cfg, n_steps, sink=None, explicit=False):
    """Advance ``n_steps``; emit to ``sink`` whenever the step index hits the cadence."""
    if n_steps < 0:
        raise ParameterError("n_steps must be >= 0")
    t0 = _time.perf_counter()
    for _ in range(n_steps):
        state = hf_step(state, p, cfg, explicit=explicit)
        if sink is not None and state.step % cfg.snapshot_cadence == 0:
            sink.emit(state, StepReport.of(state, _time.perf_counter() - t0))
    return state
