"""Free-energy densities, total energy and functional derivatives.

All quantities are SI. Grid spacing is converted from nm to m, so energies
are per unit depth (J/m) and densities J/m^3.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ConfigError, DomainError
from .fields import BoundarySpec
from .stencil import grad_sq, laplacian

K_BOLTZMANN = 1.380649e-23
LOG_EPS = 1e-9
_PHI_DRIFT = 1e-12


@dataclass(frozen=True)
class ModelParams:
    T: float = 1775.0
    eta: float = 4e-9
    sigma_sl: float = 0.2
    kappa: float = 2.4e-9
    L_A: float = 2.82e9
    L_B: float = 1.89e9
    L_C: float = 1.84e9
    T_A: float = 3290.0
    T_B: float = 1941.0
    T_C: float = 1358.0
    V_a: float = 0.01e-27
    Omega_AC: float = 1.44e10
    M_phi: float = 12.0  # m s^-1 GPa^-1
    D_liq: float = 7e-9
    k_B: float = K_BOLTZMANN

    @property
    def kT_over_Va(self):
        return self.k_B * self.T / self.V_a

    @property
    def M_phi_si(self):
        """Interface mobility in m s^-1 Pa^-1."""
        return self.M_phi * 1e-9

    def undercooling(self):
        """(L_i (T - T_i) / T_i) for i = A, B, C."""
        return tuple(L * (self.T - Ti) / Ti for L, Ti in
                     ((self.L_A, self.T_A), (self.L_B, self.T_B), (self.L_C, self.T_C)))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown params keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class EnergyBreakdown:
    f_phase_total: float
    f_chem_total: float

    @property
    def F_total(self):
        return self.f_phase_total + self.f_chem_total


def _check_phi(phi):
    phi = np.asarray(phi, dtype=np.float64)
    if np.any(phi < -_PHI_DRIFT) or np.any(phi > 1 + _PHI_DRIFT):
        raise DomainError("phi outside [0, 1]")
    return np.clip(phi, 0.0, 1.0)


def h_interp(phi):
    phi = _check_phi(phi)
    s = 2.0 * phi - 1.0
    h = 0.5 + (2.0 / math.pi) * (s * np.sqrt(phi * (1.0 - phi)) + 0.5 * np.arcsin(s))
    return np.clip(h, 0.0, 1.0)  # cancellation near the endpoints


def h_prime(phi):
    phi = _check_phi(phi)
    return (8.0 / math.pi) * np.sqrt(phi * (1.0 - phi))


def _delta_g(cA, cB, cC, p):
    uA, uB, uC = p.undercooling()
    return cA * uA + cB * uB + cC * uC


def delta_g_sl(cA, cB, cC, p):
    c = [np.asarray(x, dtype=np.float64) for x in (cA, cB, cC)]
    if any(np.any(x < 0) for x in c) or np.any(np.abs(c[0] + c[1] + c[2] - 1.0) > 1e-9):
        raise DomainError("mole fractions off the simplex")
    return _delta_g(*c, p)


def _xlogx(c):
    return c * np.log(np.maximum(c, LOG_EPS))


def _dxlogx(c):
    # exact derivative of c*ln(max(c, eps))
    return np.log(np.maximum(c, LOG_EPS)) + (c > LOG_EPS)


def _phase_density(phi, gsq, p):
    return (4.0 * p.sigma_sl / p.eta) * (p.eta ** 2 / math.pi ** 2 * gsq + phi * (1.0 - phi))


def _chem_density(phi, cA, cB, gsq_sum, p):
    cC = 1.0 - cA - cB
    entropy = p.kT_over_Va * (_xlogx(cA) + _xlogx(cB) + _xlogx(cC))
    return (entropy + p.Omega_AC * cA * cC + h_interp(phi) * _delta_g(cA, cB, cC, p)
            + 0.5 * p.kappa * gsq_sum)


def f_phase_density(phi, grad_phi, p):
    """``grad_phi`` is the gradient magnitude in 1/m."""
    g = np.asarray(grad_phi, dtype=np.float64)
    return _phase_density(np.asarray(phi, dtype=np.float64), g * g, p)


def f_chem_density(phi, cA, cB, grads, p):
    """``grads`` is ``(grad_cA, grad_cB)``, each a 2-vector (or ``None`` for zero).

    The cC gradient is -grad_cA - grad_cB.
    """
    gA = np.zeros(2) if grads is None or grads[0] is None else np.asarray(grads[0], float)
    gB = np.zeros(2) if grads is None or grads[1] is None else np.asarray(grads[1], float)
    gC = -gA - gB
    gsum = (gA * gA).sum(-1) + (gB * gB).sum(-1) + (gC * gC).sum(-1)
    return _chem_density(_check_phi(phi), np.asarray(cA, float), np.asarray(cB, float), gsum, p)


def _gsq_fields(state, bc):
    dx = state.grid.dx_m
    cC = 1.0 - state.cA - state.cB
    g_phi = grad_sq(state.phi, bc, dx, bc.top_phi)
    g_c = (grad_sq(state.cA, bc, dx, bc.top_cA) + grad_sq(state.cB, bc, dx, bc.top_cB)
           + grad_sq(cC, bc, dx, 1.0 - bc.top_cA - bc.top_cB))
    return g_phi, g_c


def energy_densities(state, p, bc=BoundarySpec()):
    """Per-cell (f_phase, f_chem) arrays in J/m^3."""
    g_phi, g_c = _gsq_fields(state, bc)
    return (_phase_density(state.phi, g_phi, p),
            _chem_density(state.phi, state.cA, state.cB, g_c, p))


def total_free_energy(state, p, bc=BoundarySpec()):
    fp, fc = energy_densities(state, p, bc)
    area = state.grid.dx_m ** 2
    return EnergyBreakdown(float(fp.sum() * area), float(fc.sum() * area))


def dF_dphi(state, p, bc=BoundarySpec()):
    phi = state.phi
    dx = state.grid.dx_m
    lap = laplacian(phi, bc, dx, bc.top_phi)
    cC = 1.0 - state.cA - state.cB
    return ((4.0 * p.sigma_sl / p.eta) * (1.0 - 2.0 * phi)
            - (8.0 * p.sigma_sl * p.eta / math.pi ** 2) * lap
            + h_prime(phi) * _delta_g(state.cA, state.cB, cC, p))


def _local_potentials(phi, cA, cB, p):
    """Diffusion potentials without the gradient-penalty part."""
    cC = 1.0 - cA - cB
    uA, uB, uC = p.undercooling()
    h = h_interp(phi)
    ent_C = _dxlogx(cC)
    muA = p.kT_over_Va * (_dxlogx(cA) - ent_C) + p.Omega_AC * (cC - cA) + h * (uA - uC)
    muB = p.kT_over_Va * (_dxlogx(cB) - ent_C) - p.Omega_AC * cA + h * (uB - uC)
    return muA, muB


def diffusion_potentials(state, p, bc=BoundarySpec()):
    """(mu_A, mu_B): variational derivatives of F w.r.t. cA, cB at fixed cA+cB+cC=1."""
    dx = state.grid.dx_m
    lapA = laplacian(state.cA, bc, dx, bc.top_cA)
    lapB = laplacian(state.cB, bc, dx, bc.top_cB)
    muA, muB = _local_potentials(state.phi, state.cA, state.cB, p)
    muA -= p.kappa * (2.0 * lapA + lapB)
    muB -= p.kappa * (2.0 * lapB + lapA)
    return muA, muB


def diffusion_potential(state, p, species, bc=BoundarySpec()):
    muA, muB = diffusion_potentials(state, p, bc)
    if species == "A":
        return muA
    if species == "B":
        return muB
    raise ValueError(f"species must be 'A' or 'B', got {species!r}")


def reservoir_potentials(p, bc=BoundarySpec()):
    """Potentials of the uniform Dirichlet reservoir above the top edge."""
    muA, muB = _local_potentials(np.array(bc.top_phi), np.array(bc.top_cA),
                                 np.array(bc.top_cB), p)
    return float(muA), float(muB)


def mobility_matrix(phi, cA, cB, p):
    """(M_AA, M_AB, M_BB) arrays; M_BA == M_AB."""
    pref = p.D_liq * (1.0 - phi) / p.kT_over_Va
    return pref * cA * (1.0 - cA), -pref * (cA * cB), pref * cB * (1.0 - cB)


def solute_mobility(state, p, i, j):
    c = {"A": state.cA, "B": state.cB}
    if i not in c or j not in c:
        raise ValueError("species must be 'A' or 'B'")
    pref = p.D_liq * (1.0 - state.phi) / p.kT_over_Va
    if i == j:
        return pref * c[i] * (1.0 - c[i])
    return -pref * (state.cA * state.cB)
