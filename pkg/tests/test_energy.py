import math
from dataclasses import replace

import numpy as np
import pytest
from _util import free_energy_fd, smooth_state
from hypothesis import given, settings
from hypothesis import strategies as st

from lmdbench.energy import (
    ModelParams,
    dF_dphi,
    delta_g_sl,
    diffusion_potential,
    diffusion_potentials,
    f_chem_density,
    f_phase_density,
    h_interp,
    h_prime,
    mobility_matrix,
    solute_mobility,
    total_free_energy,
)
from lmdbench.errors import ConfigError, DomainError
from lmdbench.fields import BoundarySpec, FieldState, GridSpec

P = ModelParams()

# h(x) = integral_0^x (8/pi) sqrt(t(1-t)) dt, evaluated once with scipy quad
H_QUAD = {0.1: 0.052044019330913925, 0.25: 0.19550110947788535,
          0.75: 0.804498890522115, 0.9: 0.9479559806690862}


def uniform(g, phi, a, b):
    return FieldState(np.full(g.shape, phi), np.full(g.shape, a), np.full(g.shape, b), g)


def test_table1_defaults():
    d = P.to_dict()
    expect = dict(T=1775, eta=4e-9, sigma_sl=0.2, kappa=2.4e-9, L_A=2.82e9, L_B=1.89e9,
                  L_C=1.84e9, T_A=3290, T_B=1941, T_C=1358, V_a=1e-29, Omega_AC=1.44e10,
                  M_phi=12.0, D_liq=7e-9)
    for k, v in expect.items():
        assert d[k] == pytest.approx(v, rel=1e-15), k
    with pytest.raises(ConfigError):
        ModelParams.from_dict({"bogus": 1.0})


def test_h_endpoints_and_midpoint():
    assert h_interp(0.0) == 0.0
    assert h_interp(1.0) == 1.0
    assert h_interp(0.5) == 0.5


@pytest.mark.parametrize("x", sorted(H_QUAD))
def test_h_matches_integrated_derivative(x):
    assert h_interp(x) == pytest.approx(H_QUAD[x], abs=1e-12)


def test_h_prime_closed_form_and_fd():
    assert h_prime(0.5) == pytest.approx(4 / math.pi, rel=1e-15)
    x = np.linspace(0.05, 0.95, 20)
    fd = (h_interp(x + 1e-6) - h_interp(x - 1e-6)) / 2e-6
    assert np.max(np.abs(fd - h_prime(x))) < 1e-6


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 1.0))
def test_h_symmetry_and_range(x):
    assert h_interp(x) + h_interp(1 - x) == pytest.approx(1.0, abs=1e-12)
    assert 0.0 <= h_interp(x) <= 1.0


def test_h_monotone_and_domain():
    x = np.linspace(0, 1, 2001)
    assert np.all(np.diff(h_interp(x)) > 0)
    assert h_interp(1 + 5e-13) == 1.0
    with pytest.raises(DomainError):
        h_interp(1.001)
    with pytest.raises(DomainError):
        h_prime(-1e-6)


def test_delta_g_pure_components():
    assert delta_g_sl(1, 0, 0, P) == pytest.approx(2.82e9 * (1775 - 3290) / 3290, rel=1e-14)
    assert delta_g_sl(1, 0, 0, P) == pytest.approx(-1.2986e9, rel=1e-4)
    assert delta_g_sl(0, 0, 1, P) == pytest.approx(1.84e9 * (1775 - 1358) / 1358, rel=1e-14)
    assert delta_g_sl(0, 0, 1, P) == pytest.approx(5.649e8, rel=1e-3)
    q = replace(P, T_A=P.T, T_B=P.T, T_C=P.T)
    assert delta_g_sl(0.2, 0.3, 0.5, q) == 0.0
    with pytest.raises(DomainError):
        delta_g_sl(0.5, 0.6, 0.1, P)


def test_phase_density_values():
    assert f_phase_density(0.0, 0.0, P) == 0.0
    assert f_phase_density(1.0, 0.0, P) == 0.0
    assert f_phase_density(0.5, 0.0, P) == pytest.approx(5.0e7, rel=1e-14)
    x = np.linspace(0, 1, 11)
    assert np.all(f_phase_density(x, 1e8, P) >= 0)


def test_chem_density_values():
    assert f_chem_density(0.0, 0.0, 0.0, None, P) == 0.0
    third = 1.0 / 3.0
    uA, uB, uC = (L * (P.T - T) / T for L, T in ((P.L_A, P.T_A), (P.L_B, P.T_B), (P.L_C, P.T_C)))
    kT = P.k_B * P.T / P.V_a
    expect = kT * math.log(third) + P.Omega_AC / 9 + third * (uA + uB + uC)
    got = f_chem_density(1.0, third, third, None, P)
    assert got == pytest.approx(expect, rel=1e-12)
    assert f_chem_density(1.0, third, third, ((0.0, 0.0), (0.0, 0.0)), P) == got


@pytest.mark.parametrize("mode", ["paper", "closed"])
def test_uniform_liquid_energy_zero(mode):
    g = GridSpec(16, 16)
    F = total_free_energy(uniform(g, 0.0, 0.0, 0.0), P, BoundarySpec(mode))
    assert F.F_total == 0.0
    assert F.F_total == F.f_phase_total + F.f_chem_total


def test_dF_dphi_stationary_point():
    g = GridSpec(16, 16)
    q = replace(P, T_A=P.T, T_B=P.T, T_C=P.T)
    d = dF_dphi(uniform(g, 0.5, 0.2, 0.3), q, BoundarySpec("closed"))
    assert np.max(np.abs(d)) < 1e-6


def test_uniform_potentials_constant():
    g = GridSpec(16, 16)
    muA, muB = diffusion_potentials(uniform(g, 0.3, 0.2, 0.3), P, BoundarySpec("closed"))
    assert np.ptp(muA) == 0.0 and np.ptp(muB) == 0.0


def test_species_symmetry():
    q = replace(P, Omega_AC=0.0, L_B=P.L_A, T_B=P.T_A)
    s = smooth_state(4)
    s.cB = s.cA.copy()
    bc = BoundarySpec("closed")
    assert np.array_equal(diffusion_potential(s, q, "A", bc), diffusion_potential(s, q, "B", bc))


def test_mobility_values():
    g = GridSpec(8, 8)
    s = uniform(g, 0.0, 0.3, 0.7)
    mab = solute_mobility(s, P, "A", "B")
    assert mab[0, 0] == pytest.approx(-P.D_liq * P.V_a / (P.k_B * P.T) * 0.21, rel=1e-14)
    assert np.all(solute_mobility(uniform(g, 1.0, 0.3, 0.7), P, "A", "A") == 0)
    assert np.all(solute_mobility(uniform(g, 0.2, 0.0, 0.7), P, "A", "A") == 0)
    s2 = smooth_state(1)
    assert np.array_equal(solute_mobility(s2, P, "A", "B"), solute_mobility(s2, P, "B", "A"))
    maa, mab2, mbb = mobility_matrix(s2.phi, s2.cA, s2.cB, P)
    assert np.all(maa * mbb - mab2 ** 2 >= 0)  # positive semi-definite


@pytest.mark.parametrize("mode", ["paper", "closed"])
@pytest.mark.parametrize("seed", range(3))
def test_functional_derivatives_match_fd(mode, seed):
    bc = BoundarySpec(mode)
    s = smooth_state(seed)
    rng = np.random.default_rng(100 + seed)
    area = s.grid.dx_m ** 2
    muA, muB = diffusion_potentials(s, P, bc)
    for field, deriv, h in (("phi", dF_dphi(s, P, bc), 1e-5), ("cA", muA, 1e-6), ("cB", muB, 1e-6)):
        delta = rng.uniform(-1, 1, s.grid.shape)
        analytic = np.sum(deriv * delta) * area
        fd = free_energy_fd(s, P, bc, field, delta, h)
        assert abs(analytic - fd) / abs(fd) < 1e-5, field


def test_energy_grid_convergence():
    # smooth analytic field: halving dx changes F by O(dx^2)
    def F(n):
        dx = 0.2 * 32 / n
        g = GridSpec(n, n, dx)
        x = (np.arange(n) + 0.5) / n
        X, Y = np.meshgrid(x, x)
        phi = 0.5 + 0.3 * np.sin(2 * np.pi * X) * np.cos(2 * np.pi * Y)
        cA = 0.2 + 0.05 * np.cos(2 * np.pi * X)
        cB = 0.3 + 0.05 * np.sin(2 * np.pi * Y)
        return total_free_energy(FieldState(phi, cA, cB, g), P, BoundarySpec("closed")).F_total

    f32, f64, f128 = F(32), F(64), F(128)
    ratio = (f32 - f64) / (f64 - f128)
    assert 3.5 < ratio < 4.5
