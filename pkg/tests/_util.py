"""Shared builders and independent reference implementations for the tests."""

import numpy as np

from lmdbench.fields import FieldState, GridSpec


def smooth_field(rng, ny, nx, lo, hi, kmax=3):
    """Random low-wavenumber periodic field rescaled into [lo, hi]."""
    y, x = np.mgrid[0:ny, 0:nx]
    f = np.zeros((ny, nx))
    for kx in range(kmax + 1):
        for ky in range(kmax + 1):
            a, b = rng.normal(size=2) / (1 + kx + ky)
            ph = 2 * np.pi * (kx * x / nx + ky * y / ny)
            f += a * np.cos(ph) + b * np.sin(ph)
    f -= f.min()
    f /= f.max()
    return lo + (hi - lo) * f


def smooth_state(seed, n=32, dx=0.2):
    """Liquid-leaning mixed state well inside the simplex."""
    rng = np.random.default_rng(seed)
    g = GridSpec(n, n, dx)
    return FieldState(smooth_field(rng, n, n, 0.1, 0.6), smooth_field(rng, n, n, 0.02, 0.1),
                      smooth_field(rng, n, n, 0.05, 0.2), g)


def disk_field(n, r=0.25, center=(0.5, 0.5), width=1.5):
    """tanh-profiled disk of solid (phi ~ 1 inside) on an n x n unit grid."""
    x = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(x, x)
    d = np.hypot(X - center[0], Y - center[1])
    return 0.5 * (1.0 - np.tanh((d - r) / (width / n)))


def brute_autocorrelation(u):
    """O(N^2) periodic two-point product average."""
    ny, nx = u.shape
    out = np.zeros_like(u, dtype=float)
    for ry in range(ny):
        for rx in range(nx):
            out[ry, rx] = np.mean(u * np.roll(np.roll(u, -ry, axis=0), -rx, axis=1))
    return out


def brute_conv2d(x, w, b, pad):
    """Direct-loop cross-correlation with zero padding."""
    ci, H, W = x.shape
    co, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    Ho, Wo = H + 2 * pad - kh + 1, W + 2 * pad - kw + 1
    out = np.zeros((co, Ho, Wo))
    for o in range(co):
        for i in range(Ho):
            for j in range(Wo):
                out[o, i, j] = np.sum(xp[:, i:i + kh, j:j + kw] * w[o]) + (b[o] if b is not None else 0)
    return out


def free_energy_fd(state, p, bc, field, delta, h):
    """Central difference of the total free energy along ``delta`` in ``field``."""
    from lmdbench.energy import total_free_energy

    vals = []
    for s in (+1, -1):
        st = state.copy()
        setattr(st, field, getattr(st, field) + s * h * delta)
        vals.append(total_free_energy(st, p, bc).F_total)
    return (vals[0] - vals[1]) / (2 * h)


def brute_species_rhs(state, p, bc):
    """Per-cell loop over the four faces of every cell; independent of the
    vectorized roll-based assembly in the solver."""
    from lmdbench.energy import diffusion_potentials, mobility_matrix, reservoir_potentials

    ny, nx = state.grid.shape
    dx = state.grid.dx_m
    mu = diffusion_potentials(state, p, bc)
    maa, mab, mbb = mobility_matrix(state.phi, state.cA, state.cB, p)
    M = [[maa, mab], [mab, mbb]]
    res = reservoir_potentials(p, bc)
    out = [np.zeros((ny, nx)), np.zeros((ny, nx))]
    for j in range(ny):
        for i in range(nx):
            for dj, di in ((0, 1), (0, -1), (1, 0), (-1, 0)):
                jj, ii = j + dj, (i + di) % nx
                if bc.periodic_y:
                    jj %= ny
                elif jj < 0:
                    continue  # no-flux bottom
                for s in range(2):
                    flux = 0.0
                    for t in range(2):
                        if jj == ny:  # reservoir neighbour with zero mobility
                            m_face = 0.5 * M[s][t][j, i]
                            dmu = res[t] - mu[t][j, i]
                        else:
                            m_face = 0.5 * (M[s][t][j, i] + M[s][t][jj, ii])
                            dmu = mu[t][jj, ii] - mu[t][j, i]
                        flux += m_face * dmu
                    out[s][j, i] += flux / dx ** 2
    return out
