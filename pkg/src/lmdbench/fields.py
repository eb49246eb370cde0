"""Grid geometry, field state, boundary modes, initial conditions and snapshots.

Arrays are stored ``(ny, nx)`` with row 0 at the bottom of the domain
(alloy side) and row ``ny - 1`` at the top (liquid reservoir side).
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import FormatError, ParameterError, TruncationError

SNAPSHOT_MAGIC = b"PFLD"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIIIIdQ")

PAPER = "paper"
CLOSED = "closed"


def _is_pow2(n):
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    dx: float = 0.2  # nm

    def __post_init__(self):
        for name in ("nx", "ny"):
            n = getattr(self, name)
            if int(n) != n or n < 8 or not _is_pow2(int(n)):
                raise ParameterError(f"{name}={n} must be a power of two >= 8")
        if not self.dx > 0:
            raise ParameterError(f"dx={self.dx} must be positive")

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def width(self):
        return self.nx * self.dx

    @property
    def height(self):
        return self.ny * self.dx

    @property
    def dx_m(self):
        return self.dx * 1e-9

    @property
    def cell_area(self):
        """Cell measure in nm^2."""
        return self.dx * self.dx


@dataclass(frozen=True)
class BoundarySpec:
    """``paper``: periodic x, Dirichlet top (phi=cA=cB=0), Neumann bottom.
    ``closed``: periodic in both directions."""

    mode: str = PAPER

    def __post_init__(self):
        if self.mode not in (PAPER, CLOSED):
            raise ParameterError(f"unknown boundary mode {self.mode!r}")

    @property
    def periodic_y(self):
        return self.mode == CLOSED

    # Dirichlet values at the top ghost row (paper mode only).
    top_phi = 0.0
    top_cA = 0.0
    top_cB = 0.0


@dataclass
class FieldState:
    phi: np.ndarray
    cA: np.ndarray
    cB: np.ndarray
    grid: GridSpec
    time: float = 0.0
    step: int = 0

    def copy(self):
        return replace(self, phi=self.phi.copy(), cA=self.cA.copy(), cB=self.cB.copy())

    def validate(self, atol=0.0):
        """Raise ParameterError if any state invariant is violated."""
        for name in ("phi", "cA", "cB"):
            a = getattr(self, name)
            if a.shape != self.grid.shape:
                raise ParameterError(f"{name} has shape {a.shape}, grid is {self.grid.shape}")
            if not np.all(np.isfinite(a)):
                raise ParameterError(f"{name} has non-finite entries")
        if self.phi.min() < -atol or self.phi.max() > 1 + atol:
            raise ParameterError("phi outside [0, 1]")
        if self.cA.min() < -atol or self.cB.min() < -atol:
            raise ParameterError("negative mole fraction")
        if (self.cA + self.cB).max() > 1 + atol:
            raise ParameterError("cA + cB exceeds 1")
        return self

    def as_array(self):
        return np.stack([self.phi, self.cA, self.cB])


def project_simplex(cA, cB):
    """Euclidean projection of (cA, cB) pairs onto {c >= 0, cA + cB <= 1}.

    Points already inside are returned unchanged; others go to the nearest of
    their projections onto the three edges of the triangle.
    """
    a = np.asarray(cA, dtype=np.float64).copy()
    b = np.asarray(cB, dtype=np.float64).copy()
    out = (a < 0) | (b < 0) | (a + b > 1)
    if not out.any():
        return a, b
    x, y = a[out], b[out]
    t = np.clip(0.5 * (x - y + 1.0), 0.0, 1.0)
    cand = (
        (np.clip(x, 0.0, 1.0), np.zeros_like(x)),
        (np.zeros_like(x), np.clip(y, 0.0, 1.0)),
        (t, 1.0 - t),
    )
    d = np.stack([(ca - x) ** 2 + (cb - y) ** 2 for ca, cb in cand])
    k = np.argmin(d, axis=0)
    a[out] = np.choose(k, [c[0] for c in cand])
    b[out] = np.choose(k, [c[1] for c in cand])
    return a, b


def init_state(grid, solid_fraction=0.75, noise_amp=0.025, seed=0,
               composition=(0.3, 0.7)):
    """Alloy in the lower part of the domain, pure liquid C on top.

    Noise is drawn independently for cA and cB in every solid cell from
    U[-noise_amp, noise_amp] and the result projected back onto the simplex.
    """
    if not 0.0 < solid_fraction < 1.0:
        raise ParameterError(f"solid_fraction={solid_fraction} not in (0, 1)")
    if noise_amp < 0:
        raise ParameterError(f"noise_amp={noise_amp} is negative")
    ny, nx = grid.shape
    rows = np.arange(ny) < solid_fraction * ny
    n_solid = int(rows.sum())
    rng = np.random.default_rng(seed)
    u = rng.uniform(-noise_amp, noise_amp, size=(n_solid, nx))
    v = rng.uniform(-noise_amp, noise_amp, size=(n_solid, nx))

    phi = np.zeros(grid.shape)
    cA = np.zeros(grid.shape)
    cB = np.zeros(grid.shape)
    phi[rows] = 1.0
    a, b = project_simplex(composition[0] + u, composition[1] + v)
    cA[rows] = a
    cB[rows] = b
    return FieldState(phi, cA, cB, grid, 0.0, 0).validate()


def derived_cc(state):
    return 1.0 - state.cA - state.cB


def write_snapshot(state, path):
    ny, nx = state.grid.shape
    header = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, nx, ny, 3,
                          float(state.time), int(state.step))
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(header)
        for a in (state.phi, state.cA, state.cB):
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    os.replace(tmp, path)


def read_snapshot(path, dx=0.2):
    """Read a snapshot file; ``dx`` is not stored in the format."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise TruncationError(f"{path}: truncated header", field="header")
    magic, version, nx, ny, n_fields, time, step = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}", field="magic")
    if version != SNAPSHOT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}", field="version")
    if n_fields != 3:
        raise FormatError(f"{path}: n_fields={n_fields}, expected 3", field="n_fields")
    try:
        grid = GridSpec(nx, ny, dx)
    except ParameterError as exc:
        raise FormatError(f"{path}: bad dimensions ({exc})", field="nx/ny") from None
    expected = _HEADER.size + 3 * nx * ny * 8
    if len(raw) < expected:
        raise TruncationError(
            f"{path}: truncated payload ({len(raw)} of {expected} bytes)", field="payload")
    if len(raw) > expected:
        raise FormatError(f"{path}: trailing bytes after payload", field="payload")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(3, ny, nx)
    data = data.astype(np.float64)
    return FieldState(data[0].copy(), data[1].copy(), data[2].copy(), grid, time, step)


def snapshot_name(step):
    return f"snap_{step:010d}.pfld"


def list_snapshots(directory):
    """Snapshot paths in a directory sorted by step."""
    names = sorted(n for n in os.listdir(directory)
                   if n.startswith("snap_") and n.endswith(".pfld"))
    return [os.path.join(directory, n) for n in names]


def step_of(path):
    return int(os.path.basename(path)[5:-5])
