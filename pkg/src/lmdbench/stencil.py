"""Ghost-cell stencils shared by the energy and the solver.

Top-row Dirichlet ghosts hold the boundary value itself; bottom-row Neumann
ghosts mirror the first interior row; x is always periodic.
"""

import numpy as np


def ghost_pad(u, bc, top_value=0.0):
    ny, nx = u.shape
    p = np.empty((ny + 2, nx + 2))
    p[1:-1, 1:-1] = u
    if bc.periodic_y:
        p[0, 1:-1] = u[-1]
        p[-1, 1:-1] = u[0]
    else:
        p[0, 1:-1] = u[0]
        p[-1, 1:-1] = top_value
    p[:, 0] = p[:, -2]
    p[:, -1] = p[:, 1]
    return p


def laplacian(u, bc, dx, top_value=0.0):
    p = ghost_pad(u, bc, top_value)
    return (p[2:, 1:-1] + p[:-2, 1:-1] + p[1:-1, 2:] + p[1:-1, :-2] - 4.0 * u) / (dx * dx)


def grad_sq(u, bc, dx, top_value=0.0):
    """Per-cell |grad u|^2 as a face sum.

    Every interior face contributes half its squared difference to each of
    its two cells; the Dirichlet face on top is owned entirely by the top row.
    Summed over cells this is sum_faces (du/dx)^2, whose exact discrete
    variational derivative is -2 * laplacian(u) with the same ghosts.
    """
    p = ghost_pad(u, bc, top_value)
    fx = p[1:-1, 1:] - p[1:-1, :-1]  # (ny, nx+1) x-faces
    fy = p[1:, 1:-1] - p[:-1, 1:-1]  # (ny+1, nx) y-faces
    g = 0.5 * (fx[:, 1:] ** 2 + fx[:, :-1] ** 2 + fy[1:] ** 2 + fy[:-1] ** 2)
    if not bc.periodic_y:
        g[-1] += 0.5 * fy[-1] ** 2
    return g / (dx * dx)
