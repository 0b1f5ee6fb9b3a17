"""Two-species electron-transfer (ETO) operator on a 1D mesh.

Both species diffuse (the second with relative diffusivity ``d_plus``) with
no flux at ``z_max``. At the electrode ``z = 0`` the Butler-Volmer fluxes
enter weakly through the rank-one trace operator ``F1 = e e^T``, where ``e``
holds the basis values of the first element at ``z = 0``:

    [ L + Kf F1      -Kb F1         ]
    [ -Kf F1         d_plus L + Kb F1 ]
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

from ..errors import ParameterError
from .assembly import BoundaryCondition, assemble_dare
from .space import DGSpace
from .system import GlobalSystem


def potential(t: float, p1: float, p2: float) -> float:
    """Triangular sweep ``p1 -> p2 -> p1`` over ``[0, 2 (p2 - p1)]``."""
    t_lam = p2 - p1
    if not 0.0 <= t <= 2.0 * t_lam:
        raise ParameterError(f"time {t} outside the sweep [0, {2.0 * t_lam}]")
    return p1 + t if t <= t_lam else p2 - (t - t_lam)


def rates(p: float, k0: float, transfer_coeff: float):
    """Forward and backward rate constants ``(Kf, Kb)`` at potential ``p``."""
    return k0 * math.exp((1.0 - transfer_coeff) * p), k0 * math.exp(-transfer_coeff * p)


def electrode_trace(space: DGSpace) -> np.ndarray:
    vals, _ = space.basis_at(np.array([0]), np.array([[[space.mesh.nodes[0]]]]))
    e = np.zeros(space.ndof)
    e[: space.nb] = vals[0, 0]
    return e


def assemble_eto(mesh, d_plus: float = 1.0, k0: float = 20.0, transfer_coeff: float = 0.5,
                 p1: float = -10.0, p2: float = 10.0, sigma0: float = 10.0) -> GlobalSystem:
    if not p2 > p1:
        raise ParameterError("reverse potential must exceed the initial potential")
    if not d_plus > 0:
        raise ParameterError("d_plus must be positive")
    space = mesh if isinstance(mesh, DGSpace) else DGSpace(mesh)
    nat = BoundaryCondition("neumann", 0.0)
    lap = assemble_dare(space, 1.0, 0.0, {space.mesh.left_tag: nat, space.mesh.right_tag: nat}, sigma0)
    L = lap.stiffness
    e = electrode_trace(space)
    nz = np.flatnonzero(e)
    F1 = sp.csr_matrix((np.outer(e[nz], e[nz]).ravel(),
                        (np.repeat(nz, nz.size), np.tile(nz, nz.size))), shape=L.shape)
    Z = sp.csr_matrix(L.shape)

    def kf(t):
        return k0 * math.exp((1.0 - transfer_coeff) * potential(t, p1, p2))

    def kb(t):
        return k0 * math.exp(-transfer_coeff * potential(t, p1, p2))

    n = 2 * space.ndof
    return GlobalSystem(
        mass=np.ones(n),
        stiffness=sp.block_diag([L, d_plus * L]).tocsr(),
        source=np.zeros(n),
        boundary=np.zeros(n),
        stiffness_terms=[(kf, sp.bmat([[F1, Z], [-F1, Z]]).tocsr()),
                         (kb, sp.bmat([[Z, -F1], [Z, F1]]).tocsr())],
        space=space,
        n_species=2,
    )


def electrode_values(space: DGSpace, chi):
    """``(C_Q(0), C_Q+(0))`` from the stacked coefficient vector."""
    e = electrode_trace(space)
    n = space.ndof
    return float(e @ chi[:n]), float(e @ chi[n:2 * n])


def current(space: DGSpace, chi, t: float, k0: float, transfer_coeff: float, p1: float, p2: float) -> float:
    """``G = Kf C_Q(0) - Kb C_Q+(0)``."""
    cq, cp = electrode_values(space, chi)
    kf, kb = rates(potential(t, p1, p2), k0, transfer_coeff)
    return kf * cq - kb * cp
