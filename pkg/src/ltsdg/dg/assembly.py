"""SIPG + upwind assembly for diffusion-advection operators in 1D and 2D."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import ConfigError, NumericalError, ParameterError
from ..mesh import BOUNDARY_TAGS
from .space import DGSpace
from .system import GlobalSystem


@dataclass(frozen=True)
class BoundaryCondition:
    """``kind`` is ``"dirichlet"`` (value of u) or ``"neumann"`` (value of D du/dn).

    ``value`` is a number or a callable ``value(x, t)`` with ``x`` of shape
    ``(npts, dim)``.
    """

    kind: str
    value: object = 0.0

    def __post_init__(self):
        if self.kind not in ("dirichlet", "neumann"):
            raise ConfigError(f"unknown boundary condition kind {self.kind!r}")

    @property
    def constant(self) -> bool:
        return not callable(self.value)

    def evaluate(self, x, t):
        if callable(self.value):
            return np.broadcast_to(np.asarray(self.value(x, t), dtype=float), x.shape[:1])
        return np.full(x.shape[0], float(self.value))


def default_penalty(k: int, sigma0: float = 10.0) -> float:
    return sigma0 * (k + 1) ** 2


def _per_element(value, n, dim=None):
    a = np.asarray(value, dtype=float)
    if dim is None:
        return np.broadcast_to(a, (n,)).copy()
    return np.broadcast_to(a, (n, dim)).copy()


class _Coo:
    def __init__(self, n):
        self.n = n
        self.rows, self.cols, self.vals = [], [], []

    def add_blocks(self, row_elem, col_elem, blocks, nb):
        r = (row_elem[:, None] * nb + np.arange(nb))[:, :, None]
        c = (col_elem[:, None] * nb + np.arange(nb))[:, None, :]
        r, c = np.broadcast_arrays(r, c)
        self.rows.append(r.ravel())
        self.cols.append(c.ravel())
        self.vals.append(np.asarray(blocks).ravel())

    def tocsr(self, shape=None):
        if not self.rows:
            return sp.csr_matrix(shape or (self.n, self.n))
        m = sp.coo_matrix((np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
                          shape=shape or (self.n, self.n))
        return m.tocsr()


def assemble_dare(mesh_or_space, diffusivity=1.0, velocity=0.0, bcs=None, sigma0: float = 10.0,
                  source=None, reaction=None) -> GlobalSystem:
    """Assemble ``M u' + S u = F + B(t)`` for ``-div(D grad u) + div(v u)``.

    Diffusion uses the symmetric interior penalty form with penalty
    ``sigma0 (k+1)^2 D / h_face``; advection uses full upwinding with the
    face velocity taken as the mean of the two (element-constant)
    velocities. ``bcs`` maps boundary tags to ``BoundaryCondition``. The
    reaction term is passed through to the integrators.
    """
    space = mesh_or_space if isinstance(mesh_or_space, DGSpace) else DGSpace(mesh_or_space)
    if not sigma0 > 0:
        raise ParameterError(f"penalty sigma0 must be positive, got {sigma0}")
    bcs = dict(bcs or {})
    for tag in bcs:
        if tag not in BOUNDARY_TAGS:
            raise ConfigError(f"unknown boundary tag {tag!r} in boundary conditions")

    ne, nb, dim, k = space.n_elements, space.nb, space.dim, space.k
    D = _per_element(diffusivity, ne)
    v = _per_element(velocity, ne, dim)
    eta0 = default_penalty(k, sigma0)
    coo = _Coo(space.ndof)

    # volume terms
    vol = np.einsum("eq,eqid,eqjd->eij", space.qw, space.dphi, space.dphi) * D[:, None, None]
    vol -= np.einsum("eq,eqj,eqid,ed->eij", space.qw, space.phi, space.dphi, v)
    e_all = np.arange(ne)
    coo.add_blocks(e_all, e_all, vol, nb)

    fs = space.faces
    inner = np.flatnonzero(fs.elem[:, 1] >= 0)
    if inner.size:
        a, b = fs.elem[inner, 0], fs.elem[inner, 1]
        W = fs.weights[inner]
        V = (fs.vals[0][inner], fs.vals[1][inner])
        G = (fs.dn[0][inner], fs.dn[1][inner])
        Dside = (D[a], D[b])
        eta = eta0 * np.maximum(D[a], D[b]) / fs.hf[inner]
        beta = 0.5 * np.einsum("fd,fd->f", v[a] + v[b], fs.normal[inner])
        sgn = (1.0, -1.0)
        elems = (a, b)
        up = (np.maximum(beta, 0.0), np.minimum(beta, 0.0))
        for x in (0, 1):
            for y in (0, 1):
                blk = -0.5 * sgn[x] * Dside[y][:, None, None] * np.einsum("fq,fqi,fqj->fij", W, V[x], G[y])
                blk -= 0.5 * sgn[y] * Dside[x][:, None, None] * np.einsum("fq,fqi,fqj->fij", W, G[x], V[y])
                mass_xy = np.einsum("fq,fqi,fqj->fij", W, V[x], V[y])
                blk += (eta * sgn[x] * sgn[y])[:, None, None] * mass_xy
                blk += (sgn[x] * up[y])[:, None, None] * mass_xy
                coo.add_blocks(elems[x], elems[y], blk, nb)

    # boundary faces
    bnd = np.flatnonzero(fs.elem[:, 1] < 0)
    bq_rows, bq_cols, bq_vals = [], [], []
    groups = []
    nq_face = fs.weights.shape[1]
    col0 = 0
    for f in bnd:
        tag = fs.tags[f]
        if tag not in bcs:
            raise ConfigError(f"no boundary condition given for tag {tag!r}")
        bc = bcs[tag]
        e = fs.elem[f, 0]
        W = fs.weights[f]
        V = fs.vals[0][f]
        G = fs.dn[0][f]
        beta = float(v[e] @ fs.normal[f])
        mass_ff = np.einsum("q,qi,qj->ij", W, V, V)
        blk = np.zeros((nb, nb))
        cols = col0 + np.arange(nq_face)
        if bc.kind == "dirichlet":
            eta = eta0 * D[e] / fs.hf[f]
            blk += -D[e] * np.einsum("q,qi,qj->ij", W, V, G) - D[e] * np.einsum("q,qi,qj->ij", W, G, V)
            blk += eta * mass_ff
            col = W[:, None] * (-D[e] * G + eta * V)        # (q, i)
            if beta < 0:
                col += -beta * W[:, None] * V
        else:
            col = W[:, None] * V
        if beta >= 0:
            blk += beta * mass_ff
        coo.add_blocks(np.array([e]), np.array([e]), blk[None], nb)
        rr = e * nb + np.arange(nb)
        bq_rows.append(np.repeat(rr[None, :], nq_face, axis=0).ravel())
        bq_cols.append(np.repeat(cols, nb))
        bq_vals.append(col.ravel())
        groups.append((bc, fs.points[f]))
        col0 += nq_face

    S = coo.tocsr()
    n_bq = col0
    if n_bq:
        bop = sp.csr_matrix((np.concatenate(bq_vals), (np.concatenate(bq_rows), np.concatenate(bq_cols))),
                            shape=(space.ndof, n_bq))
    else:
        bop = sp.csr_matrix((space.ndof, 0))

    pts = np.concatenate([p for _, p in groups]) if groups else np.empty((0, dim))
    slices = []
    start = 0
    for bc, p in groups:
        slices.append((bc, slice(start, start + len(p))))
        start += len(p)

    def boundary_data(t):
        g = np.empty(n_bq)
        for bc, sl in slices:
            g[sl] = bc.evaluate(pts[sl], t)
        return g

    static = all(bc.constant for bc, _ in groups)
    if static:
        boundary = bop @ boundary_data(0.0) if n_bq else np.zeros(space.ndof)
        bop_keep, data = None, None
    else:
        boundary, bop_keep, data = np.zeros(space.ndof), bop, boundary_data

    F = space.project(source) if source is not None else np.zeros(space.ndof)
    return GlobalSystem(
        mass=np.ones(space.ndof),
        stiffness=S,
        source=F,
        boundary=boundary,
        boundary_operator=bop_keep,
        boundary_data=data,
        reaction=reaction,
        space=space,
        n_species=1,
    )


def solve_steady(system: GlobalSystem, t: float = 0.0) -> np.ndarray:
    S = system.stiffness_at(t).tocsc()
    try:
        lu = spla.splu(S)
    except RuntimeError as exc:
        raise NumericalError(f"singular steady system: {exc}") from None
    u = lu.solve(system.rhs(t))
    if not np.all(np.isfinite(u)):
        raise NumericalError("steady solve produced non-finite values")
    return u


def assemble_darcy(mesh_or_space, mobility, bcs, sigma0: float = 10.0) -> GlobalSystem:
    """SIPG discretisation of ``div(-(k/mu) grad p) = 0``."""
    space = mesh_or_space if isinstance(mesh_or_space, DGSpace) else DGSpace(mesh_or_space)
    mob = _per_element(mobility, space.n_elements)
    if np.any(mob <= 0):
        raise ParameterError("mobility must be positive on every element")
    if not any(bc.kind == "dirichlet" for bc in bcs.values()):
        raise NumericalError("pressure system is singular without a Dirichlet boundary; tag at least "
                             "one boundary with a Dirichlet condition")
    return assemble_dare(space, diffusivity=mob, velocity=0.0, bcs=bcs, sigma0=sigma0)


def velocity_from_pressure(space: DGSpace, pressure, coefficient) -> np.ndarray:
    """Element-constant velocity ``-coefficient * mean(grad p)`` per element."""
    coef = _per_element(coefficient, space.n_elements)
    grad = space.gradients(pressure)
    mean = np.einsum("eq,eqd->ed", space.qw, grad) / space.mesh.volumes[:, None]
    return -coef[:, None] * mean
