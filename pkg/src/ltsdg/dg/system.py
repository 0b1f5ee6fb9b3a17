"""Semi-discrete systems ``M u' + S(t) u = F + B(t) [+ coupling] + M R(u)``.

``GlobalSystem`` lives on the whole mesh; ``LocalSystem`` is its restriction
to one sub-domain, with the cross-boundary blocks of ``S`` moved to the
right-hand side as a coupling operator acting on trace data (the
coefficients of the neighbouring elements just outside the sub-domain).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..errors import ConfigError


class PointwiseReaction:
    """Reaction acting entrywise on the coefficient vector (ODE test problems)."""

    def __init__(self, func, dfunc):
        self.func = func
        self.dfunc = dfunc

    def value(self, u):
        return self.func(u)

    def jacobian(self, u):
        return sp.diags(self.dfunc(u)).tocsr()

    def restrict(self, elements, dofs):
        return self


class DGReaction:
    """L2 projection of ``R(u_h)`` onto the (single-species) DG space.

    With an orthonormal basis the projection is ``sum_q w_q R(u_q) phi(x_q)``
    per element, and the Jacobian is block diagonal.
    """

    def __init__(self, space, func, dfunc, elements=None):
        self.space = space
        self.func = func
        self.dfunc = dfunc
        self.elements = np.arange(space.n_elements) if elements is None else np.asarray(elements)
        self.phi = space.phi[self.elements]
        self.qw = space.qw[self.elements]
        nb = space.nb
        ne = len(self.elements)
        base = (np.arange(ne) * nb)[:, None, None]
        self._rows = np.broadcast_to(base + np.arange(nb)[None, :, None], (ne, nb, nb)).ravel()
        self._cols = np.broadcast_to(base + np.arange(nb)[None, None, :], (ne, nb, nb)).ravel()

    def _uq(self, u):
        return np.einsum("eqb,eb->eq", self.phi, np.reshape(u, (len(self.elements), self.space.nb)))

    def value(self, u):
        r = self.func(self._uq(u))
        return np.einsum("eq,eqb,eq->eb", self.qw, self.phi, r).ravel()

    def jacobian(self, u):
        d = self.dfunc(self._uq(u))
        blocks = np.einsum("eq,eqi,eqj,eq->eij", self.qw, self.phi, self.phi, d)
        n = len(self.elements) * self.space.nb
        return sp.csr_matrix((blocks.ravel(), (self._rows, self._cols)), shape=(n, n))

    def restrict(self, elements, dofs):
        return DGReaction(self.space, self.func, self.dfunc, self.elements[np.asarray(elements)])


@dataclass
class OdeSystem:
    """Common data of global and local systems.

    ``stiffness_terms`` are ``(coef(t), matrix)`` pairs added to the static
    stiffness; ``boundary_operator @ boundary_data(t)`` adds the
    time-dependent part of the boundary vector.
    """

    mass: np.ndarray
    stiffness: sp.csr_matrix
    source: np.ndarray
    boundary: np.ndarray
    stiffness_terms: list = field(default_factory=list)
    boundary_operator: sp.csr_matrix | None = None
    boundary_data: object = None
    reaction: object = None

    @property
    def size(self) -> int:
        return self.mass.size

    @property
    def time_dependent(self) -> bool:
        return any(m.nnz for _, m in self.stiffness_terms)

    def stiffness_at(self, t: float) -> sp.csr_matrix:
        s = self.stiffness
        for coef, m in self.stiffness_terms:
            if m.nnz:
                s = s + coef(t) * m
        return s.tocsr()

    def boundary_at(self, t: float) -> np.ndarray:
        if self.boundary_data is None:
            return self.boundary
        return self.boundary + self.boundary_operator @ self.boundary_data(t)

    def rhs(self, t: float) -> np.ndarray:
        """``F + B(t)``."""
        return self.source + self.boundary_at(t)


@dataclass
class GlobalSystem(OdeSystem):
    space: object = None
    n_species: int = 1

    def forcing(self, t: float) -> np.ndarray:
        return self.rhs(t)

    def residual(self, u, t: float) -> np.ndarray:
        """``F + B(t) - S(t) u`` (reaction excluded)."""
        return self.rhs(t) - self.stiffness_at(t) @ u


@dataclass
class LocalSystem(OdeSystem):
    index: int = 0
    elements: np.ndarray = None
    dofs: np.ndarray = None
    trace_dofs: np.ndarray = None
    coupling: sp.csr_matrix = None
    coupling_terms: list = field(default_factory=list)

    def coupling_at(self, t: float) -> sp.csr_matrix:
        c = self.coupling
        for coef, m in self.coupling_terms:
            if m.nnz:
                c = c + coef(t) * m
        return c

    def forcing(self, t: float, trace) -> np.ndarray:
        """``F_i + B_i(t) + S_i^e(t) trace``."""
        f = self.rhs(t)
        if self.trace_dofs.size:
            f = f + self.coupling_at(t) @ trace
        return f

    def lift(self, x_local, n_global: int) -> np.ndarray:
        out = np.zeros(n_global)
        out[self.dofs] = x_local
        return out


def extract_local(g: GlobalSystem, partition, i: int) -> LocalSystem:
    """Restrict ``g`` to the elements of sub-domain ``i``.

    Rows and columns of the mass and stiffness go to the local system; the
    columns of ``S`` that couple local rows to outside dofs become the
    coupling operator ``-S[dofs, trace_dofs]``.
    """
    if not 0 <= i < partition.n_subdomains:
        raise ConfigError(f"sub-domain index {i} out of range")
    elements = np.asarray(partition.elements[i])
    dofs = g.space.elem_dofs(elements, g.n_species)
    inside = np.zeros(g.size, dtype=bool)
    inside[dofs] = True

    mats = [g.stiffness] + [m for _, m in g.stiffness_terms]
    rows = [m.tocsr()[dofs] for m in mats]
    touched = np.zeros(g.size, dtype=bool)
    for r in rows:
        touched[r.indices] = True
    trace = np.flatnonzero(touched & ~inside)

    loc = [r[:, dofs].tocsr() for r in rows]
    cpl = [(-r[:, trace]).tocsr() for r in rows]
    for m in loc + cpl:
        m.eliminate_zeros()
    coefs = [c for c, _ in g.stiffness_terms]

    bop = g.boundary_operator[dofs].tocsr() if g.boundary_operator is not None else None
    reaction = g.reaction.restrict(elements, dofs) if g.reaction is not None else None
    return LocalSystem(
        mass=g.mass[dofs],
        stiffness=loc[0],
        source=g.source[dofs],
        boundary=g.boundary[dofs],
        stiffness_terms=list(zip(coefs, loc[1:])),
        boundary_operator=bop,
        boundary_data=g.boundary_data,
        reaction=reaction,
        index=i,
        elements=elements,
        dofs=dofs,
        trace_dofs=trace,
        coupling=cpl[0],
        coupling_terms=list(zip(coefs, cpl[1:])),
    )
