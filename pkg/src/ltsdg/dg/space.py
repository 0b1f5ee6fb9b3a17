"""Broken polynomial space on a mesh with an orthonormal basis per element.

Because every basis is orthonormal on its own (affine) element, the global
mass matrix is the identity. Quadrature data is precomputed once per space
and shared by the assembly routines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import gauss_legendre, legendre_1d, n_basis, triangle_basis, triangle_quadrature


@dataclass
class FaceSet:
    """Quadrature data for a batch of faces.

    ``elem[:, 1] == -1`` marks boundary faces. Normals point from
    ``elem[:, 0]`` to ``elem[:, 1]`` (outward on the boundary). ``dn`` holds
    normal derivatives of the basis of each side.
    """

    elem: np.ndarray
    normal: np.ndarray
    points: np.ndarray
    weights: np.ndarray
    vals: tuple
    dn: tuple
    hf: np.ndarray
    tags: list


class DGSpace:
    def __init__(self, mesh):
        degrees = np.unique(mesh.degree)
        if len(degrees) != 1:
            raise NotImplementedError("mixed polynomial degrees are not supported")
        self.mesh = mesh
        self.k = int(degrees[0])
        self.dim = mesh.dim
        self.nb = n_basis(self.dim, self.k)
        self.n_elements = mesh.n_elements
        self.ndof = self.n_elements * self.nb
        self.nq = 2 * self.k + 2
        if self.dim == 1:
            self._setup_1d()
        else:
            self._setup_2d()
        self._setup_faces()

    # geometry ------------------------------------------------------------
    def _setup_1d(self):
        z = self.mesh.nodes
        self.h = np.diff(z)
        x, w = gauss_legendre(self.nq)
        xi = 2.0 * x - 1.0
        psi, dpsi = legendre_1d(self.k, xi)
        scale = np.sqrt(2.0 / self.h)
        self.qx = (z[:-1, None] + x[None, :] * self.h[:, None])[..., None]
        self.qw = w[None, :] * self.h[:, None]
        self.phi = scale[:, None, None] * psi[None]
        self.dphi = (scale * 2.0 / self.h)[:, None, None, None] * dpsi[None, :, :, None]

    def _setup_2d(self):
        m = self.mesh
        p = m.vertices[m.triangles]
        self.origin = p[:, 0]
        self.jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)   # columns
        self.det = np.linalg.det(self.jac)
        self.jac_inv = np.linalg.inv(self.jac)
        ref, w = triangle_quadrature(self.nq)
        psi, dpsi = triangle_basis(self.k, ref)
        scale = 1.0 / np.sqrt(self.det)
        self.qx = self.origin[:, None, :] + np.einsum("eij,qj->eqi", self.jac, ref)
        self.qw = w[None, :] * self.det[:, None]
        self.phi = scale[:, None, None] * psi[None]
        # grad_x = J^{-T} grad_ref
        self.dphi = scale[:, None, None, None] * np.einsum("eji,qbj->eqbi", self.jac_inv, dpsi)

    def basis_at(self, elems, pts):
        """Basis values and physical gradients of ``elems[f]`` at ``pts[f]``."""
        elems = np.asarray(elems)
        pts = np.asarray(pts, dtype=float)
        if self.dim == 1:
            z0 = self.mesh.nodes[elems]
            h = self.h[elems]
            xi = 2.0 * (pts[..., 0] - z0[:, None]) / h[:, None] - 1.0
            psi, dpsi = legendre_1d(self.k, xi)
            scale = np.sqrt(2.0 / h)
            vals = scale[:, None, None] * psi
            grads = (scale * 2.0 / h)[:, None, None, None] * dpsi[..., None]
            return vals, grads
        ref = np.einsum("fij,fqj->fqi", self.jac_inv[elems], pts - self.origin[elems][:, None, :])
        psi, dpsi = triangle_basis(self.k, ref)
        scale = 1.0 / np.sqrt(self.det[elems])
        vals = scale[:, None, None] * psi
        grads = scale[:, None, None, None] * np.einsum("fji,fqbj->fqbi", self.jac_inv[elems], dpsi)
        return vals, grads

    def _setup_faces(self):
        m = self.mesh
        if self.dim == 1:
            z = m.nodes
            ne = self.n_elements
            h = self.h
            inner = np.column_stack([np.arange(ne - 1), np.arange(1, ne)])
            elem = np.vstack([inner, [[0, -1], [ne - 1, -1]]])
            normal = np.concatenate([np.ones(ne - 1), [-1.0, 1.0]])[:, None]
            points = np.concatenate([z[1:-1], [z[0], z[-1]]])[:, None, None]
            weights = np.ones((len(elem), 1))
            hf = np.concatenate([np.minimum(h[:-1], h[1:]), [h[0], h[-1]]])
            tags = [None] * (ne - 1) + [m.left_tag, m.right_tag]
        else:
            length, normal = m.edge_geometry()
            s, ws = gauss_legendre(self.nq)
            a = m.vertices[m.edges[:, 0]]
            b = m.vertices[m.edges[:, 1]]
            points = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
            weights = ws[None, :] * length[:, None]
            elem = m.edge_elements
            areas = m.areas
            other = np.where(elem[:, 1] >= 0, areas[np.maximum(elem[:, 1], 0)], np.inf)
            hf = np.minimum(areas[elem[:, 0]], other) / length
            tags = list(m.edge_tags)
        self.faces = self._face_set(elem, normal, points, weights, hf, tags)

    def _face_set(self, elem, normal, points, weights, hf, tags):
        vals, dn = [], []
        for side in (0, 1):
            e = np.maximum(elem[:, side], 0)
            v, g = self.basis_at(e, points)
            vals.append(v)
            dn.append(np.einsum("fqbd,fd->fqb", g, normal))
        return FaceSet(elem, normal, points, weights, tuple(vals), tuple(dn), hf, tags)

    # field helpers ---------------------------------------------------------
    def elem_dofs(self, elements, n_species: int = 1) -> np.ndarray:
        """Global dofs of ``elements`` for every species (species-major layout)."""
        elements = np.asarray(elements, dtype=int)
        local = (elements[:, None] * self.nb + np.arange(self.nb)).ravel()
        return np.concatenate([s * self.ndof + local for s in range(n_species)])

    def project(self, func) -> np.ndarray:
        """L2 projection of ``func(x)`` with ``x`` of shape (..., dim)."""
        f = func(self.qx)
        f = np.broadcast_to(f, self.qw.shape)
        return np.einsum("eq,eqb,eq->eb", self.qw, self.phi, f).ravel()

    def values(self, u) -> np.ndarray:
        """Field values at the volume quadrature points, shape (ne, nq)."""
        return np.einsum("eqb,eb->eq", self.phi, np.reshape(u, (self.n_elements, self.nb)))

    def gradients(self, u) -> np.ndarray:
        return np.einsum("eqbd,eb->eqd", self.dphi, np.reshape(u, (self.n_elements, self.nb)))

    def integral_weights(self) -> np.ndarray:
        return np.einsum("eq,eqb->eb", self.qw, self.phi).ravel()

    def element_means(self, u) -> np.ndarray:
        return (self.qw * self.values(u)).sum(axis=1) / self.mesh.volumes

    def l2_norm(self, u) -> float:
        return float(np.sqrt(np.sum(self.qw * self.values(u) ** 2)))

    def l2_error(self, u, func) -> float:
        """``||u_h - func||`` by element quadrature."""
        diff = self.values(u) - np.broadcast_to(func(self.qx), self.qw.shape)
        return float(np.sqrt(np.sum(self.qw * diff**2)))

    def evaluate(self, u, x) -> np.ndarray:
        """Point values; 1D only (used for traces and plots)."""
        if self.dim != 1:
            raise NotImplementedError("point evaluation is only provided in 1D")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        e = np.clip(np.searchsorted(self.mesh.nodes, x, side="right") - 1, 0, self.n_elements - 1)
        vals, _ = self.basis_at(e, x[:, None, None])
        coeff = np.reshape(u, (self.n_elements, self.nb))[e]
        return np.einsum("fb,fb->f", vals[:, 0, :], coeff)
