"""Orthonormal modal bases and quadrature rules on reference elements."""

from __future__ import annotations

from functools import lru_cache
from math import factorial

import numpy as np
from numpy.polynomial import legendre


@lru_cache(maxsize=None)
def gauss_legendre(n: int):
    """``n``-point Gauss rule on [0, 1]."""
    x, w = legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def legendre_1d(k: int, xi):
    """Orthonormal Legendre polynomials on [-1, 1] and their derivatives.

    Returns arrays of shape ``xi.shape + (k + 1,)``.
    """
    xi = np.asarray(xi, dtype=float)
    vals = np.empty(xi.shape + (k + 1,))
    ders = np.empty_like(vals)
    for j in range(k + 1):
        c = np.zeros(j + 1)
        c[j] = np.sqrt((2 * j + 1) / 2.0)
        vals[..., j] = legendre.legval(xi, c)
        ders[..., j] = legendre.legval(xi, legendre.legder(c)) if j else 0.0
    return vals, ders


@lru_cache(maxsize=None)
def triangle_quadrature(n: int):
    """Collapsed Gauss rule on the reference triangle (0,0), (1,0), (0,1).

    Exact for polynomials of total degree ``2n - 2``; weights sum to 1/2.
    """
    x, w = gauss_legendre(n)
    xi = np.repeat(x, n)
    eta = np.tile(x, n) * (1.0 - xi)
    wt = np.repeat(w, n) * np.tile(w, n) * (1.0 - xi)
    return np.column_stack([xi, eta]), wt


def _monomial_exponents(k: int):
    return [(a - b, b) for a in range(k + 1) for b in range(a + 1)]


def _monomial_integral(a: int, b: int) -> float:
    # integral of xi**a * eta**b over the reference triangle
    return factorial(a) * factorial(b) / factorial(a + b + 2)


@lru_cache(maxsize=None)
def _triangle_coefficients(k: int):
    exps = _monomial_exponents(k)
    gram = np.array([[_monomial_integral(a1 + a2, b1 + b2) for (a2, b2) in exps] for (a1, b1) in exps])
    low = np.linalg.cholesky(gram)
    return exps, np.linalg.inv(low)


def triangle_basis(k: int, pts):
    """Orthonormal polynomials of total degree <= k on the reference triangle.

    Built by Gram-Schmidt (Cholesky) on the graded monomials, so the basis is
    hierarchical: the first function is the constant ``sqrt(2)``. Returns
    values ``(..., nb)`` and reference gradients ``(..., nb, 2)``.
    """
    exps, coef = _triangle_coefficients(k)
    pts = np.asarray(pts, dtype=float)
    xi, eta = pts[..., 0], pts[..., 1]
    mono = np.stack([xi**a * eta**b for a, b in exps], axis=-1)
    dxi = np.stack([a * xi ** max(a - 1, 0) * eta**b if a else np.zeros_like(xi) for a, b in exps], axis=-1)
    deta = np.stack([b * xi**a * eta ** max(b - 1, 0) if b else np.zeros_like(xi) for a, b in exps], axis=-1)
    vals = mono @ coef.T
    grads = np.stack([dxi @ coef.T, deta @ coef.T], axis=-1)
    return vals, grads


def n_basis(dim: int, k: int) -> int:
    return k + 1 if dim == 1 else (k + 1) * (k + 2) // 2
