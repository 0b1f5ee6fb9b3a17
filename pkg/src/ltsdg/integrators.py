"""One-step integrators for ``M u' + S(t) u = f(t) + M R(u)``.

``impl``  backward Euler (Newton when a reaction is present),
``etd1``  exponential Euler,
``etd2``  two-stage second-order exponential Runge-Kutta,
``expr``  exponential Rosenbrock-Euler (linearised about the current state).

The exponential schemes write the problem as ``u' = A u + g(t, u)`` with
``A = -M^{-1} S`` and ``g = M^{-1} f + R``. When the operator is fixed the
phi-function matrices are computed once per ``Stepper``; otherwise their
action is evaluated every step on an augmented sparse matrix.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import lapack
from scipy.sparse.csgraph import reverse_cuthill_mckee

from .errors import NumericalError, ParameterError

SCHEMES = ("impl", "etd1", "etd2", "expr")

_DENSE_BUDGET = 4500   # max augmented dimension for cached dense phi matrices
_BAND_LIMIT = 40       # use banded LU when kl + ku after RCM stays below this
_LOW_RANK = 16         # time-dependent terms on at most this many dofs use a Woodbury update


def phi_matrices(A, kmax: int) -> list:
    """``[phi_0(A), ..., phi_kmax(A)]`` from a single augmented exponential.

    ``exp([[A, I, 0], [0, 0, I], [0, 0, 0]])`` carries ``phi_k(A)`` in its
    first block row.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise ParameterError("phi functions need a square matrix")
    if not np.all(np.isfinite(A)):
        raise ParameterError("matrix has non-finite entries")
    n = A.shape[0]
    if kmax == 0:
        return [sla.expm(A)]
    big = np.zeros(((kmax + 1) * n, (kmax + 1) * n))
    big[:n, :n] = A
    eye = np.eye(n)
    for i in range(kmax):
        big[i * n:(i + 1) * n, (i + 1) * n:(i + 2) * n] = eye
    ex = sla.expm(big)
    return [ex[:n, i * n:(i + 1) * n] for i in range(kmax + 1)]


def phi(k: int, A):
    """``phi_k(A)``; scalars are accepted and returned as scalars."""
    scalar = np.ndim(A) == 0
    out = phi_matrices(A, k)[k]
    return float(out[0, 0]) if scalar else out


def _aligned_data(pattern: sp.csc_matrix, m) -> np.ndarray:
    n = pattern.shape[0]
    cols = np.repeat(np.arange(n), np.diff(pattern.indptr))
    keys = cols.astype(np.int64) * n + pattern.indices
    c = sp.coo_matrix(m)
    pos = np.searchsorted(keys, c.col.astype(np.int64) * n + c.row)
    data = np.zeros(pattern.nnz)
    np.add.at(data, pos, c.data)
    return data


class _LinearOperator:
    """``M + dt * S(t)`` on a fixed sparsity pattern, factorised on demand.

    After a reverse Cuthill-McKee reordering, narrow-band matrices (1D
    meshes) go to LAPACK's banded LU; everything else goes to SuperLU.
    Time-dependent terms are stored by their few nonzero positions and
    patched onto a precomputed base each step. When they touch only a few
    dofs, ``solver`` factors the static part once and applies the rest as
    a low-rank (Woodbury) correction.
    """

    def __init__(self, mass, mats, coefs, dt):
        n = mass.size
        pat = sp.identity(n, format="csc")
        for m in mats:
            pat = pat + abs(sp.csc_matrix(m))
        pat = pat.tocsc()
        pat.sort_indices()
        self.n = n
        self.pattern = pat
        self.base = _aligned_data(pat, sp.diags(mass)) + dt * _aligned_data(pat, mats[0])
        self.terms = []
        for c, m in zip(coefs, mats[1:]):
            d = _aligned_data(pat, m)
            nz = np.flatnonzero(d)
            self.terms.append((c, nz, dt * d[nz]))
        rows = pat.indices
        cols = np.repeat(np.arange(n), np.diff(pat.indptr))
        perm = reverse_cuthill_mckee(pat.tocsr(), symmetric_mode=False)
        inv = np.empty(n, dtype=int)
        inv[perm] = np.arange(n)
        pr, pc = inv[rows], inv[cols]
        kl = int(max(0, (pr - pc).max()))
        ku = int(max(0, (pc - pr).max()))
        self.banded = kl + ku < _BAND_LIMIT
        if self.banded:
            self.perm, self.kl, self.ku = perm, kl, ku
            self.ldab = 2 * kl + ku + 1
            flat = (kl + ku + pr - pc) + pc * self.ldab
            self.base_ab = np.zeros(self.ldab * n)
            self.base_ab[flat] = self.base
            self.term_flat = [flat[nz] for _, nz, _ in self.terms]

        touched = np.unique(np.concatenate([np.concatenate([rows[nz], cols[nz]])
                                            for _, nz, _ in self.terms] or [np.empty(0, int)]))
        self._low_rank = 0 < touched.size <= _LOW_RANK
        if self._low_rank:
            self._touched = touched
            self._lu0 = self._factor_base()
            P = np.zeros((n, touched.size))
            P[touched, np.arange(touched.size)] = 1.0
            Z = np.column_stack([self._lu0.solve(P[:, k]) for k in range(touched.size)])
            self._Z, self._ZE = Z, Z[touched]
            self._small = []
            for c, nz, v in self.terms:
                Wk = np.zeros((touched.size, touched.size))
                np.add.at(Wk, (np.searchsorted(touched, rows[nz]), np.searchsorted(touched, cols[nz])), v)
                self._small.append((c, Wk))
            self._small_cap = [Wk @ self._ZE for _, Wk in self._small]

    def _factor_base(self):
        if not self.banded:
            return _factor_sparse(sp.csc_matrix((self.base, self.pattern.indices, self.pattern.indptr),
                                                shape=(self.n, self.n)))
        ab = self.base_ab.copy()
        lu, piv, info = lapack.dgbtrf(ab.reshape((self.ldab, self.n), order="F"), self.kl, self.ku,
                                      overwrite_ab=1)
        if info > 0:
            raise NumericalError("implicit step matrix is singular")
        return _BandedLU(lu, piv, self.kl, self.ku, self.perm)

    def solver(self, t):
        """Object with ``solve(b)`` for ``M + dt S(t)``."""
        if not self._low_rank:
            return self.factor(t)
        cs = [c(t) for c, _ in self._small]
        W = cs[0] * self._small[0][1]
        cap = np.eye(W.shape[0]) + cs[0] * self._small_cap[0]
        for ck, (_, Wk), Kk in zip(cs[1:], self._small[1:], self._small_cap[1:]):
            W += ck * Wk
            cap += ck * Kk
        return _WoodburyLU(self._lu0, self._touched, self._Z, W, cap)

    def data(self, t):
        d = self.base.copy()
        for c, nz, v in self.terms:
            d[nz] += c(t) * v
        return d

    def matrix(self, t):
        return sp.csc_matrix((self.data(t), self.pattern.indices, self.pattern.indptr), shape=(self.n, self.n))

    def factor(self, t):
        if not self.banded:
            return _factor_sparse(self.matrix(t))
        ab = self.base_ab.copy()
        for (c, _, v), flat in zip(self.terms, self.term_flat):
            ab[flat] += c(t) * v
        lu, piv, info = lapack.dgbtrf(ab.reshape((self.ldab, self.n), order="F"), self.kl, self.ku,
                                      overwrite_ab=1)
        if info > 0:
            raise NumericalError("implicit step matrix is singular")
        return _BandedLU(lu, piv, self.kl, self.ku, self.perm)


class _BandedLU:
    def __init__(self, lu, piv, kl, ku, perm):
        self.lu, self.piv, self.kl, self.ku, self.perm = lu, piv, kl, ku, perm

    def solve(self, b):
        x, info = lapack.dgbtrs(self.lu, self.kl, self.ku, b[self.perm], self.piv, overwrite_b=1)
        out = np.empty_like(x)
        out[self.perm] = x
        return out


class _WoodburyLU:
    """``(A0 + P W P^T)^{-1}`` from a factorised ``A0`` and ``Z = A0^{-1} P``."""

    def __init__(self, lu0, idx, Z, W, cap):
        self.lu0, self.idx, self.Z = lu0, idx, Z
        _, _, self.G, info = lapack.dgesv(cap, W)   # G = cap^{-1} W
        if info > 0:
            raise NumericalError("implicit step matrix is singular")

    def solve(self, b):
        y = self.lu0.solve(b)
        return y - self.Z @ (self.G @ y[self.idx])


def _factor_sparse(A):
    try:
        return spla.splu(A)
    except RuntimeError as exc:
        raise NumericalError(f"implicit step matrix is singular: {exc}") from None


class Stepper:
    """Advance one system by a fixed step ``dt`` with a given scheme.

    ``forcing(t)`` supplies ``f(t)``, the full right-hand side in mass units
    (source, boundary data and any sub-domain coupling). Factorisations and
    phi matrices are built by ``prepare``, which drivers call before timing.
    """

    def __init__(self, system, scheme: str, dt: float, newton_tol: float = 1e-10,
                 newton_maxiter: int = 25):
        if scheme not in SCHEMES:
            raise ParameterError(f"unknown integrator {scheme!r}; expected one of {SCHEMES}")
        if not dt > 0:
            raise ParameterError("time step must be positive")
        if not newton_tol > 0:
            raise ParameterError("Newton tolerance must be positive")
        self.system = system
        self.scheme = scheme
        self.dt = float(dt)
        self.newton_tol = newton_tol
        self.newton_maxiter = newton_maxiter
        self.mass = np.asarray(system.mass, dtype=float)
        self.n = self.mass.size
        self.varying = system.time_dependent
        self.reaction = system.reaction
        self._op = None
        self._lu = None
        self._dense = None

    def prepare(self, t: float = 0.0) -> "Stepper":
        """Build whatever the scheme caches (LU factors or phi matrices)."""
        if self.scheme == "impl":
            self._implicit(t + self.dt)
        elif self._use_dense():
            self._dense_phi()
        return self

    # -- helpers ---------------------------------------------------------
    def _implicit(self, tn):
        """``(matrix, factorisation)`` of ``M + dt S(tn)``."""
        if self._op is None:
            if self.varying:
                mats = [self.system.stiffness] + [m for _, m in self.system.stiffness_terms]
                coefs = [c for c, _ in self.system.stiffness_terms]
            else:
                mats, coefs = [self.system.stiffness], []
            self._op = _LinearOperator(self.mass, mats, coefs, self.dt)
        if self.varying:
            return self._op, self._op.solver(tn)
        if self._lu is None:
            self._lu = self._op.factor(tn)
        return self._op, self._lu

    def _g(self, t, u, forcing):
        g = forcing(t) / self.mass
        if self.reaction is not None:
            g = g + self.reaction.value(u)
        return g

    def _operator(self, t):
        S = self.system.stiffness_at(t) if self.varying else self.system.stiffness
        return (-sp.diags(1.0 / self.mass) @ S).tocsr()

    def _use_dense(self) -> bool:
        if self.varying or (self.scheme == "expr" and self.reaction is not None):
            return False
        k = 2 if self.scheme == "etd2" else 1
        return (k + 1) * self.n <= _DENSE_BUDGET

    def _dense_phi(self):
        if self._dense is None:
            k = 2 if self.scheme == "etd2" else 1
            self._A = self._operator(0.0)
            self._dense = phi_matrices(self.dt * self._A.toarray(), k)
        return self._dense

    # -- schemes -----------------------------------------------------------
    def step(self, u, t: float, forcing):
        u = np.asarray(u, dtype=float)
        out = getattr(self, "_" + self.scheme)(u, t, forcing)
        if not np.isfinite(out.sum()):   # any nan/inf propagates into the sum
            raise NumericalError(f"{self.scheme} step at t={t} produced non-finite values")
        return out

    __call__ = step

    def _impl(self, u, t, forcing):
        dt, tn = self.dt, t + self.dt
        rhs = self.mass * u + dt * forcing(tn)
        op, lu = self._implicit(tn)
        if self.reaction is None:
            return lu.solve(rhs)
        A = op.matrix(tn)

        w = lu.solve(rhs + dt * self.mass * self.reaction.value(u))
        res = None
        for _ in range(self.newton_maxiter):
            G = A @ w - rhs - dt * self.mass * self.reaction.value(w)
            res = np.max(np.abs(G))
            if res <= self.newton_tol:
                return w
            J = (A - dt * sp.diags(self.mass) @ self.reaction.jacobian(w)).tocsc()
            w = w - _factor_sparse(J).solve(G)
        G = A @ w - rhs - dt * self.mass * self.reaction.value(w)
        res = np.max(np.abs(G))
        if res <= self.newton_tol:
            return w
        raise NumericalError(f"Newton did not converge at t={tn}: residual {res:.3e} "
                             f"after {self.newton_maxiter} iterations")

    def _etd1(self, u, t, forcing):
        dt = self.dt
        g0 = self._g(t, u, forcing)
        if self._use_dense():
            E, P1 = self._dense_phi()[:2]
            return E @ u + dt * (P1 @ g0)
        return _phi_action(self._operator(t), dt, u, [g0])

    def _etd2(self, u, t, forcing):
        dt = self.dt
        g0 = self._g(t, u, forcing)
        if self._use_dense():
            E, P1, P2 = self._dense_phi()
            u1 = E @ u + dt * (P1 @ g0)
            return u1 + dt * (P2 @ (self._g(t + dt, u1, forcing) - g0))
        A = self._operator(t)
        u1 = _phi_action(A, dt, u, [g0])
        return _phi_action(A, dt, u, [g0, self._g(t + dt, u1, forcing) - g0])

    def _expr(self, u, t, forcing):
        dt = self.dt
        g0 = self._g(t, u, forcing)
        if self._use_dense():
            P1 = self._dense_phi()[1]
            return u + dt * (P1 @ (self._A @ u + g0))
        A = self._operator(t)
        f = A @ u + g0
        J = A if self.reaction is None else (A + self.reaction.jacobian(u)).tocsr()
        return u + _phi_action(J, dt, np.zeros_like(u), [f])


def _phi_action(A, dt, u, ws):
    """``exp(dt A) u + dt sum_k phi_k(dt A) ws[k-1]`` via one augmented action."""
    n = u.size
    p = len(ws)
    top = sp.hstack([dt * A] + [sp.csr_matrix((dt * w)[:, None]) for w in reversed(ws)])
    shift = sp.diags([np.ones(p - 1)], [1], shape=(p, p)) if p > 1 else sp.csr_matrix((1, 1))
    bottom = sp.hstack([sp.csr_matrix((p, n)), shift])
    aug = sp.vstack([top, bottom]).tocsc()
    v = np.concatenate([u, np.zeros(p - 1), [1.0]])
    return spla.expm_multiply(aug, v, traceA=float(aug.diagonal().sum()))[:n]


class _ScalarSystem:
    """Tiny adapter so the step functions accept plain matrices."""

    def __init__(self, mass, stiffness, reaction):
        self.mass = mass
        self.stiffness = stiffness
        self.stiffness_terms = []
        self.reaction = reaction
        self.time_dependent = False

    def stiffness_at(self, t):
        return self.stiffness


def _as_system(system):
    if hasattr(system, "stiffness_at"):
        return system
    S = sp.csr_matrix(np.atleast_2d(system))
    return _ScalarSystem(np.ones(S.shape[0]), S, None)


def _make_step(scheme):
    def step(u, t, dt, system, forcing=None, **kw):
        system = _as_system(system)
        if forcing is None:
            forcing = system.rhs if hasattr(system, "rhs") else (lambda _t: np.zeros(system.mass.size))
        return Stepper(system, scheme, dt, **kw).step(np.atleast_1d(u), t, forcing)

    step.__name__ = f"step_{scheme}"
    step.__doc__ = f"One {scheme} step of ``system`` from ``(t, u)``; builds a throwaway Stepper."
    return step


step_impl = _make_step("impl")
step_etd1 = _make_step("etd1")
step_etd2 = _make_step("etd2")
step_expr = _make_step("expr")
