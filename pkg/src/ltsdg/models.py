"""Benchmark problems, analytic oracles and derived observables.

Three problems are provided, each assembled into a ``Problem`` bundle
(global system, non-overlapped partition with its time grid, initial
state and observables):

* ``ogata``     advection-diffusion of a step on the unit square, two
                vertical strips with different steps, exact solution known;
* ``eto``       two-species electrode kinetics on a graded 1D mesh, output
                is the current trace ``G(t)``;
* ``fracture``  transport through a permeable fracture driven by a Darcy
                velocity field, steps from the CFL rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc, erfcx

from .dg.assembly import BoundaryCondition, assemble_dare, assemble_darcy, solve_steady, velocity_from_pressure
from .dg.eto import assemble_eto, current, potential, rates
from .dg.space import DGSpace
from .dg.system import DGReaction
from .errors import ConfigError, ParameterError
from .mesh import build_graded_mesh_1d, load_mesh_2d, rectangle_mesh
from .partition import element_dts, form_subdomains

__all__ = [
    "EtoSpec", "FractureSpec", "OgataBanksSpec", "Problem", "cubic_reaction", "current", "eto_mass",
    "ogata_banks_exact", "potential", "rates", "relative_error_current", "relative_error_overlap",
]


# -- oracles and observables ------------------------------------------------

def ogata_banks_exact(x, t, v: float = 1.0, eps: float = 0.01):
    """Step-inlet solution ``C = (erfc(a) + exp(v x / eps) erfc(b)) / 2``.

    ``a = (x - v t) / (2 sqrt(eps t))`` and ``b = (x + v t) / (2 sqrt(eps t))``;
    the second term is evaluated as ``exp(v x / eps - b^2) erfcx(b)`` so it
    does not overflow for small ``eps``. At ``t <= 0`` the initial step
    (1 at the inlet, 0 elsewhere) is returned.
    """
    if not eps > 0:
        raise ParameterError("diffusivity must be positive")
    x = np.asarray(x, dtype=float)
    if t <= 0:
        return np.where(x <= 0, 1.0, 0.0)
    s = 2.0 * math.sqrt(eps * t)
    a = (x - v * t) / s
    b = (x + v * t) / s
    return 0.5 * (erfc(a) + np.exp(v * x / eps - b * b) * erfcx(b))


def cubic_reaction(sign: str = "c-c3"):
    """``(R, dR)`` for ``R = C - C^3`` (``"c-c3"``) or ``R = C^3 - C`` (``"c3-c"``)."""
    if sign == "c-c3":
        return (lambda c: c - c**3), (lambda c: 1.0 - 3.0 * c**2)
    if sign == "c3-c":
        return (lambda c: c**3 - c), (lambda c: 3.0 * c**2 - 1.0)
    raise ConfigError(f"reaction sign must be 'c-c3' or 'c3-c', got {sign!r}")


def relative_error_overlap(space: DGSpace, u, exact) -> float:
    """``||u - C|| / ||C||`` over the mesh; ``exact`` takes points of shape (..., dim)."""
    ref = np.broadcast_to(exact(space.qx), space.qw.shape)
    norm = math.sqrt(float(np.sum(space.qw * ref**2)))
    if norm == 0:
        raise ParameterError("reference field has zero norm")
    return space.l2_error(u, exact) / norm


def relative_error_current(t_ref, g_ref, t, g) -> float:
    """``100 |G_ref - G|^2 / |G_ref|^2`` in percent.

    ``G`` is resampled onto ``t_ref`` by linear interpolation. The norm is
    the trapezoid rule along the sweep, where ``|dP| = dt``.
    """
    t_ref = np.asarray(t_ref, dtype=float)
    g_ref = np.asarray(g_ref, dtype=float)
    gi = np.interp(t_ref, np.asarray(t, dtype=float), np.asarray(g, dtype=float))
    den = np.trapezoid(g_ref**2, t_ref)
    if den == 0:
        raise ParameterError("reference current has zero norm")
    return 100.0 * float(np.trapezoid((g_ref - gi) ** 2, t_ref) / den)


def eto_mass(space: DGSpace, chi) -> float:
    """``int (C_Q + C_Q+) dz``."""
    w = space.integral_weights()
    n = space.ndof
    return float(w @ chi[:n] + w @ chi[n:2 * n])


# -- problem bundle -----------------------------------------------------------

@dataclass
class Problem:
    """Everything a driver needs, plus how to judge the result.

    ``partition`` is the non-overlapped decomposition carrying the level-0
    time grid. ``observe(t, u)`` (optional) returns a scalar recorded at
    every synchronised time; ``exact(x)`` (optional) is the analytic field
    at the final time.
    """

    name: str
    system: object
    partition: object
    u0: np.ndarray
    adjacency: str = "face"
    observe: object = None
    exact: object = None
    info: dict = field(default_factory=dict)

    @property
    def space(self) -> DGSpace:
        return self.system.space

    @property
    def t0(self) -> float:
        return self.partition.grid.t0

    @property
    def t1(self) -> float:
        return self.partition.grid.t1


def _dyadic(name, value):
    m, _ = math.frexp(value)
    if not (value > 0 and m == 0.5):
        raise ParameterError(f"{name} must be a power of two, got {value}")


@dataclass
class OgataBanksSpec:
    """Unit-square advection-diffusion with strips ``[0, x1]`` and ``[x1, x2]``."""

    pe: float = 10.0
    velocity: float = 1.0
    x1: float = 0.5
    x2: float = 1.0
    hx: float = 0.02
    ny: int = 4
    dt0: float = 2.0**-11
    dt1: float = 2.0**-10
    t_end: float = 0.5
    degree: int = 1
    sigma0: float = 10.0

    @property
    def eps(self) -> float:
        return abs(self.velocity) / self.pe

    def build(self) -> Problem:
        if not self.pe > 0 or not self.hx > 0 or self.ny < 1:
            raise ParameterError("need pe > 0, hx > 0 and ny >= 1")
        if not 0 < self.x1 < self.x2:
            raise ParameterError("strip bounds must satisfy 0 < x1 < x2")
        _dyadic("dt0", self.dt0)
        _dyadic("dt1", self.dt1)
        nx = int(round(self.x2 / self.hx))
        if abs(nx * self.hx - self.x2) > 1e-9 * self.x2:
            raise ParameterError("x2 must be a multiple of hx")
        xs = np.linspace(0.0, self.x2, nx + 1)
        ys = np.linspace(0.0, 1.0, self.ny + 1)
        mesh = rectangle_mesh(xs, ys, {"left": "inflow", "right": "outflow"}, self.degree)
        v, eps = self.velocity, self.eps

        def exact_bc(x, t):
            return ogata_banks_exact(x[:, 0], t, v, eps)

        bcs = {"inflow": BoundaryCondition("dirichlet", exact_bc),
               "outflow": BoundaryCondition("dirichlet", exact_bc),
               "wall": BoundaryCondition("neumann", 0.0)}
        system = assemble_dare(mesh, eps, (v, 0.0), bcs, self.sigma0)
        dts = np.where(mesh.centroids[:, 0] < self.x1, self.dt0, self.dt1)
        part = form_subdomains(mesh, dts, 0.0, self.t_end)
        t_end = self.t_end
        return Problem("ogata", system, part, np.zeros(system.size), adjacency="vertex",
                       exact=lambda x: ogata_banks_exact(x[..., 0], t_end, v, eps),
                       info={"eps": eps, "pe": self.pe})


@dataclass
class EtoSpec:
    """Electrode kinetics on the graded mesh, split after element ``r``."""

    delta_len: float = 20.0
    zmax_factor: float = 5.0
    q: float = 1.05
    r: int = 100
    k0: float = 20.0
    transfer_coeff: float = 0.5
    d_plus: float = 1.0
    p1: float = -10.0
    p2: float = 10.0
    dt0: float = 2.0**-9
    dt1: float = 2.0**-6
    degree: int = 1
    sigma0: float = 10.0

    @property
    def t_lambda(self) -> float:
        return self.p2 - self.p1

    def build(self) -> Problem:
        _dyadic("dt0", self.dt0)
        _dyadic("dt1", self.dt1)
        mesh = build_graded_mesh_1d(self.delta_len, self.zmax_factor * self.delta_len, self.q, self.r,
                                    degree=self.degree)
        system = assemble_eto(mesh, self.d_plus, self.k0, self.transfer_coeff, self.p1, self.p2, self.sigma0)
        space = system.space
        dts = np.where(np.arange(mesh.n_elements) < self.r, self.dt0, self.dt1)
        part = form_subdomains(mesh, dts, 0.0, 2.0 * self.t_lambda)
        u0 = np.concatenate([space.project(lambda x: np.ones(x.shape[:-1])), np.zeros(space.ndof)])
        k0, a, p1, p2 = self.k0, self.transfer_coeff, self.p1, self.p2

        def observe(t, chi):
            return current(space, chi, t, k0, a, p1, p2)

        return Problem("eto", system, part, u0, adjacency="vertex", observe=observe,
                       info={"h0": float(mesh.sizes[0]), "n_elements": mesh.n_elements})


def _axis(lo, hi, a, b, coarse, fine, transition=0):
    """Grid lines: spacing ``fine`` on ``[a, b]``, about ``coarse`` elsewhere."""
    pts = [np.linspace(a, b, int(math.ceil((b - a) / fine - 1e-9)) + 1)]
    left = a - transition * fine
    right = b + transition * fine
    if transition and left > lo:
        pts.append([left])
    if transition and right < hi:
        pts.append([right])
    start = left if transition and left > lo else a
    stop = right if transition and right < hi else b
    if start > lo:
        pts.append(np.linspace(lo, start, max(1, int(math.ceil((start - lo) / coarse - 1e-9))) + 1))
    if stop < hi:
        pts.append(np.linspace(stop, hi, max(1, int(math.ceil((hi - stop) / coarse - 1e-9))) + 1))
    xs = np.unique(np.round(np.concatenate([np.atleast_1d(p) for p in pts]), 12))
    return xs


@dataclass
class FractureSpec:
    """Transport through a thin high-permeability box in the unit square.

    The box is ``[x_r, x_r + length] x [y_r - height, y_r]``. Pressure is
    fixed on the inflow (left) and outflow (right) sides, walls are sealed.
    The solute enters at ``c0`` through the inflow side. Element steps come
    from the CFL rule and are clipped at ``dt_max``, which keeps the number
    of sub-domains small on meshes with a wide spread of element sizes.
    """

    x_r: float = 0.2
    y_r: float = 0.51
    height: float = 0.02
    length: float = 0.6
    contrast: float = 1000.0
    porosity: float = 1.0
    viscosity: float = 1.0
    pe: float = 3000.0
    c_max: float = 8.0
    dt_cap: float = 2.0**-2
    dt_max: float = 2.0**-9
    c0: float = 1.0
    p0: float = 1.0
    p1: float = 0.0
    reaction: str = "none"
    reaction_sign: str = "c-c3"
    t_end: float = 1.0
    degree: int = 1
    sigma0: float = 10.0
    coarse: float = 0.1
    fine_x: float = 0.04
    fine_y: float = 0.01
    mesh_file: str = ""

    @property
    def diffusivity(self) -> float:
        return 1.0 / self.pe

    def box(self):
        return self.x_r, self.x_r + self.length, self.y_r - self.height, self.y_r

    def mesh(self):
        if self.mesh_file:
            return load_mesh_2d(self.mesh_file, self.degree)
        x0, x1, y0, y1 = self.box()
        if not (0 < x0 < x1 < 1 and 0 < y0 < y1 < 1):
            raise ParameterError("fracture box must lie inside the unit square")
        xs = _axis(0.0, 1.0, x0, x1, self.coarse, self.fine_x)
        ys = _axis(0.0, 1.0, y0, y1, self.coarse, self.fine_y, transition=4)
        return rectangle_mesh(xs, ys, {"left": "inflow", "right": "outflow"}, self.degree)

    def in_box(self, pts) -> np.ndarray:
        x0, x1, y0, y1 = self.box()
        x, y = pts[..., 0], pts[..., 1]
        return (x > x0) & (x < x1) & (y > y0) & (y < y1)

    def flow(self, mesh=None):
        """``(space, pressure, velocity, permeability)`` from the Darcy solve."""
        mesh = mesh if mesh is not None else self.mesh()
        space = DGSpace(mesh)
        perm = np.where(self.in_box(mesh.centroids), self.contrast, 1.0)
        bcs = {"inflow": BoundaryCondition("dirichlet", self.p0),
               "outflow": BoundaryCondition("dirichlet", self.p1),
               "wall": BoundaryCondition("neumann", 0.0)}
        darcy = assemble_darcy(space, perm / self.viscosity, bcs, self.sigma0)
        p = solve_steady(darcy)
        vel = velocity_from_pressure(space, p, perm / (self.viscosity * self.porosity))
        return space, p, vel, perm

    def build(self) -> Problem:
        if self.reaction not in ("none", "cubic"):
            raise ConfigError(f"reaction must be 'none' or 'cubic', got {self.reaction!r}")
        _dyadic("dt_cap", self.dt_cap)
        _dyadic("dt_max", self.dt_max)
        if not self.c_max > 0:
            raise ParameterError("c_max must be positive")
        mesh = self.mesh()
        space, p, vel, perm = self.flow(mesh)
        reaction = None
        if self.reaction == "cubic":
            f, df = cubic_reaction(self.reaction_sign)
            reaction = DGReaction(space, f, df)
        bcs = {"inflow": BoundaryCondition("dirichlet", self.c0),
               "outflow": BoundaryCondition("neumann", 0.0),
               "wall": BoundaryCondition("neumann", 0.0)}
        system = assemble_dare(space, self.diffusivity, vel, bcs, self.sigma0, reaction=reaction)
        speed = np.linalg.norm(vel, axis=1)
        # steps coarser than dt_max only shorten, so the CFL bound still holds
        dts = np.minimum(element_dts(speed, mesh.inradius, self.c_max, self.dt_cap), self.dt_max)
        part = form_subdomains(mesh, dts, 0.0, self.t_end)
        return Problem("fracture", system, part, np.zeros(system.size), adjacency="face",
                       info={"speed": speed, "pressure": p, "permeability": perm})


PROBLEMS = {"ogata": OgataBanksSpec, "eto": EtoSpec, "fracture": FractureSpec}
