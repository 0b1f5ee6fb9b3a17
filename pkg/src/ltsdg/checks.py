"""Fast invariant checks run by ``lts-dg check``."""

from __future__ import annotations

import math

import numpy as np


def _graded_mesh():
    from .mesh import build_graded_mesh_1d
    m = build_graded_mesh_1d(1.0, 3.0, 2.0, 2)
    ok = np.allclose(m.sizes, [1 / 3, 2 / 3, 2 / 3, 2 / 3, 2 / 3], rtol=1e-12)
    eto = build_graded_mesh_1d(20.0, 100.0, 1.05, 100)
    ok &= abs(eto.sizes[:100].sum() - 20.0) < 1e-12 and eto.nodes[-1] >= 100.0
    return ok, f"eto mesh: {eto.n_elements} elements, h0={eto.sizes[0]:.4e}"


def _incircle():
    from .mesh import incircle_radius
    a = incircle_radius(np.array([[0, 0], [1, 0], [0, 1.0]]))
    b = incircle_radius(np.array([[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]]))
    return abs(a - 0.2928932188134524) < 1e-12 and abs(b - 1 / (2 * math.sqrt(3))) < 1e-12, f"{a:.6f}, {b:.6f}"


def _sipg_kernel():
    from .dg import BoundaryCondition, assemble_dare
    from .mesh import unit_square_mesh
    nat = BoundaryCondition("neumann", 0.0)
    g = assemble_dare(unit_square_mesh(4, degree=2), 1.0, 0.0, {"wall": nat})
    one = g.space.project(lambda x: np.ones(x.shape[:-1]))
    r = np.abs(g.stiffness @ one).max() / abs(g.stiffness).max()
    sym = abs(g.stiffness - g.stiffness.T).max() / abs(g.stiffness).max()
    return r < 1e-12 and sym < 1e-12, f"|S 1|={r:.1e}, asym={sym:.1e}"


def _phi_recurrence():
    from .integrators import phi_matrices
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(1, 9))
        A = rng.standard_normal((n, n))
        A *= 2.0 * rng.random() / max(np.linalg.norm(A, 2), 1e-300)
        ph = phi_matrices(A, 3)
        for k in range(3):
            worst = max(worst, np.abs(ph[k + 1] @ A - (ph[k] - np.eye(n) / math.factorial(k))).max())
    return worst < 1e-10, f"max residual {worst:.1e}"


def _eligible():
    from .partition import TimeGrid, eligible_set
    g = TimeGrid(1.0, (1, 2, 4))
    sets = [eligible_set(g, r) for r in (1, 2, 3, 4)]
    return sets == [[0], [0, 1], [0], [0, 1, 2]], str(sets)


def _local_residual():
    from .dg import BoundaryCondition, assemble_dare, extract_local
    from .mesh import unit_square_mesh
    from .partition import form_subdomains
    mesh = unit_square_mesh(6, degree=1, tags={"left": "inflow", "right": "outflow"})
    bcs = {"inflow": BoundaryCondition("dirichlet", 1.0), "outflow": BoundaryCondition("neumann", 0.0),
           "wall": BoundaryCondition("neumann", 0.0)}
    g = assemble_dare(mesh, 0.05, (1.0, 0.3), bcs)
    dts = np.where(mesh.centroids[:, 0] < 0.5, 0.25, 0.5)
    p = form_subdomains(mesh, dts)
    u = np.random.default_rng(0).standard_normal(g.size)
    total = np.zeros(g.size)
    for i in range(p.n_subdomains):
        loc = extract_local(g, p, i)
        total[loc.dofs] = loc.forcing(0.0, u[loc.trace_dofs]) - loc.stiffness @ u[loc.dofs]
    ref = g.residual(u, 0.0)
    err = np.abs(total - ref).max() / np.abs(ref).max()
    return err < 1e-13, f"relative difference {err:.1e}"


def _eto_overlap():
    from .models import EtoSpec
    from .partition import overlap
    pr = EtoSpec().build()
    po = overlap(pr.partition, 1, "vertex")
    e0, e1 = po.elements
    ok = e0.min() == 0 and e0.max() == 100 and e1.min() == 99 and e1.max() == pr.space.n_elements - 1
    return bool(ok), f"omega0 elements 0..{e0.max()}, omega1 {e1.min()}..{e1.max()}"


def _reduction():
    from .lts import GtsDriver, NoltsDriver, OltsDriver
    from .models import EtoSpec
    from .partition import form_subdomains
    pr = EtoSpec(r=20, zmax_factor=2.0).build()
    mesh = pr.space.mesh
    p = form_subdomains(mesh, np.full(mesh.n_elements, 2.0**-6), 0.0, 0.5)
    ug = GtsDriver(pr.system, "impl", 2.0**-6, 0.0, 0.5).run(pr.u0)
    uo = OltsDriver(pr.system, p, "impl").run(pr.u0)
    un = NoltsDriver(pr.system, p, "impl").run(pr.u0)
    d = max(np.abs(ug - uo).max(), np.abs(ug - un).max())
    return d <= 1e-12, f"max difference {d:.1e}"


def _inlet():
    from .models import ogata_banks_exact
    v = float(ogata_banks_exact(0.0, 0.5, 1.0, 0.01))
    return abs(v - 1.0) < 1e-12, f"C(0, 0.5) = {v:.15f}"


CHECKS = [
    ("graded mesh closure", _graded_mesh),
    ("incircle radius", _incircle),
    ("SIPG constant kernel and symmetry", _sipg_kernel),
    ("phi recurrence", _phi_recurrence),
    ("eligible sets", _eligible),
    ("local systems sum to global residual", _local_residual),
    ("ETO overlap extents", _eto_overlap),
    ("single sub-domain reduction", _reduction),
    ("exact solution inlet value", _inlet),
]


def run_checks(echo=print) -> bool:
    ok_all = True
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:   # report and keep going
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        ok_all &= bool(ok)
        echo(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return ok_all
