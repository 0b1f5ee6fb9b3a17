"""Acceptance criteria 1-10, each reported as one PASS/FAIL line.

Every test asserts its criterion at the stated tolerance, so a failing
criterion also fails the test. Criteria 4 and 5 share one ETO experiment;
criterion 5 also runs the fracture experiment. Both are slow (minutes).
"""

import math

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from ltsdg.config import loads
from ltsdg.dg import BoundaryCondition, assemble_dare, solve_steady
from ltsdg.dg.system import OdeSystem, PointwiseReaction
from ltsdg.experiment import run_experiment, simulate
from ltsdg.integrators import Stepper, phi_matrices
from ltsdg.lts import GtsDriver, NoltsDriver, OltsDriver
from ltsdg.mesh import build_graded_mesh_1d, unit_square_mesh
from ltsdg.models import EtoSpec, FractureSpec, OgataBanksSpec, eto_mass, relative_error_overlap
from ltsdg.partition import form_subdomains, overlap


def _slope(hs, errs):
    return float(np.polyfit(np.log2(hs), np.log2(errs), 1)[0])


def _curve(report, label, integ):
    pts = sorted((r.error, r.cpu_seconds) for r in report.results
                 if r.cell.label == label and r.cell.integrator == integ)
    return pts


def _matched(fast, slow):
    """CPU ratios slow/fast at the errors of ``fast``, read off ``slow`` by log-log interpolation.

    Only points of ``fast`` whose error lies inside the error range of
    ``slow`` are compared (no extrapolation).
    """
    e = np.log([p[0] for p in slow])
    c = np.log([p[1] for p in slow])
    order = np.argsort(e)
    e, c = e[order], c[order]
    ratios = []
    for err, cpu in fast:
        le = math.log(err)
        if e[0] <= le <= e[-1]:
            ratios.append(math.exp(np.interp(le, e, c)) / cpu)
    return ratios


# -- 1 ------------------------------------------------------------------------

def test_criterion_01_reduction(criterion):
    prob = EtoSpec().build()
    mesh = prob.space.mesh
    dt = 2.0**-6
    p = form_subdomains(mesh, np.full(mesh.n_elements, dt), 0.0, prob.t1)
    ref = GtsDriver(prob.system, "impl", dt, 0.0, prob.t1).run(prob.u0)
    d_olts = np.abs(OltsDriver(prob.system, p, "impl").run(prob.u0) - ref).max()
    d_nolts = np.abs(NoltsDriver(prob.system, p, "impl").run(prob.u0) - ref).max()
    ok = d_olts <= 1e-12 and d_nolts <= 1e-12
    criterion(1, ok, f"max|OLTS-GTS|={d_olts:.2e}, max|NOLTS-GTS|={d_nolts:.2e} (tol 1e-12)")
    assert ok


# -- 2 ------------------------------------------------------------------------

def test_criterion_02_oracle_convergence(criterion):
    prob = OgataBanksSpec(pe=10.0, hx=0.02).build()
    hs = [2.0**-k for k in range(5, 10)]
    us, errs = [], []
    for h in hs:
        u = GtsDriver(prob.system, "impl", h, 0.0, prob.t1).run(prob.u0)
        us.append(u)
        errs.append(relative_error_overlap(prob.space, u, prob.exact))
    # successive differences cancel the spatial error
    diffs = [prob.space.l2_norm(us[i] - us[i + 1]) for i in range(len(us) - 1)]
    orders = [math.log2(diffs[i] / diffs[i + 1]) for i in range(len(diffs) - 1)]
    monotone = all(a > b for a, b in zip(errs, errs[1:]))
    ok = monotone and min(orders) >= 0.9
    criterion(2, ok, f"temporal orders {np.round(orders, 3).tolist()} (need >= 0.9); "
                     f"errors {[f'{e:.3e}' for e in errs]} monotone={monotone}")
    assert ok


# -- 3 ------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_03_overlap_trend(criterion):
    cfg = loads("run.problem = ogata\nrun.scheme = olts\nrun.order = I\nrun.n_ov = 1..11\n"
                "ogata.hx = 0.04\nogata.ny = 2\n")
    ns = list(range(1, 12))
    slopes = {}
    for pe in (0.1, 1.0, 10.0, 100.0):
        prob = cfg.spec({"pe": pe}).build()
        errs = []
        for n in ns:
            u = simulate(cfg, prob, "olts", "impl", 0, "I", n)[0]
            errs.append(relative_error_overlap(prob.space, u, prob.exact))
        slopes[pe] = float(np.polyfit(ns, np.log(errs), 1)[0])
    ok = slopes[0.1] <= 0 and slopes[1.0] <= 0 and slopes[10.0] >= 0 and slopes[100.0] >= 0
    txt = ", ".join(f"Pe={k:g}: {v:+.3e}" for k, v in slopes.items())
    criterion(3, ok, f"slopes of log E vs n at hx=0.04 ({txt}); need <= 0 for Pe 0.1, 1 and >= 0 for 10, 100")
    assert ok


# -- 4 and 5 (ETO) -------------------------------------------------------------

ETO_CFG = """
run.problem = eto
run.scheme = gts, olts, nolts
run.integrator = impl
run.levels = 0..3
run.reference_level = 4
run.snapshots = false
run.figures = false
eto.dt0 = 2^-9
eto.dt1 = 2^-6
"""

FRACTURE_CFG = """
run.problem = fracture
run.scheme = gts, olts
run.integrator = impl, etd1
run.levels = 0..3
run.reference_level = 4
run.snapshots = false
run.figures = false
fracture.reaction = none
"""


@pytest.fixture(scope="module")
def eto_report(tmp_path_factory):
    return run_experiment(loads(ETO_CFG), tmp_path_factory.mktemp("eto"))


@pytest.fixture(scope="module")
def fracture_report(tmp_path_factory):
    return run_experiment(loads(FRACTURE_CFG), tmp_path_factory.mktemp("fracture"))


@pytest.mark.slow
def test_criterion_04_eto_accuracy(criterion, eto_report):
    err = {}
    for label in ("olts-D", "nolts"):
        err[label] = [e for _, e in sorted((r.cell.level, r.error) for r in eto_report.results
                                          if r.cell.label == label)]
    decay = all(all(a > b for a, b in zip(v, v[1:])) for v in err.values())
    order_ok = err["nolts"][0] <= err["olts-D"][0]
    ok = decay and order_ok
    criterion(4, ok, f"level 0: NOLTS {err['nolts'][0]!r} vs OLTS {err['olts-D'][0]!r} "
                     f"(NOLTS <= OLTS: {order_ok}); decay over r=0..3: {decay}")
    assert ok


@pytest.mark.slow
def test_criterion_05_efficiency(criterion, eto_report, fracture_report):
    parts = []
    ok = True

    def compare(name, fast, slow, need):
        nonlocal ok
        r = _matched(fast, slow)
        good = bool(r) and min(r) > 1 and min(r) >= need
        ok &= good
        shown = ", ".join(f"{x:.2f}" for x in r) if r else "no matched points"
        parts.append(f"{name}: speedups [{shown}] {'ok' if good else 'NOT MET'}")

    gts = _curve(eto_report, "gts", "impl")
    olts = _curve(eto_report, "olts-D", "impl")
    nolts = _curve(eto_report, "nolts", "impl")
    compare("eto NOLTS<OLTS", nolts, olts, 1.0)
    compare("eto OLTS<GTS", olts, gts, 1.2)
    for q in ("impl", "etd1"):
        compare(f"fracture OLTS<GTS ({q})", _curve(fracture_report, "olts-D", q),
                _curve(fracture_report, "gts", q), 1.2)
    criterion(5, ok, "; ".join(parts))
    assert ok


# -- 6 ------------------------------------------------------------------------

def _run(system, scheme, h, u0, t1, forcing):
    st = Stepper(system, scheme, h)
    u = np.array(u0, dtype=float)
    for n in range(int(round(t1 / h))):
        u = st.step(u, n * h, forcing)
    return u


def test_criterion_06_integrator_orders(criterion):
    hs = [2.0**-k for k in range(3, 9)]
    slopes = {}
    # scalar suite: u' = -u + cos t on [0, 1]
    ref = solve_ivp(lambda t, u: -u + np.cos(t), (0, 1), [1.0], method="DOP853", rtol=1e-13, atol=1e-14).y[0, -1]
    scalar = OdeSystem(np.ones(1), sp.csr_matrix([[1.0]]), np.zeros(1), np.zeros(1))
    for q in ("impl", "etd1", "etd2"):
        errs = [abs(_run(scalar, q, h, [1.0], 1.0, lambda t: np.array([math.cos(t)]))[0] - ref) for h in hs]
        slopes[("scalar", q)] = _slope(hs, errs)
    # stiff 5x5 suite: random SPD with eigenvalues 1 .. 1e4, exact solution cos(w t)
    q_mat, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((5, 5)))
    A = q_mat @ np.diag([1.0, 1e1, 1e2, 1e3, 1e4]) @ q_mat.T
    w = np.arange(1.0, 6.0)
    five = OdeSystem(np.ones(5), sp.csr_matrix(A), np.zeros(5), np.zeros(5))
    for q in ("impl", "etd1", "etd2"):
        errs = [np.abs(_run(five, q, h, np.ones(5), 1.0, lambda t: -w * np.sin(w * t) + A @ np.cos(w * t))
                       - np.cos(w)).max() for h in hs]
        slopes[("5x5", q)] = _slope(hs, errs)
    # cubic reaction scalar test for the exponential Rosenbrock scheme
    R = PointwiseReaction(lambda u: u - u**3, lambda u: 1 - 3 * u**2)
    cubic = OdeSystem(np.ones(1), sp.csr_matrix((1, 1)), np.zeros(1), np.zeros(1), reaction=R)
    ref = solve_ivp(lambda t, u: u - u**3, (0, 1), [0.5], method="DOP853", rtol=1e-13, atol=1e-15).y[0, -1]
    errs = [abs(_run(cubic, "expr", h, [0.5], 1.0, lambda t: np.zeros(1))[0] - ref) for h in hs]
    slopes[("cubic", "expr")] = _slope(hs, errs)

    target = {"impl": (1.0, 0.2), "etd1": (1.0, 0.2), "etd2": (2.0, 0.3)}
    ok = all(abs(s - target[q][0]) <= target[q][1] for (suite, q), s in slopes.items() if q != "expr")
    ok &= slopes[("cubic", "expr")] >= 2.0
    txt = ", ".join(f"{suite}/{q}={s:.3f}" for (suite, q), s in slopes.items())
    criterion(6, ok, txt)
    assert ok


def test_info_stiff_scalar_etd2_order_reduction(capsys):
    """Prothero-Robinson u' = -lam (u - cos t) - sin t with lam = 1e4 (informational).

    For lam*h >> 1 the two-stage exponential scheme's error is O(h / lam):
    uniformly bounded by C h^2 but with observed slope 1 on this step range.
    """
    lam = 1e4
    hs = [2.0**-k for k in range(3, 9)]
    sysm = OdeSystem(np.ones(1), sp.csr_matrix([[lam]]), np.zeros(1), np.zeros(1))
    errs = [abs(_run(sysm, "etd2", h, [1.0], 1.0, lambda t: np.array([lam * math.cos(t) - math.sin(t)]))[0]
                - math.cos(1.0)) for h in hs]
    s = _slope(hs, errs)
    with capsys.disabled():
        print(f"\n[info] stiff scalar lam=1e4, etd2: slope {s:.3f}, errors {[f'{e:.2e}' for e in errs]}")
    assert max(errs) < 1e-5


# -- 7 ------------------------------------------------------------------------

def test_criterion_07_conservation(criterion):
    prob = EtoSpec().build()
    space = prob.space
    masses = []
    GtsDriver(prob.system, "impl", 2.0**-9, 0.0, prob.t1).run(prob.u0, lambda t, u: masses.append(eto_mass(space, u)))
    eto_drift = max(abs(m - masses[0]) for m in masses)

    mesh = build_graded_mesh_1d(1.0, 2.0, 1.2, 10)
    nat = BoundaryCondition("neumann", 0.0)
    g = assemble_dare(mesh, 1.0, 0.0, {"electrode": nat, "far-field": nat})
    w = g.space.integral_weights()
    c0 = g.space.project(lambda x: np.exp(-10 * (x[..., 0] - 0.5) ** 2))
    dts = np.where(np.arange(mesh.n_elements) < 10, 2.0**-8, 2.0**-6)
    part = form_subdomains(mesh, dts, 0.0, 20 * 2.0**-6)
    drift = {}
    gts = []
    GtsDriver(g, "impl", 2.0**-8, 0.0, part.grid.t1, sync_every=4).run(c0, lambda t, u: gts.append(w @ u))
    drift["gts"] = float(np.abs(np.diff(gts)).max())
    for name, drv in (("olts", OltsDriver(g, overlap(part, 1), "impl")), ("nolts", NoltsDriver(g, part, "impl"))):
        m = []
        drv.run(c0, lambda t, u: m.append(w @ u))
        drift[name] = float(np.abs(np.diff(m)).max())
    ok = eto_drift <= 1e-8 and drift["olts"] <= 1e-10 and drift["nolts"] <= 1e-10
    criterion(7, ok, f"ETO mass drift {eto_drift:.2e} (tol 1e-8); Neumann drift per sync step: "
                     f"OLTS {drift['olts']:.2e}, NOLTS {drift['nolts']:.2e} (tol 1e-10), GTS {drift['gts']:.2e}")
    assert ok


# -- 8 ------------------------------------------------------------------------

def test_criterion_08_phi_oracle(criterion):
    rng = np.random.default_rng(8)
    rec = tay = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 9))
        A = rng.standard_normal((n, n))
        A *= 2.0 * rng.random() / np.linalg.norm(A, 2)
        ph = phi_matrices(A, 2)
        eye = np.eye(n)
        for k in range(2):
            rec = max(rec, np.abs(ph[k + 1] @ A - (ph[k] - eye / math.factorial(k))).max())
        for k in range(3):
            s, term = np.zeros((n, n)), eye.copy()
            for j in range(40):
                s += term / math.factorial(j + k)
                term = term @ A
            tay = max(tay, np.abs(s - ph[k]).max())
    ok = rec <= 1e-10 and tay <= 1e-10
    criterion(8, ok, f"recurrence residual {rec:.1e}, Taylor deviation {tay:.1e} (tol 1e-10)")
    assert ok


# -- 9 ------------------------------------------------------------------------

def test_criterion_09_darcy_sanity(criterion):
    spec = FractureSpec(contrast=1000.0)
    mesh = spec.mesh()
    _, _, vel, _ = spec.flow(mesh)
    speed = np.linalg.norm(vel, axis=1)
    k = int(np.argmax(speed))
    inside = bool(spec.in_box(mesh.centroids[k]))
    ratio = speed.max() / np.median(speed)
    ok = inside and ratio >= 10
    criterion(9, ok, f"max speed {speed.max():.3g} inside fracture: {inside}; max/median = {ratio:.1f} (need >= 10)")
    assert ok


# -- 10 -----------------------------------------------------------------------

def test_criterion_10_sipg_convergence(criterion):
    def exact(x):
        return np.sin(math.pi * x[..., 0]) * np.sin(math.pi * x[..., 1])

    def f(x):
        return 2 * math.pi**2 * exact(x)

    orders = {}
    for degree in (1, 2):
        errs = []
        for n in (4, 8, 16):
            g = assemble_dare(unit_square_mesh(n, degree=degree), 1.0, 0.0,
                              {"wall": BoundaryCondition("dirichlet", 0.0)}, source=f)
            errs.append(g.space.l2_error(solve_steady(g), exact))
        orders[degree] = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    ok = all(min(o) >= d + 0.8 for d, o in orders.items())
    criterion(10, ok, ", ".join(f"p={d}: orders {np.round(o, 3).tolist()} (need >= {d + 0.8})"
                                for d, o in orders.items()))
    assert ok
