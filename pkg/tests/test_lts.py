import numpy as np
import pytest

from ltsdg.dg import BoundaryCondition, assemble_dare, assemble_eto
from ltsdg.errors import ParameterError
from ltsdg.lts import (GtsDriver, LtsState, NoltsDriver, OltsDriver, TraceLog, gts_advance, make_driver,
                       nolts_advance, olts_advance)
from ltsdg.mesh import Mesh1D, build_graded_mesh_1d
from ltsdg.partition import ScheduleError, form_subdomains, overlap


def _heat(n=16, degree=1):
    mesh = Mesh1D(np.linspace(0, 1, n + 1), degree)
    g = assemble_dare(mesh, 0.05, 0.0, {"electrode": BoundaryCondition("dirichlet", 1.0),
                                        "far-field": BoundaryCondition("neumann", 0.0)})
    u0 = g.space.project(lambda x: np.exp(-20 * (x[..., 0] - 0.6) ** 2))
    return mesh, g, u0


def _two_level(mesh, fine, coarse, t1, split=0.5):
    dts = np.where(mesh.centroids < split, fine, coarse)
    return form_subdomains(mesh, dts, 0.0, t1)


def test_single_subdomain_reduces_to_gts():
    mesh, g, u0 = _heat()
    p = form_subdomains(mesh, np.full(mesh.n_elements, 2.0**-5), 0.0, 0.5)
    ref = GtsDriver(g, "impl", 2.0**-5, 0.0, 0.5).run(u0)
    for drv in (OltsDriver(g, p, "impl"), NoltsDriver(g, p, "impl")):
        np.testing.assert_allclose(drv.run(u0), ref, rtol=1e-13, atol=1e-14)
    np.testing.assert_allclose(gts_advance(g, "impl", 2.0**-5, 0.0, 0.5, u0), ref, atol=0)


def test_eto_single_subdomain_reduction():
    mesh = build_graded_mesh_1d(1, 3, 1.2, 6)
    g = assemble_eto(mesh)
    u0 = np.concatenate([g.space.project(lambda x: np.ones(x.shape[:-1])), np.zeros(g.space.ndof)])
    p = form_subdomains(mesh, np.full(mesh.n_elements, 2.0**-4), 0.0, 2.0)
    ref = GtsDriver(g, "impl", 2.0**-4, 0.0, 2.0).run(u0)
    np.testing.assert_allclose(OltsDriver(g, p, "impl").run(u0), ref, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("kind", ["olts", "nolts"])
def test_two_level_converges_to_reference(kind):
    mesh, g, u0 = _heat()
    ref = GtsDriver(g, "etd2", 2.0**-12, 0.0, 0.5).run(u0)
    errs = []
    for k in (4, 5, 6):
        p = _two_level(mesh, 2.0 ** -(k + 1), 2.0**-k, 0.5)
        if kind == "olts":
            p = overlap(p, 1)
        errs.append(np.abs(make_driver(kind, g, p, "impl").run(u0) - ref).max())
    rates = -np.diff(np.log2(errs))
    assert np.all(rates > 0.8), rates


def _logged_orders(order):
    mesh, g, u0 = _heat()
    p = overlap(form_subdomains(mesh, np.where(mesh.centroids < 0.3, 0.25, np.where(
        mesh.centroids < 0.6, 0.5, 1.0)), 0.0, 1.0), 1)
    drv = OltsDriver(g, p, "impl", order)
    log = TraceLog()
    state = drv.advance(drv.init(u0), log)
    assert state.synchronized and state.counts[0] == 4
    adv = [(r, s) for _, r, s, _, a in log.rows if a == "advance"]
    return p, adv


def test_update_order_decreasing_and_increasing():
    p, adv = _logged_orders("D")
    lam = p.grid.lambdas
    assert lam == (1, 2, 4)
    by_r = {}
    for r, s in adv:
        by_r.setdefault(r, []).append(s)
    assert by_r == {1: [0], 2: [1, 0], 3: [0], 4: [2, 1, 0]}
    _, adv = _logged_orders("I")
    by_r = {}
    for r, s in adv:
        by_r.setdefault(r, []).append(s)
    assert by_r[4] == [0, 1, 2] and by_r[2] == [0, 1]
    with pytest.raises(ParameterError):
        OltsDriver(_heat()[1], p, "impl", order="X")


def test_traces_never_from_the_future():
    mesh, g, u0 = _heat()
    p = overlap(_two_level(mesh, 0.125, 0.5, 1.0), 1)
    drv = OltsDriver(g, p, "impl", "I")
    state = drv.advance(drv.init(u0))
    assert all(tc.max() <= state.counts[0] for tc in state.trace_counts if tc.size)
    # an unsynchronised state is rejected
    bad = LtsState(state.x, [state.counts[0], state.counts[0] + 1], state.traces, state.trace_counts)
    with pytest.raises(ScheduleError):
        olts_advance(drv, bad)


def test_trace_log_csv(tmp_path):
    mesh, g, u0 = _heat()
    drv = NoltsDriver(g, _two_level(mesh, 0.25, 0.5, 1.0), "impl")
    log = TraceLog()
    nolts_advance(drv, drv.init(u0), log)
    log.write(tmp_path / "log.csv")
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert lines[0] == "n,r,subdomain,t_target,action"
    actions = {ln.split(",")[-1] for ln in lines[1:]}
    assert actions == {"advance", "interpolate"}


def test_nolts_parameter_checks():
    mesh, g, u0 = _heat()
    p = _two_level(mesh, 0.25, 0.5, 1.0)
    with pytest.raises(ParameterError, match="smaller"):
        NoltsDriver(g, p, "impl", dt_star=0.25)
    with pytest.raises(ParameterError):
        NoltsDriver(g, overlap(p, 1), "impl")
    with pytest.raises(ParameterError):
        make_driver("mrk", g, p)


def test_nolts_trace_is_linear_interpolation():
    mesh, g, u0 = _heat()
    p = _two_level(mesh, 0.25, 0.5, 1.0)
    drv = NoltsDriver(g, p, "impl")
    loc = drv.locals[0]
    a = np.random.default_rng(0).random(loc.trace_dofs.size)
    b = a + 1.0
    f = drv._forcing(loc, 0.0, a, (b - a) / drv.dt_star)
    mid = loc.source + loc.boundary + loc.coupling @ (0.5 * (a + b))
    np.testing.assert_allclose(f(0.25), mid, atol=1e-14)
    np.testing.assert_allclose(f(0.5), loc.source + loc.boundary + loc.coupling @ b, atol=1e-14)


def test_observer_sees_every_sync_time():
    mesh, g, u0 = _heat()
    p = overlap(_two_level(mesh, 0.125, 0.25, 1.0), 1)
    times = []
    OltsDriver(g, p, "impl").run(u0, lambda t, u: times.append(t))
    assert times == [0.25 * k for k in range(5)]
    with pytest.raises(ScheduleError):
        OltsDriver(g, form_subdomains(mesh, np.full(mesh.n_elements, 0.25)), "impl").run(u0)
