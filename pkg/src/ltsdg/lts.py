"""Global and local time-stepping drivers.

* ``GtsDriver``   one step size on the whole system.
* ``OltsDriver``  overlap LTS: within a synchronised step, the sub-domains
  whose clock lands on ``t^n + r*dt`` advance in decreasing ("D") or
  increasing ("I") order of their step, reading traces held constant since
  the last refresh.
* ``NoltsDriver`` non-overlap LTS: a global prediction step of ``dt_star``,
  then every sub-domain re-advances with its own step and traces linearly
  interpolated between the synchronised state and the prediction.

All drivers track time as integer counts of the base step, so
synchronisation is exact. ``advance`` moves an ``LtsState`` forward by one
synchronised step; ``run`` loops to the end of the horizon.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .dg.system import extract_local
from .errors import ParameterError
from .integrators import Stepper
from .partition import ScheduleError, TimeGrid, eligible_set

ORDERS = ("D", "I")


@dataclass
class LtsState:
    """Local solutions with their clocks (base-step counts) and trace caches.

    ``traces[i]`` holds the values of the trace dofs of sub-domain ``i`` and
    ``trace_counts[i]`` the clock of each entry.
    """

    x: list
    counts: list
    traces: list
    trace_counts: list
    n: int = 0

    @property
    def synchronized(self) -> bool:
        return len(set(self.counts)) == 1


@dataclass
class TraceLog:
    """Optional record of driver actions, dumped as CSV."""

    rows: list = field(default_factory=list)

    def add(self, n, r, sub, t_target, action):
        self.rows.append((n, r, sub, t_target, action))

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "r", "subdomain", "t_target", "action"])
            for n, r, s, t, a in self.rows:
                w.writerow([n, r, s, repr(float(t)), a])


def _local_forcing(loc, trace_fn, frozen=None):
    """``forcing(t)`` for a local system given ``trace_fn(t)``.

    ``frozen`` is a trace held constant over the call's lifetime; with
    time-independent data the forcing is then computed once.
    """
    static = loc.boundary_data is None
    f0 = loc.source + loc.boundary if static else None
    has_trace = loc.trace_dofs.size > 0
    varying_cpl = any(m.nnz for _, m in loc.coupling_terms)
    if frozen is not None and static and not varying_cpl:
        f = f0 + loc.coupling @ frozen if has_trace else f0
        return lambda t: f

    def forcing(t):
        f = f0 if static else loc.rhs(t)
        if has_trace:
            c = loc.coupling_at(t) if varying_cpl else loc.coupling
            f = f + c @ trace_fn(t)
        return f

    return forcing


class _Driver:
    grid: TimeGrid

    def run(self, u0, observer=None, log: TraceLog | None = None):
        """Advance from ``t0`` to ``t1``; ``observer(t, u_global)`` sees every sync time."""
        if self.grid.t1 is None:
            raise ScheduleError("time grid has no end time")
        state = self.init(u0)
        if observer is not None:
            observer(self.grid.t0, self.export(state))
        for _ in range(self.grid.n_sync):
            state = self.advance(state, log)
            if observer is not None:
                observer(self.time(state), self.export(state))
        return self.export(state)

    def time(self, state) -> float:
        return self.grid.time(state.counts[0])


class GtsDriver(_Driver):
    """Uniform stepping; ``sync_every`` steps form one synchronised step."""

    def __init__(self, system, scheme: str, dt: float, t0: float = 0.0, t1: float | None = None,
                 sync_every: int = 1, **stepper_kw):
        self.system = system
        self.grid = TimeGrid(dt, (int(sync_every),), t0, t1)
        self.sync_every = int(sync_every)
        self.stepper = Stepper(system, scheme, dt, **stepper_kw).prepare(t0)

    def init(self, u0) -> LtsState:
        return LtsState([np.array(u0, dtype=float)], [0], [np.empty(0)], [np.empty(0, int)])

    def advance(self, state: LtsState, log: TraceLog | None = None) -> LtsState:
        u, c = state.x[0], state.counts[0]
        for _ in range(self.sync_every):
            u = self.stepper.step(u, self.grid.time(c), self.system.forcing)
            c += 1
            if log is not None:
                log.add(state.n, c - state.counts[0], 0, self.grid.time(c), "advance")
        return LtsState([u], [c], state.traces, state.trace_counts, state.n + 1)

    def export(self, state) -> np.ndarray:
        return state.x[0]


class _Decomposed(_Driver):
    def __init__(self, system, partition, scheme: str, **stepper_kw):
        self.system = system
        self.partition = partition
        self.grid = partition.grid
        self.locals = [extract_local(system, partition, i) for i in range(partition.n_subdomains)]
        self.steppers = [Stepper(loc, scheme, dt, **stepper_kw).prepare(self.grid.t0)
                         for loc, dt in zip(self.locals, self.grid.dts)]
        n = system.size
        # global dof -> local position, per sub-domain
        self._pos = []
        for loc in self.locals:
            pos = np.full(n, -1)
            pos[loc.dofs] = np.arange(loc.dofs.size)
            self._pos.append(pos)
        # owner copy used for export
        owner = np.asarray(partition.owner)
        if system.space.n_elements != owner.size:
            raise ScheduleError("partition and system live on different meshes")
        ns = system.n_species
        self._export = []
        for i, loc in enumerate(self.locals):
            mine = system.space.elem_dofs(np.flatnonzero(owner == i), ns)
            self._export.append((mine, self._pos[i][mine]))

    def _split(self, u):
        return [u[loc.dofs].copy() for loc in self.locals]

    def export(self, state) -> np.ndarray:
        out = np.empty(self.system.size)
        for i, (g, l) in enumerate(self._export):
            out[g] = state.x[i][l]
        return out


class OltsDriver(_Decomposed):
    """Overlap LTS with zeroth-order hold of traces."""

    def __init__(self, system, partition, scheme: str, order: str = "D", **stepper_kw):
        if order not in ORDERS:
            raise ParameterError(f"update order must be one of {ORDERS}, got {order!r}")
        super().__init__(system, partition, scheme, **stepper_kw)
        self.order = order
        # refresh map: after sub-domain j advances, trace entries of i read from it
        self._refresh = {}
        for j in range(len(self.locals)):
            for i, loc in enumerate(self.locals):
                if i == j or not loc.trace_dofs.size:
                    continue
                src = self._pos[j][loc.trace_dofs]
                hit = np.flatnonzero(src >= 0)
                if hit.size:
                    self._refresh[(i, j)] = (hit, src[hit])
        self._fcache = {}
        lam = self.grid.lambdas
        sign = -1 if order == "D" else 1
        self._orders = {r: sorted(eligible_set(self.grid, r), key=lambda i: (sign * lam[i], i))
                        for r in range(1, self.grid.lambda_max + 1)}

    def _forcing(self, i, trace):
        """Forcing of sub-domain ``i``; reused while its trace cache is unchanged."""
        cached = self._fcache.get(i)
        if cached is not None and cached[0] is trace:
            return cached[1]
        f = _local_forcing(self.locals[i], lambda _t: trace, frozen=trace)
        self._fcache[i] = (trace, f)
        return f

    def init(self, u0) -> LtsState:
        u0 = np.asarray(u0, dtype=float)
        traces = [u0[loc.trace_dofs].copy() for loc in self.locals]
        return LtsState(self._split(u0), [0] * len(self.locals), traces,
                        [np.zeros(t.size, dtype=int) for t in traces])

    def advance(self, state: LtsState, log: TraceLog | None = None) -> LtsState:
        if not state.synchronized:
            raise ScheduleError("overlap step must start from a synchronised state")
        x = list(state.x)
        counts = list(state.counts)
        traces = list(state.traces)   # copied on write so cached forcings stay valid
        tcounts = [t.copy() for t in state.trace_counts]
        base = counts[0]
        lam = self.grid.lambdas
        for r in range(1, self.grid.lambda_max + 1):
            target = base + r
            for i in self._orders[r]:
                if tcounts[i].size and tcounts[i].max() > target:
                    raise ScheduleError(f"sub-domain {i} would read a trace from the future")
                if log is not None:
                    log.add(state.n, r, i, self.grid.time(target), "extrapolate")
                forcing = self._forcing(i, traces[i])
                x[i] = self.steppers[i].step(x[i], self.grid.time(counts[i]), forcing)
                counts[i] += lam[i]
                if counts[i] != target:
                    raise ScheduleError(f"sub-domain {i} clock {counts[i]} missed target {target}")
                if log is not None:
                    log.add(state.n, r, i, self.grid.time(target), "advance")
                for k in range(len(self.locals)):
                    ref = self._refresh.get((k, i))
                    if ref is None:
                        continue
                    hit, src = ref
                    traces[k] = traces[k].copy()
                    traces[k][hit] = x[i][src]
                    tcounts[k][hit] = counts[i]
                    if log is not None:
                        log.add(state.n, r, k, self.grid.time(target), "refresh")
        return LtsState(x, counts, traces, tcounts, state.n + 1)


class NoltsDriver(_Decomposed):
    """Non-overlap LTS: global prediction, then local correction."""

    def __init__(self, system, partition, scheme: str, dt_star: float | None = None,
                 predictor: str | None = None, **stepper_kw):
        if partition.n_ov:
            raise ParameterError("the non-overlap driver needs a partition without overlap")
        super().__init__(system, partition, scheme, **stepper_kw)
        dt_star = self.grid.dt_max if dt_star is None else float(dt_star)
        if dt_star < self.grid.dt_max * (1 - 1e-14):
            raise ParameterError(f"prediction step {dt_star} is smaller than the largest local step "
                                 f"{self.grid.dt_max}")
        self.dt_star = dt_star
        self.predictor = Stepper(system, predictor or scheme, dt_star, **stepper_kw).prepare(self.grid.t0)

    @staticmethod
    def _forcing(loc, tn, a, slope):
        """Forcing with the trace ``a + (t - tn) slope``; affine in ``t`` when the data are static."""
        if loc.boundary_data is None and not any(m.nnz for _, m in loc.coupling_terms):
            fa = loc.source + loc.boundary + loc.coupling @ a
            fs = loc.coupling @ slope
            return lambda t: fa + (t - tn) * fs
        return _local_forcing(loc, lambda t: a + (t - tn) * slope)

    def init(self, u0) -> LtsState:
        u0 = np.asarray(u0, dtype=float)
        return LtsState(self._split(u0), [0] * len(self.locals), [u0.copy()], [np.zeros(1, dtype=int)])

    def advance(self, state: LtsState, log: TraceLog | None = None) -> LtsState:
        if not state.synchronized:
            raise ScheduleError("prediction must start from a synchronised state")
        base = state.counts[0]
        tn = self.grid.time(base)
        xn = self.export(state)
        xstar = self.predictor.step(xn, tn, self.system.forcing)
        if log is not None:
            log.add(state.n, 0, -1, tn + self.dt_star, "advance")
        lam = self.grid.lambdas
        x, counts = [], []
        for i, loc in enumerate(self.locals):
            a, b = xn[loc.trace_dofs], xstar[loc.trace_dofs]
            slope = (b - a) / self.dt_star
            forcing = self._forcing(loc, tn, a, slope)
            xi, c = state.x[i], base
            for j in range(self.grid.lambda_max // lam[i]):
                if log is not None:
                    log.add(state.n, j + 1, i, self.grid.time(c + lam[i]), "interpolate")
                xi = self.steppers[i].step(xi, self.grid.time(c), forcing)
                c += lam[i]
                if log is not None:
                    log.add(state.n, j + 1, i, self.grid.time(c), "advance")
            x.append(xi)
            counts.append(c)
        return LtsState(x, counts, [xstar], [np.array([base + self.grid.lambda_max])], state.n + 1)


def make_driver(kind: str, system, partition=None, scheme: str = "impl", order: str = "D",
                dt: float | None = None, t0: float = 0.0, t1: float | None = None,
                sync_every: int = 1, dt_star: float | None = None, **stepper_kw):
    if kind == "gts":
        return GtsDriver(system, scheme, dt, t0, t1, sync_every, **stepper_kw)
    if kind == "olts":
        return OltsDriver(system, partition, scheme, order, **stepper_kw)
    if kind == "nolts":
        return NoltsDriver(system, partition, scheme, dt_star, **stepper_kw)
    raise ParameterError(f"unknown scheme {kind!r}; expected gts, olts or nolts")


def gts_advance(system, scheme: str, dt: float, t0: float, t1: float, u0, observer=None):
    """Uniform stepping of ``system`` from ``t0`` to ``t1``."""
    return GtsDriver(system, scheme, dt, t0, t1).run(u0, observer)


def olts_advance(driver: OltsDriver, state: LtsState, log: TraceLog | None = None) -> LtsState:
    return driver.advance(state, log)


def nolts_advance(driver: NoltsDriver, state: LtsState, log: TraceLog | None = None) -> LtsState:
    return driver.advance(state, log)
