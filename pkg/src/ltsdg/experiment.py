"""Experiment matrix: (variant, scheme, integrator, level) cells, errors and timings.

Every level ``r`` scales all local steps by ``2**-r``; the global stepping
runs use ``ht = min_i dt_i`` at that level and synchronise at the same
times as the local ones. Errors are measured against the analytic solution
when one exists, otherwise against a global-stepping run at the reference
level (cached on disk, keyed by a hash of the problem parameters).
Wall-clock covers the time loop only.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .lts import GtsDriver, NoltsDriver, OltsDriver, TraceLog
from .models import relative_error_current, relative_error_overlap
from .partition import overlap

log = logging.getLogger(__name__)

REPORT_HEADER = ("level", "scheme", "integrator", "ht", "error", "cpu_seconds")


@dataclass
class Cell:
    variant: tuple
    scheme: str
    order: str
    n_ov: int
    integrator: str
    level: int

    @property
    def label(self) -> str:
        base = self.scheme if self.scheme != "olts" else f"olts-{self.order}"
        tags = []
        if self.scheme == "olts" and self.n_ov != 1:
            tags.append(f"n_ov={self.n_ov}")
        tags += [f"{k}={v:g}" if isinstance(v, float) else f"{k}={v}" for k, v in self.variant]
        return base + (f"[{';'.join(tags)}]" if tags else "")


@dataclass
class Result:
    cell: Cell
    ht: float
    error: float
    cpu_seconds: float
    setup_seconds: float
    u: np.ndarray = field(repr=False, default=None)
    times: np.ndarray = field(repr=False, default=None)
    trace: np.ndarray = field(repr=False, default=None)


@dataclass
class RunReport:
    results: list

    @property
    def rows(self) -> list:
        return [(r.cell.level, r.cell.label, r.cell.integrator, r.ht, r.error, r.cpu_seconds)
                for r in self.results]

    def write_csv(self, path) -> None:
        lines = [",".join(REPORT_HEADER)]
        for level, label, integ, ht, err, cpu in self.rows:
            lines.append(f"{level},{label},{integ},{float(ht)!r},{float(err)!r},{cpu:.6f}")
        Path(path).write_text("\n".join(lines) + "\n")

    def write_setup_csv(self, path) -> None:
        lines = ["level,scheme,integrator,setup_seconds"]
        for r in self.results:
            lines.append(f"{r.cell.level},{r.cell.label},{r.cell.integrator},{r.setup_seconds:.6f}")
        Path(path).write_text("\n".join(lines) + "\n")


def build_cells(cfg: RunConfig, levels=None) -> list:
    levels = tuple(levels) if levels is not None else cfg.levels
    cells = []
    for variant in cfg.variants():
        for scheme in cfg.scheme:
            orders = cfg.order if scheme == "olts" else ("D",)
            overlaps = cfg.overlaps if scheme == "olts" else (0,)
            for order in orders:
                for n_ov in overlaps:
                    for integ in cfg.integrator:
                        for level in levels:
                            cells.append(Cell(tuple(variant), scheme, order, n_ov, integ, level))
    return cells


def _stepper_kw(cfg: RunConfig) -> dict:
    return {"newton_tol": cfg.newton_tol, "newton_maxiter": cfg.newton_maxiter}


def make_driver(cfg: RunConfig, problem, scheme, integrator, level, order="D", n_ov=1):
    part = dataclasses.replace(problem.partition, grid=problem.partition.grid.refined(level))
    kw = _stepper_kw(cfg)
    if scheme == "gts":
        g = part.grid
        return GtsDriver(problem.system, integrator, g.dt, g.t0, g.t1, sync_every=g.lambda_max, **kw)
    if scheme == "olts":
        return OltsDriver(problem.system, overlap(part, n_ov, problem.adjacency), integrator, order, **kw)
    dt_star = cfg.dt_star * 2.0**-level if cfg.dt_star else None
    return NoltsDriver(problem.system, part, integrator, dt_star, predictor=cfg.predictor or None, **kw)


def simulate(cfg, problem, scheme, integrator, level, order="D", n_ov=1, trace_log=None):
    """Run one cell; returns ``(u_final, times, trace, cpu, setup)``."""
    t_setup = time.perf_counter()
    driver = make_driver(cfg, problem, scheme, integrator, level, order, n_ov)
    setup = time.perf_counter() - t_setup
    times, trace = [], []
    observer = None
    if problem.observe is not None:
        def observer(t, u):
            times.append(t)
            trace.append(problem.observe(t, u))
    t_loop = time.perf_counter()
    u = driver.run(problem.u0, observer, trace_log)
    cpu = time.perf_counter() - t_loop
    return u, np.array(times), np.array(trace), cpu, setup


class References:
    """Reference runs, cached in ``<out>/.cache``."""

    def __init__(self, cfg: RunConfig, root):
        self.cfg = cfg
        self.root = Path(root) / ".cache"
        self._mem = {}

    def integrator_for(self, integrator: str) -> str:
        if self.cfg.reference_integrator:
            return self.cfg.reference_integrator
        return "impl" if self.cfg.problem == "eto" else integrator

    def get(self, problem, variant, integrator):
        integ = self.integrator_for(integrator)
        level = self.cfg.reference_level
        key = self.cfg.problem_hash(dict(variant), integ, level, self.cfg.newton_tol)
        if key in self._mem:
            return self._mem[key]
        path = self.root / f"{key}.npz"
        if path.is_file():
            d = np.load(path)
            ref = (d["u"], d["times"], d["trace"])
        else:
            log.info("computing reference %s level %d (%s)", integ, level, key)
            u, times, trace, _, _ = simulate(self.cfg, problem, "gts", integ, level)
            self.root.mkdir(parents=True, exist_ok=True)
            np.savez(path, u=u, times=times, trace=trace)
            ref = (u, times, trace)
        self._mem[key] = ref
        return ref


def measure_error(problem, u, times, trace, ref=None) -> float:
    if problem.exact is not None:
        return relative_error_overlap(problem.space, u, problem.exact)
    if problem.observe is not None:
        return relative_error_current(ref[1], ref[2], times, trace)
    return problem.space.l2_norm(u - ref[0])


def _run_cell(cfg: RunConfig, cell: Cell, root, want_log: bool, problem=None, refs=None):
    problem = problem or cfg.spec(dict(cell.variant)).build()
    refs = refs or References(cfg, root)
    ref = refs.get(problem, cell.variant, cell.integrator) if problem.exact is None else None
    tlog = TraceLog() if want_log else None
    u, times, trace, cpu, setup = simulate(cfg, problem, cell.scheme, cell.integrator, cell.level,
                                           cell.order, cell.n_ov, tlog)
    err = measure_error(problem, u, times, trace, ref)
    ht = problem.partition.grid.refined(cell.level).dt
    log.info("%s %s r=%d error=%.4e cpu=%.3fs", cell.label, cell.integrator, cell.level, err, cpu)
    return Result(cell, ht, err, cpu, setup, u, times, trace), tlog


def run_experiment(cfg: RunConfig, out=None, levels=None, jobs: int = 1, on_result=None) -> RunReport:
    """Execute every cell; references are computed first so workers share the cache."""
    root = Path(out or cfg.out)
    root.mkdir(parents=True, exist_ok=True)
    cells = build_cells(cfg, levels)
    refs = References(cfg, root)
    built = {}
    for cell in cells:
        if cell.variant not in built:
            built[cell.variant] = cfg.spec(dict(cell.variant)).build()
        problem = built[cell.variant]
        if problem.exact is None:
            refs.get(problem, cell.variant, cell.integrator)

    results = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = [pool.submit(_run_cell, cfg, c, root, cfg.trace_log) for c in cells]
            done = [f.result() for f in futs]
    else:
        done = (_run_cell(cfg, c, root, cfg.trace_log, built[c.variant], refs) for c in cells)
    for res, tlog in done:
        results.append(res)
        if on_result:
            on_result(res, built[res.cell.variant], tlog)
    return RunReport(results)
