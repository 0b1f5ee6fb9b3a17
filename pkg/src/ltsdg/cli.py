"""Command line entry point ``lts-dg``.

    lts-dg run <config-file> [--out DIR] [--levels a..b] [--jobs N]
    lts-dg mesh <spec> --out FILE
    lts-dg check

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericalError, ParameterError
from .mesh import MeshError
from .partition import ScheduleError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _write_outputs(cfg, report, out: Path, problems: dict, logs: list) -> None:
    from . import output

    report.write_csv(out / "report.csv")
    report.write_setup_csv(out / "setup_times.csv")
    if cfg.trace_log:
        for stem, tlog in logs:
            tlog.write(out / f"{stem}_trace.csv")
    if not cfg.figures:
        return
    output.plot_convergence(report, out / "error_vs_ht.png", out / "error_vs_cpu.png")
    first = report.results[0]
    problem = problems[first.cell.variant]
    if cfg.problem == "eto":
        spec = cfg.spec(dict(first.cell.variant))
        curves = {f"{r.cell.label} {r.cell.integrator} r{r.cell.level}": (r.times, r.trace)
                  for r in report.results}
        output.plot_voltammogram(out / "voltammogram.png", curves, spec.p1, spec.p2)
    elif problem.space.dim == 2:
        last = report.results[-1]
        output.plot_field(out / "final_field.png", problem.space.mesh,
                          problem.space.element_means(last.u),
                          f"{last.cell.label} {last.cell.integrator} r{last.cell.level}")
        output.plot_field(out / "partition.png", problem.space.mesh,
                          problem.partition.owner.astype(float), "sub-domains")
    if cfg.problem == "ogata" and (len(cfg.overlaps) > 1):
        rows = [(dict(r.cell.variant).get("pe", cfg.spec().pe), r.cell.n_ov, r.error)
                for r in report.results if r.cell.scheme == "olts" and r.error > 0]
        output.plot_overlap_sweep(out / "overlap_sweep.png", rows)


def cmd_run(args) -> int:
    from . import config, output
    from .experiment import run_experiment

    cfg = config.load(args.config)
    levels = config.parse_int_list(args.levels) if args.levels else None
    if levels is not None and not levels:
        raise ConfigError("empty --levels range")
    out = Path(args.out or cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    problems, logs = {}, []

    def on_result(res, problem, tlog):
        problems[res.cell.variant] = problem
        stem = output.snapshot_stem(cfg.problem, res.cell.label, res.cell.integrator, res.cell.level)
        if cfg.snapshots:
            output.write_snapshot(out, stem, problem, res.u)
        if problem.observe is not None:
            spec = cfg.spec(dict(res.cell.variant))
            output.write_current_csv(out / f"{stem}_current.csv", res.times, res.trace, spec.p1, spec.p2)
        if tlog is not None:
            logs.append((stem, tlog))
        print(f"r={res.cell.level} {res.cell.label} {res.cell.integrator}: ht={res.ht:.6g} "
              f"error={res.error:.6e} cpu={res.cpu_seconds:.3f}s", flush=True)

    report = run_experiment(cfg, out, levels, args.jobs, on_result)
    _write_outputs(cfg, report, out, problems, logs)
    (out / "config.txt").write_text(config.dumps(cfg))
    print(f"wrote {out / 'report.csv'}")
    return EXIT_OK


def _kv(text: str) -> dict:
    out = {}
    for part in filter(None, text.split(",")):
        if "=" not in part:
            raise ConfigError(f"expected key=value in mesh spec, got {part!r}")
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def cmd_mesh(args) -> int:
    """Mesh specs: ``square:N``, ``ogata[:hx=..,ny=..]``, ``fracture[:key=val,...]``,
    ``graded:delta,zmax,q,r`` (1D, written as ``node,z`` CSV)."""
    from .config import _coerce, _field_types
    from .mesh import build_graded_mesh_1d, rectangle_mesh, unit_square_mesh, write_mesh_2d
    from .models import FractureSpec, OgataBanksSpec

    kind, _, rest = args.spec.partition(":")
    if kind == "square":
        try:
            n = int(rest)
        except ValueError:
            raise ConfigError(f"square mesh needs an integer size, got {rest!r}") from None
        mesh = unit_square_mesh(n)
    elif kind in ("fracture", "ogata"):
        cls = FractureSpec if kind == "fracture" else OgataBanksSpec
        types = _field_types(cls)
        kw = {}
        for k, v in _kv(rest).items():
            if k not in types:
                raise ConfigError(f"unknown {kind} mesh parameter {k!r}")
            kw[k] = _coerce(types[k], v, k)
        spec = cls(**kw)
        if kind == "fracture":
            mesh = spec.mesh()
        else:
            nx = int(round(spec.x2 / spec.hx))
            mesh = rectangle_mesh(np.linspace(0, spec.x2, nx + 1), np.linspace(0, 1, spec.ny + 1),
                                  {"left": "inflow", "right": "outflow"})
    elif kind == "graded":
        try:
            delta, zmax, q, r = rest.split(",")
            m = build_graded_mesh_1d(float(delta), float(zmax), float(q), int(r))
        except ValueError as exc:
            raise ConfigError(f"graded mesh spec must be delta,zmax,q,r: {exc}") from None
        lines = ["node,z"] + [f"{i},{float(z)!r}" for i, z in enumerate(m.nodes)]
        Path(args.out).write_text("\n".join(lines) + "\n")
        print(f"wrote {args.out}: {m.n_elements} elements")
        return EXIT_OK
    else:
        raise ConfigError(f"unknown mesh spec {args.spec!r}")
    write_mesh_2d(mesh, args.out)
    print(f"wrote {args.out}: {mesh.n_vertices} vertices, {mesh.n_elements} triangles")
    return EXIT_OK


def cmd_check(args) -> int:
    from .checks import run_checks
    return EXIT_OK if run_checks() else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lts-dg", description="Local time stepping DG solver")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment from a config file")
    r.add_argument("config")
    r.add_argument("--out")
    r.add_argument("--levels", help="inclusive range a..b or a comma list")
    r.add_argument("--jobs", type=int, default=1)
    r.set_defaults(func=cmd_run)
    m = sub.add_parser("mesh", help="write a generated mesh")
    m.add_argument("spec")
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_mesh)
    c = sub.add_parser("check", help="run the invariant suite")
    c.set_defaults(func=cmd_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, ParameterError, ScheduleError, MeshError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
