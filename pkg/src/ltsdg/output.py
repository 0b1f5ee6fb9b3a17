"""Field snapshots, current traces and report figures."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .dg.eto import potential


def safe_name(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.=-]+", "_", text).strip("_")


def snapshot_stem(problem: str, scheme: str, integrator: str, level: int) -> str:
    return f"{problem}_{safe_name(scheme)}_{integrator}_r{level}"


def write_vtk(path, mesh, cell_values: dict, title: str = "ltsdg field") -> None:
    """Legacy ASCII unstructured grid with per-triangle scalars."""
    v = mesh.vertices
    t = mesh.triangles
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {len(v)} double"]
    out += [f"{float(x)!r} {float(y)!r} 0.0" for x, y in v]
    out.append(f"CELLS {len(t)} {4 * len(t)}")
    out += [f"3 {a} {b} {c}" for a, b, c in t]
    out.append(f"CELL_TYPES {len(t)}")
    out += ["5"] * len(t)
    out.append(f"CELL_DATA {len(t)}")
    for name, vals in cell_values.items():
        out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        out += [repr(float(x)) for x in vals]
    Path(path).write_text("\n".join(out) + "\n")


def read_vtk_cells(path) -> dict:
    """Minimal reader for files from ``write_vtk`` (used for round-trip checks)."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# vtk DataFile Version"):
        raise ValueError(f"{path} is not a legacy VTK file")
    out = {"points": None, "cells": None, "data": {}}
    i = 0
    while i < len(lines):
        parts = lines[i].split()
        if parts and parts[0] == "POINTS":
            n = int(parts[1])
            out["points"] = np.array([[float(x) for x in ln.split()] for ln in lines[i + 1:i + 1 + n]])
            i += n
        elif parts and parts[0] == "CELLS":
            n = int(parts[1])
            out["cells"] = np.array([[int(x) for x in ln.split()[1:]] for ln in lines[i + 1:i + 1 + n]])
            i += n
        elif parts and parts[0] == "CELL_DATA":
            n = int(parts[1])
        elif parts and parts[0] == "SCALARS":
            name = parts[1]
            out["data"][name] = np.array([float(x) for x in lines[i + 2:i + 2 + n]])
            i += n + 1
        i += 1
    return out


def write_profile_csv(path, space, u) -> None:
    """``z,value`` samples (both ends and the midpoint of every element) of a 1D field."""
    nodes = space.mesh.nodes
    z = np.column_stack([nodes[:-1], 0.5 * (nodes[:-1] + nodes[1:]), nodes[1:]])
    e = np.repeat(np.arange(space.n_elements), 3)
    vals, _ = space.basis_at(e, z.reshape(-1, 1, 1))
    coeff = np.reshape(u, (space.n_elements, space.nb))[e]
    f = np.einsum("fb,fb->f", vals[:, 0, :], coeff)
    lines = ["z,value"] + [f"{float(a)!r},{float(b)!r}" for a, b in zip(z.ravel(), f)]
    Path(path).write_text("\n".join(lines) + "\n")


def write_current_csv(path, times, g, p1: float, p2: float) -> None:
    lines = ["t,P,G"] + [f"{float(t)!r},{float(potential(t, p1, p2))!r},{float(x)!r}" for t, x in zip(times, g)]
    Path(path).write_text("\n".join(lines) + "\n")


def write_snapshot(out_dir, stem, problem, u) -> list:
    """Write the final field; returns the paths written."""
    out_dir = Path(out_dir)
    space = problem.space
    paths = []
    if space.dim == 1:
        n = space.ndof
        for s in range(problem.system.n_species):
            suffix = "" if s == 0 else f"_species{s}"
            p = out_dir / f"{stem}{suffix}.csv"
            write_profile_csv(p, space, u[s * n:(s + 1) * n])
            paths.append(p)
    else:
        p = out_dir / f"{stem}.vtk"
        data = {"concentration": space.element_means(u),
                "subdomain": problem.partition.owner.astype(float)}
        write_vtk(p, space.mesh, data)
        paths.append(p)
    return paths


# -- figures ----------------------------------------------------------------

def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def plot_convergence(report, path_ht, path_cpu) -> None:
    plt = _plt()
    groups = {}
    for level, label, integ, ht, err, cpu in report.rows:
        groups.setdefault(f"{label} {integ}", []).append((ht, err, cpu))
    for path, xi, xlabel in ((path_ht, 0, "ht"), (path_cpu, 2, "cpu seconds")):
        fig, ax = plt.subplots(figsize=(6, 4.5))
        for name, pts in groups.items():
            pts = sorted(pts, key=lambda p: p[xi])
            x = [p[xi] for p in pts]
            y = [p[1] for p in pts]
            if all(v > 0 for v in y) and all(v > 0 for v in x):
                ax.loglog(x, y, "o-", label=name)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("error")
        ax.grid(True, which="both", alpha=0.3)
        if groups:
            ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_voltammogram(path, curves: dict, p1: float, p2: float) -> None:
    """``curves`` maps label -> (times, G)."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for label, (t, g) in curves.items():
        ax.plot([potential(x, p1, p2) for x in t], g, label=label, lw=1)
    ax.set_xlabel("P")
    ax.set_ylabel("G")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_field(path, mesh, values, title: str = "") -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 5))
    tpc = ax.tripcolor(mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.triangles, facecolors=values,
                       edgecolors="k", linewidth=0.1)
    fig.colorbar(tpc, ax=ax)
    ax.set_aspect("equal")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_overlap_sweep(path, rows) -> None:
    """``rows`` are (pe, n_ov, error); one curve of log E against n per Peclet number."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for pe in sorted({r[0] for r in rows}):
        pts = sorted((n, e) for p, n, e in rows if p == pe)
        ax.plot([n for n, _ in pts], np.log([e for _, e in pts]), "o-", label=f"Pe={pe:g}")
    ax.set_xlabel("overlap layers n")
    ax.set_ylabel("log E")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
