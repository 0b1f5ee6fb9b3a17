"""Local time-step assignment and sub-domain bookkeeping.

Elements get a dyadic step from the CFL rule, elements with equal steps are
grouped into one sub-domain (which may be disconnected), and sub-domains can
then be grown by layers of neighbouring elements to build the overlapped
decomposition used by the overlap LTS driver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp


class ScheduleError(ValueError):
    """Time steps that cannot be synchronised."""


def element_dt(speed: float, radius: float, c_max: float, dt_cap: float = 0.25) -> float:
    """Dyadic CFL step ``2**-N`` with ``N = ceil(log2(speed / (radius * c_max)))``.

    Elements at rest get ``dt_cap``.
    """
    if speed > 0:
        n = math.ceil(math.log2(speed / (radius * c_max)))
        return math.ldexp(1.0, -n)
    return float(dt_cap)


def element_dts(speeds, radii, c_max: float, dt_cap: float = 0.25) -> np.ndarray:
    return np.array([element_dt(s, r, c_max, dt_cap) for s, r in zip(speeds, radii)])


def is_power_of_two(x: float) -> bool:
    m, _ = math.frexp(x)
    return x > 0 and m == 0.5


@dataclass(frozen=True)
class TimeGrid:
    """Base step ``dt`` and integer multipliers, ``dt_i = lambdas[i] * dt``."""

    dt: float
    lambdas: tuple
    t0: float = 0.0
    t1: float | None = None

    def __post_init__(self):
        lam = tuple(int(x) for x in self.lambdas)
        if any(x != y for x, y in zip(lam, self.lambdas)) or any(x < 1 for x in lam):
            raise ScheduleError(f"multipliers must be positive integers, got {self.lambdas}")
        if not self.dt > 0:
            raise ScheduleError("base step must be positive")
        top = max(lam)
        if any(top % x for x in lam):
            raise ScheduleError(f"largest step is not a multiple of every local step: {lam}")
        object.__setattr__(self, "lambdas", lam)
        if self.t1 is not None:
            span = Fraction(self.t1) - Fraction(self.t0)
            q = span / (Fraction(self.dt) * top)
            if span <= 0 or q.denominator != 1:
                raise ScheduleError(
                    f"horizon {self.t1 - self.t0} is not a multiple of the largest step {self.dt_max}")

    @property
    def dts(self) -> tuple:
        return tuple(x * self.dt for x in self.lambdas)

    @property
    def lambda_max(self) -> int:
        return max(self.lambdas)

    @property
    def dt_max(self) -> float:
        return self.lambda_max * self.dt

    @property
    def n_sync(self) -> int:
        """Number of synchronised steps over the horizon."""
        return int(round((self.t1 - self.t0) / self.dt_max))

    def steps(self, i: int) -> int:
        return int(round((self.t1 - self.t0) / self.dts[i]))

    def time(self, count: int) -> float:
        """Time of an integer count of base steps."""
        return self.t0 + count * self.dt

    def refined(self, level: int) -> "TimeGrid":
        return TimeGrid(math.ldexp(self.dt, -level), self.lambdas, self.t0, self.t1)


def eligible_set(grid: TimeGrid, r: int) -> list:
    """Sub-domains whose clock lands on ``t^n + r*dt``."""
    if not 1 <= r <= grid.lambda_max:
        raise ValueError(f"r must lie in 1..{grid.lambda_max}, got {r}")
    return [i for i, lam in enumerate(grid.lambdas) if r % lam == 0]


def _adjacency(mesh, kind: str) -> sp.csr_matrix:
    if kind == "face":
        pairs = mesh.face_pairs()
    elif kind == "vertex":
        pairs = mesh.vertex_pairs()
    else:
        raise ValueError(f"adjacency must be 'face' or 'vertex', got {kind!r}")
    n = mesh.n_elements
    a = sp.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    return (a + a.T).tocsr()


@dataclass
class Partition:
    """Sub-domain sets, internal boundaries and the time grid.

    ``owner[e]`` is the sub-domain an element originally belonged to (after
    any merges); ``elements[i]`` is the possibly overlapped element set of
    sub-domain ``i``. Boundaries are stored as face pairs
    ``(inside element, outside element)``.
    """

    mesh: object
    owner: np.ndarray
    elements: list
    grid: TimeGrid
    n_ov: int = 0
    adjacency: str = "face"
    swallowed: list = field(default_factory=list)
    gamma: list = field(init=False)
    pieces: dict = field(init=False)

    def __post_init__(self):
        self._compute_boundaries()

    @property
    def n_subdomains(self) -> int:
        return len(self.elements)

    @property
    def dts(self) -> tuple:
        return self.grid.dts

    def member_mask(self, i: int) -> np.ndarray:
        mask = np.zeros(self.mesh.n_elements, dtype=bool)
        mask[self.elements[i]] = True
        return mask

    def _compute_boundaries(self):
        pairs = self.mesh.face_pairs()
        both = np.vstack([pairs, pairs[:, ::-1]]) if len(pairs) else np.empty((0, 2), int)
        masks = [self.member_mask(i) for i in range(self.n_subdomains)]
        self.gamma = []
        self.pieces = {}
        for i, m in enumerate(masks):
            g = both[m[both[:, 0]] & ~m[both[:, 1]]]
            g = g[np.lexsort((g[:, 1], g[:, 0]))]
            self.gamma.append(g)
            for j, mj in enumerate(masks):
                if j != i:
                    piece = g[mj[g[:, 1]]]
                    if len(piece):
                        self.pieces[(i, j)] = piece

    def dump_csv(self, path) -> None:
        dts = self.dts
        with open(path, "w") as fh:
            fh.write("element_id,subdomain,dt\n")
            for e, s in enumerate(self.owner):
                fh.write(f"{e},{s},{float(dts[s])!r}\n")


def form_subdomains(mesh, dts, t0: float = 0.0, t1: float | None = None) -> Partition:
    """One sub-domain per distinct element step, finest first."""
    dts = np.asarray(dts, dtype=float)
    if mesh.n_elements == 0 or dts.size == 0:
        raise ValueError("cannot partition an empty mesh")
    if dts.shape != (mesh.n_elements,):
        raise ValueError("need one time step per element")
    bad = [x for x in np.unique(dts) if not is_power_of_two(x)]
    if bad:
        raise ScheduleError(f"element steps must be powers of two, got {bad[:3]}")
    values = np.unique(dts)
    owner = np.searchsorted(values, dts)
    base = values[0]
    lambdas = tuple(int(round(v / base)) for v in values)
    grid = TimeGrid(float(base), lambdas, t0, t1)
    elements = [np.flatnonzero(owner == i) for i in range(len(values))]
    return Partition(mesh, owner, elements, grid)


def _grow(adj: sp.csr_matrix, members: np.ndarray, layers: int) -> np.ndarray:
    mask = np.zeros(adj.shape[0], dtype=bool)
    mask[members] = True
    for _ in range(layers):
        mask = mask | (adj @ mask.astype(float) > 0)
    return np.flatnonzero(mask)


def overlap(p: Partition, n_ov: int, adjacency: str = "face") -> Partition:
    """Grow every sub-domain by ``n_ov`` layers of neighbouring elements.

    A sub-domain whose grown set contains an entire other original
    sub-domain absorbs it: the absorbed elements take the absorbing step.
    This repeats until no sub-domain swallows another.
    """
    if n_ov < 1:
        raise ValueError("n_ov must be >= 1")
    adj = _adjacency(p.mesh, adjacency)
    owner = p.owner.copy()
    dts = list(p.dts)
    labels = list(range(len(dts)))   # original indices, for the swallow record
    swallowed = list(p.swallowed)

    while True:
        groups = [np.flatnonzero(owner == i) for i in range(len(dts))]
        grown = [_grow(adj, g, n_ov) for g in groups]
        hit = None
        for i, gi in enumerate(grown):
            inside = np.zeros(len(owner), dtype=bool)
            inside[gi] = True
            for j, gj in enumerate(groups):
                if j != i and len(gj) and inside[gj].all():
                    hit = (i, j)
                    break
            if hit:
                break
        if hit is None:
            break
        i, j = hit
        swallowed.append((labels[j], labels[i]))
        owner[owner == j] = i
        owner[owner > j] -= 1
        del dts[j], labels[j]

    # keep the finest sub-domain first
    order = np.argsort(dts, kind="stable")
    remap = np.empty_like(order)
    remap[order] = np.arange(len(order))
    owner = remap[owner]
    dts = [dts[k] for k in order]
    groups = [np.flatnonzero(owner == i) for i in range(len(dts))]
    elements = [_grow(adj, g, n_ov) for g in groups]

    base = min(dts)
    grid = TimeGrid(base, tuple(int(round(d / base)) for d in dts), p.grid.t0, p.grid.t1)
    return Partition(p.mesh, owner, elements, grid, n_ov=n_ov, adjacency=adjacency,
                     swallowed=swallowed)
