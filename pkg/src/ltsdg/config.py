"""Run configuration in a flat ``section.key = value`` text format.

Sections are ``run`` (what to execute), one section per problem
(``ogata``, ``eto``, ``fracture``) holding its parameters, and ``sweep``
whose keys name a problem parameter to vary, e.g.::

    run.problem = ogata
    run.scheme = olts
    run.order = I
    run.n_ov = 1..11
    run.levels = 0
    ogata.hx = 0.04
    sweep.ogata.pe = 0.1, 1, 10, 100

Lists are comma separated; ``a..b`` is an inclusive integer range. Blank
lines and ``#`` comments are ignored.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .integrators import SCHEMES as INTEGRATORS
from .lts import ORDERS
from .models import PROBLEMS

DRIVERS = ("gts", "olts", "nolts")


def parse_int_list(text: str) -> tuple:
    """``"0..4"`` or ``"0, 2, 3"`` -> tuple of ints."""
    text = text.strip()
    if not text:
        return ()
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            a, b = part.split("..", 1)
            try:
                a, b = int(a), int(b)
            except ValueError:
                raise ConfigError(f"bad integer range {part!r}") from None
            if b < a:
                raise ConfigError(f"empty range {part!r}")
            out.extend(range(a, b + 1))
        else:
            try:
                out.append(int(part))
            except ValueError:
                raise ConfigError(f"expected an integer, got {part!r}") from None
    return tuple(out)


def _split(text: str) -> tuple:
    return tuple(p.strip() for p in text.split(",") if p.strip())


def _coerce(kind, text: str, where: str):
    if kind in (float, "float"):
        try:
            return float(eval_power(text))
        except ValueError:
            raise ConfigError(f"{where}: expected a number, got {text!r}") from None
    if kind in (int, "int"):
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"{where}: expected an integer, got {text!r}") from None
    if kind in (bool, "bool"):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{where}: expected true/false, got {text!r}")
    return text


def eval_power(text: str) -> float:
    """Numbers, also written as ``2^-9`` or ``2**-9``."""
    t = text.strip().replace("**", "^")
    if "^" in t:
        base, exp = t.split("^", 1)
        return float(base) ** float(exp)
    return float(t)


def _field_types(cls) -> dict:
    return {f.name: f.type for f in dataclasses.fields(cls)}


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


@dataclass
class RunConfig:
    problem: str = "ogata"
    scheme: tuple = ("gts",)
    order: tuple = ("D",)
    integrator: tuple = ("impl",)
    levels: tuple = (0, 1, 2, 3)
    n_ov: tuple = ()
    dt_star: float = 0.0
    predictor: str = ""
    reference_level: int = 4
    reference_integrator: str = ""
    newton_tol: float = 1e-10
    newton_maxiter: int = 25
    seed: int = 0
    out: str = "out"
    snapshots: bool = True
    figures: bool = True
    trace_log: bool = False
    params: dict = field(default_factory=dict)
    sweeps: dict = field(default_factory=dict)

    _LISTS = ("scheme", "order", "integrator")

    def validate(self) -> "RunConfig":
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; expected one of {tuple(PROBLEMS)}")
        for s in self.scheme:
            if s not in DRIVERS:
                raise ConfigError(f"unknown scheme {s!r}; expected one of {DRIVERS}")
        for o in self.order:
            if o not in ORDERS:
                raise ConfigError(f"unknown order {o!r}; expected D or I")
        for q in self.integrator:
            if q not in INTEGRATORS:
                raise ConfigError(f"unknown integrator {q!r}; expected one of {INTEGRATORS}")
        if self.predictor and self.predictor not in INTEGRATORS:
            raise ConfigError(f"unknown predictor integrator {self.predictor!r}")
        if self.reference_integrator and self.reference_integrator not in INTEGRATORS:
            raise ConfigError(f"unknown reference integrator {self.reference_integrator!r}")
        if not self.scheme or not self.integrator or not self.order:
            raise ConfigError("scheme, order and integrator lists must not be empty")
        if not self.levels:
            raise ConfigError("no refinement levels given")
        if any(r < 0 for r in self.levels):
            raise ConfigError("refinement levels must be >= 0")
        if self.n_ov and any(n < 1 for n in self.n_ov):
            raise ConfigError("overlap scheme needs n_ov >= 1")
        if self.n_ov and "olts" not in self.scheme:
            raise ConfigError("n_ov is only meaningful for the overlap scheme; remove it for gts/nolts runs")
        if self.dt_star < 0:
            raise ConfigError("dt_star must be positive")
        spec_cls = PROBLEMS[self.problem]
        names = _field_types(spec_cls)
        for key in self.params.get(self.problem, {}):
            if key not in names:
                raise ConfigError(f"unknown parameter {self.problem}.{key}")
        for key, values in self.sweeps.items():
            sec, _, name = key.partition(".")
            if sec != self.problem or name not in names:
                raise ConfigError(f"sweep over unknown parameter {key!r}")
            if not values:
                raise ConfigError(f"sweep {key!r} has no values")
        try:
            spec_cls(**self.params.get(self.problem, {}))
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        return self

    @property
    def overlaps(self) -> tuple:
        return self.n_ov or (1,)

    def spec(self, overrides: dict | None = None):
        kw = dict(self.params.get(self.problem, {}))
        kw.update(overrides or {})
        return PROBLEMS[self.problem](**kw)

    def variants(self) -> list:
        """Cartesian product of the sweeps, as lists of ``(name, value)`` pairs."""
        out = [[]]
        for key, values in self.sweeps.items():
            name = key.partition(".")[2]
            out = [v + [(name, x)] for v in out for x in values]
        return out

    def problem_hash(self, overrides: dict | None = None, *extra) -> str:
        spec = self.spec(overrides)
        text = self.problem + "|" + repr(dataclasses.astuple(spec)) + "|" + "|".join(map(str, extra))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def loads(text: str) -> RunConfig:
    run_types = _field_types(RunConfig)
    cfg = RunConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        section, _, name = key.partition(".")
        where = f"line {lineno} ({key})"
        if not name:
            raise ConfigError(f"{where}: key must look like section.key")
        if section == "run":
            if name not in run_types or name in ("params", "sweeps"):
                raise ConfigError(f"{where}: unknown run option {name!r}")
            if name in RunConfig._LISTS:
                setattr(cfg, name, _split(value))
            elif name in ("levels", "n_ov"):
                setattr(cfg, name, parse_int_list(value))
            else:
                setattr(cfg, name, _coerce(run_types[name], value, where))
        elif section in PROBLEMS:
            types = _field_types(PROBLEMS[section])
            if name not in types:
                raise ConfigError(f"{where}: unknown parameter {name!r} for {section}")
            cfg.params.setdefault(section, {})[name] = _coerce(types[name], value, where)
        elif section == "sweep":
            sec, _, pname = name.partition(".")
            if sec not in PROBLEMS or pname not in _field_types(PROBLEMS[sec]):
                raise ConfigError(f"{where}: cannot sweep over {name!r}")
            kind = _field_types(PROBLEMS[sec])[pname]
            cfg.sweeps[name] = tuple(_coerce(kind, v, where) for v in _split(value))
        else:
            raise ConfigError(f"{where}: unknown section {section!r}")
    return cfg.validate()


def load(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {path} not found")
    return loads(p.read_text())


def dumps(cfg: RunConfig) -> str:
    lines = []
    defaults = RunConfig()
    for f in dataclasses.fields(RunConfig):
        if f.name in ("params", "sweeps"):
            continue
        v = getattr(cfg, f.name)
        if f.name == "n_ov" and not v:
            continue
        if f.name in ("levels", "n_ov"):
            lines.append(f"run.{f.name} = {', '.join(str(x) for x in v)}")
        elif v != getattr(defaults, f.name) or f.name in ("problem", "scheme", "integrator"):
            lines.append(f"run.{f.name} = {_fmt(v)}")
    for section in sorted(cfg.params):
        for k, v in cfg.params[section].items():
            lines.append(f"{section}.{k} = {_fmt(v)}")
    for k, v in cfg.sweeps.items():
        lines.append(f"sweep.{k} = {_fmt(tuple(v))}")
    return "\n".join(lines) + "\n"
