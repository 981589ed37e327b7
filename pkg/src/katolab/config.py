"""Experiment configuration: a single JSON document, validated field by field."""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .lattice import MAX_LEVELS, make_grid
from .operator import FIELD_FAMILIES, MAX_DENSE_SITES, make_field
from .weights import WEIGHT_FAMILIES, make_weight

SUITES = ("kato", "gaussfit", "squarefunc", "carleson", "tb")


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class FamilySpec:
    family: str
    params: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        if not self.params:
            return self.family
        inner = ",".join(f"{k}={self.params[k]}" for k in sorted(self.params))
        return f"{self.family}({inner})"


@dataclass(frozen=True)
class Case:
    weight: FamilySpec
    field: FamilySpec

    @property
    def label(self) -> str:
        return f"{self.field.label}/{self.weight.label}"


@dataclass
class ExperimentConfig:
    dim: int = 1
    m_list: list = field(default_factory=lambda: [7, 8])
    S: float = 1.0
    weights: list = field(default_factory=lambda: [FamilySpec("constant")])
    fields: list = field(default_factory=lambda: [FamilySpec("identity")])
    eps: list = field(default_factory=lambda: [0.025, 0.05, 0.1])
    eps_default: float = 0.05
    dlog_max: float = 0.25
    quad_M: int = 200
    quad_lo: float = 1e-4
    quad_hi: float = 10.0
    ensemble_count: int = 64
    seed: int = 0
    band: int = 8
    suites: list = field(default_factory=lambda: list(SUITES))
    out: str | None = None

    @property
    def cases(self) -> list[Case]:
        return [Case(w, f) for f, w in itertools.product(self.fields, self.weights)]

    def canonical(self) -> dict:
        """Everything that determines results (the output directory is excluded)."""
        d = asdict(self)
        d.pop("out")
        return d

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _expect(cond: bool, path: str, msg: str) -> None:
    if not cond:
        raise ConfigError(path, msg)


def _number(v, path, lo=None, hi=None, integer=False):
    ok = isinstance(v, int) if integer else isinstance(v, (int, float))
    _expect(ok and not isinstance(v, bool), path, f"expected {'an integer' if integer else 'a number'}, got {v!r}")
    if lo is not None:
        _expect(v > lo, path, f"must be > {lo}")
    if hi is not None:
        _expect(v <= hi, path, f"must be <= {hi}")
    return v


def _families(raw, path: str, known) -> list[FamilySpec]:
    items = raw if isinstance(raw, list) else [raw]
    _expect(len(items) > 0, path, "needs at least one family")
    out = []
    for i, it in enumerate(items):
        p = f"{path}[{i}]"
        if isinstance(it, str):
            it = {"family": it}
        _expect(isinstance(it, dict), p, "expected a family name or {family, params}")
        extra = set(it) - {"family", "params"}
        _expect(not extra, p, f"unknown keys {sorted(extra)}")
        fam = it.get("family")
        _expect(fam in known, f"{p}.family", f"unknown family {fam!r}; known: {sorted(known)}")
        params = it.get("params", {})
        _expect(isinstance(params, dict), f"{p}.params", "expected an object")
        for k, v in params.items():
            _number(v, f"{p}.params.{k}")
        out.append(FamilySpec(fam, dict(params)))
    return out


def _trial_build(cfg: ExperimentConfig) -> None:
    """Construct every family on a small grid so bad parameters fail before any output is written."""
    g = make_grid(cfg.dim, 3, cfg.S)
    built = {}
    for i, ws in enumerate(cfg.weights):
        try:
            built[i] = make_weight(g, ws.family, **ws.params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"weight[{i}].params", str(exc)) from None
    for i, fs in enumerate(cfg.fields):
        try:
            make_field(g, built[0], fs.family, **fs.params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"field[{i}].params", str(exc)) from None


_SECTIONS = {"grid", "weight", "field", "eps", "time_grid", "quadrature", "ensemble", "suites", "out"}


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate a decoded JSON document."""
    _expect(isinstance(doc, dict), "$", "config must be a JSON object")
    extra = set(doc) - _SECTIONS
    _expect(not extra, "$", f"unknown keys {sorted(extra)}")
    cfg = ExperimentConfig()

    g = doc.get("grid", {})
    _expect(isinstance(g, dict), "grid", "expected an object")
    cfg.dim = _number(g.get("dim", cfg.dim), "grid.dim", integer=True)
    _expect(cfg.dim in MAX_LEVELS, "grid.dim", f"must be one of {sorted(MAX_LEVELS)}")
    ml = g.get("m_list", cfg.m_list)
    _expect(isinstance(ml, list) and ml, "grid.m_list", "expected a non-empty list")
    for i, m in enumerate(ml):
        _number(m, f"grid.m_list[{i}]", lo=0, hi=MAX_LEVELS[cfg.dim], integer=True)
    _expect(ml == sorted(set(ml)), "grid.m_list", "must be strictly ascending")
    for i, m in enumerate(ml):
        _expect(2 ** (m * cfg.dim) <= MAX_DENSE_SITES, f"grid.m_list[{i}]",
                f"P**dim = {2 ** (m * cfg.dim)} exceeds the dense limit {MAX_DENSE_SITES}")
    cfg.m_list = list(ml)
    cfg.S = float(_number(g.get("S", cfg.S), "grid.S", lo=0))

    if "weight" in doc:
        cfg.weights = _families(doc["weight"], "weight", WEIGHT_FAMILIES)
    if "field" in doc:
        cfg.fields = _families(doc["field"], "field", FIELD_FAMILIES)

    e = doc.get("eps", {})
    _expect(isinstance(e, dict), "eps", "expected an object")
    sweep = e.get("sweep", cfg.eps)
    _expect(isinstance(sweep, list) and sweep, "eps.sweep", "expected a non-empty list")
    for i, v in enumerate(sweep):
        _number(v, f"eps.sweep[{i}]", lo=0, hi=0.125)
    cfg.eps = sorted(float(v) for v in sweep)
    cfg.eps_default = float(_number(e.get("default", cfg.eps_default), "eps.default", lo=0, hi=0.125))

    tg = doc.get("time_grid", {})
    _expect(isinstance(tg, dict), "time_grid", "expected an object")
    cfg.dlog_max = float(_number(tg.get("dlog_max", cfg.dlog_max), "time_grid.dlog_max", lo=0, hi=1))

    q = doc.get("quadrature", {})
    _expect(isinstance(q, dict), "quadrature", "expected an object")
    cfg.quad_M = _number(q.get("M", cfg.quad_M), "quadrature.M", lo=15, integer=True)
    cfg.quad_lo = float(_number(q.get("lo_factor", cfg.quad_lo), "quadrature.lo_factor", lo=0, hi=0.1))
    cfg.quad_hi = float(_number(q.get("hi_factor", cfg.quad_hi), "quadrature.hi_factor", lo=0))
    _expect(cfg.quad_hi >= 10, "quadrature.hi_factor", "must be >= 10 to span the spectrum")

    en = doc.get("ensemble", {})
    _expect(isinstance(en, dict), "ensemble", "expected an object")
    cfg.ensemble_count = _number(en.get("count", cfg.ensemble_count), "ensemble.count", lo=16, integer=True)
    cfg.seed = _number(en.get("seed", cfg.seed), "ensemble.seed", lo=-1, integer=True)
    _expect(cfg.seed < 2**64, "ensemble.seed", "must fit in an unsigned 64-bit integer")
    cfg.band = _number(en.get("band", cfg.band), "ensemble.band", lo=0, integer=True)

    su = doc.get("suites", cfg.suites)
    _expect(isinstance(su, list) and su, "suites", "expected a non-empty list")
    for i, s in enumerate(su):
        _expect(s in SUITES, f"suites[{i}]", f"unknown suite {s!r}; known: {list(SUITES)}")
    cfg.suites = [s for s in SUITES if s in su]

    _trial_build(cfg)

    out = doc.get("out")
    _expect(out is None or isinstance(out, str), "out", "expected a path string")
    cfg.out = out
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"invalid JSON: {exc}") from None
    return parse_config(doc)
