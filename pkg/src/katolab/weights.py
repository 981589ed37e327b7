"""A2 weight families, Muckenhoupt constants, weighted measures and A-infinity fits."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import lattice
from .lattice import DyadicCube, Grid


@dataclass(frozen=True)
class Weight:
    grid: Grid
    values: np.ndarray = field(repr=False)
    family: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.N,):
            raise ValueError(f"weight needs {self.grid.N} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or v.min() <= 0:
            raise ValueError("weight values must be finite and strictly positive")
        object.__setattr__(self, "values", v)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def scaled(self, c: float) -> "Weight":
        return Weight(self.grid, c * self.values, self.family, dict(self.params, scale=c))

    def inverse(self) -> "Weight":
        return Weight(self.grid, 1.0 / self.values, self.family + "^-1", self.params)

    def edge_values(self) -> np.ndarray:
        return lattice.edge_average(self.grid, self.values)


def constant_weight(grid: Grid, value: float = 1.0) -> Weight:
    return Weight(grid, np.full(grid.N, float(value)), "constant", {"value": value})


def power_weight(grid: Grid, a: float, x0: int | None = None) -> Weight:
    """``w(x) = max(d_T(x, x0), h/2)**a``; A2 exactly for ``-dim < a < dim``."""
    if not -grid.dim < a < grid.dim:
        raise ValueError(f"power exponent a={a} outside the A2 range (-{grid.dim}, {grid.dim})")
    if x0 is None:
        x0 = grid.site(*(grid.P // 2,) * grid.dim)
    d = np.maximum(lattice.torus_distance(grid, x0), grid.h / 2)
    return Weight(grid, d**a, "power", {"a": a, "x0": int(x0)})


def two_valued_weight(grid: Grid, low: float = 1.0, high: float = 4.0) -> Weight:
    """``low`` on the first half of axis 0, ``high`` on the rest."""
    first = grid.multi_index()[0] < grid.P // 2
    return Weight(grid, np.where(first, low, high).astype(float), "two_valued", {"low": low, "high": high})


WEIGHT_FAMILIES = {
    "constant": constant_weight,
    "power": power_weight,
    "two_valued": two_valued_weight,
}


def make_weight(grid: Grid, family: str, **params) -> Weight:
    try:
        factory = WEIGHT_FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown weight family {family!r}; known: {sorted(WEIGHT_FAMILIES)}") from None
    return factory(grid, **params)


# --- Muckenhoupt constant -------------------------------------------------


@dataclass
class A2Report:
    value: float
    argmax: DyadicCube
    per_level: dict[int, float]

    def __float__(self):
        return self.value


def a2_constant(w: Weight, grid: Grid | None = None) -> A2Report:
    """``sup_Q (avg_Q w)(avg_Q 1/w)`` over dyadic cubes and their half-shifted copies."""
    grid = grid or w.grid
    best, arg = -np.inf, None
    per_level = {}
    for k in range(grid.m + 1):
        lvl = -np.inf
        for s in lattice.half_shifts(grid, k):
            prod = lattice.block_reduce(grid, w.values, k, s) * lattice.block_reduce(grid, 1.0 / w.values, k, s)
            i = int(np.argmax(prod))
            if prod.flat[i] > lvl:
                lvl = float(prod.flat[i])
            if prod.flat[i] > best:
                best = float(prod.flat[i])
                arg = lattice.cube(grid, k, tuple(int(c) for c in np.unravel_index(i, prod.shape)), s)
        per_level[k] = lvl
    return A2Report(best, arg, per_level)


# --- measures and norms ---------------------------------------------------


def weighted_measure(w: Weight, sites) -> float:
    """``w(E) = sum_{x in E} w(x) h**dim`` for a cube or a site index set."""
    if isinstance(sites, DyadicCube):
        sites = sites.sites
    sites = np.asarray(sites)
    if sites.dtype == bool:
        sites = np.flatnonzero(sites)
    if sites.size == 0:
        raise ValueError("weighted measure of an empty set")
    return float(w.values[sites].sum() * w.grid.cell_volume)


NORM_KINDS = ("L2w", "H1w", "GradL2w")


def weighted_norm(f, w: Weight, kind: str = "L2w", edge: bool = False) -> float:
    """Discrete weighted norms.

    ``edge=True`` weights each gradient component by the edge-averaged weight
    (the norm that appears in the discrete form); the default uses site weights.
    """
    if kind not in NORM_KINDS:
        raise ValueError(f"unknown norm kind {kind!r}; expected one of {NORM_KINDS}")
    grid = w.grid
    f = np.asarray(f)
    dv = grid.cell_volume
    l2 = float(np.sum(np.abs(f) ** 2 * w.values) * dv)
    if kind == "L2w":
        return float(np.sqrt(l2))
    g = lattice.grad(grid, f)
    ww = w.edge_values() if edge else w.values[None, :]
    g2 = float(np.sum(np.abs(g) ** 2 * ww) * dv)
    if kind == "GradL2w":
        return float(np.sqrt(g2))
    return float(np.sqrt(l2 + g2))


def inner_w(f, g, w: Weight) -> complex:
    """``<f, g>_w = sum f conj(g) w h**dim``."""
    return complex(np.sum(np.asarray(f) * np.conj(g) * w.values) * w.grid.cell_volume)


# --- A-infinity parameters ------------------------------------------------


@dataclass
class AinftyParams:
    """Majorant fit of ``w(E)/w(Q) <= alpha (|E|/|Q|)**delta`` and
    ``|E|/|Q| <= beta (w(E)/w(Q))**epsilon`` over the sampled pairs."""

    delta: float
    alpha: float
    epsilon: float
    beta: float
    delta_table: np.ndarray = field(repr=False)
    epsilon_table: np.ndarray = field(repr=False)
    n_pairs: int = 0
    min_slack: float = 0.0

    def holds(self, rE: np.ndarray, rW: np.ndarray, tol: float = 1e-12) -> bool:
        ok1 = np.all(rW <= self.alpha * rE**self.delta * (1 + tol))
        ok2 = np.all(rE <= self.beta * rW**self.epsilon * (1 + tol))
        return bool(ok1 and ok2)


def ainfty_pairs(
    w: Weight,
    n_random: int = 8,
    max_cubes_per_level: int = 64,
    exhaustive_max: int = 12,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``(|E|/|Q|, w(E)/w(Q))`` over cubes ``Q`` and subsets ``E`` of ``Q``.

    Subsets are: every nonempty subset when ``|Q| <= exhaustive_max`` sites,
    otherwise random subsets plus the extreme-value subsets (the ``j`` largest
    and ``j`` smallest weights, ``j`` on a geometric ladder).  ``E = Q`` is
    always included.
    """
    grid = w.grid
    rng = np.random.Generator(np.random.Philox(seed))
    rE, rW = [], []
    for k in range(grid.m + 1):
        cubes = [c for s in lattice.half_shifts(grid, k) for c in lattice.dyadic_cubes(grid, k, s)]
        if len(cubes) > max_cubes_per_level:
            pick = rng.choice(len(cubes), max_cubes_per_level, replace=False)
            cubes = [cubes[i] for i in sorted(pick)]
        for Q in cubes:
            vals = w.values[Q.sites]
            n = vals.size
            wq = vals.sum()
            if n <= exhaustive_max:
                for r in range(1, n + 1):
                    for E in combinations(range(n), r):
                        rE.append(r / n)
                        rW.append(vals[list(E)].sum() / wq)
                continue
            order = np.argsort(vals)
            js = np.unique(np.geomspace(1, n, num=min(n, 24)).astype(int))
            for j in js:
                rE += [j / n, j / n]
                rW += [vals[order[-j:]].sum() / wq, vals[order[:j]].sum() / wq]
            for _ in range(n_random):
                j = int(rng.integers(1, n + 1))
                E = rng.choice(n, j, replace=False)
                rE.append(j / n)
                rW.append(vals[E].sum() / wq)
    return np.asarray(rE), np.asarray(rW)


def _majorant_exponent(x: np.ndarray, y: np.ndarray, exps: np.ndarray, prefactor: float):
    """For each exponent ``e``: least ``c(e)`` with ``y <= c x**e``; pick the largest
    ``e`` whose ``c(e) <= prefactor``."""
    logx, logy = np.log(x), np.log(y)
    cs = np.array([np.exp(np.max(logy - e * logx)) for e in exps])
    ok = np.flatnonzero(cs <= prefactor * (1 + 1e-12))
    i = ok[-1] if ok.size else 0
    return float(exps[i]), float(cs[i]), np.column_stack([exps, cs])


def ainfty_fit(
    w: Weight,
    grid: Grid | None = None,
    prefactor: float = 1.0,
    exponents: np.ndarray | None = None,
    **sample_kw,
) -> AinftyParams:
    """Fit the two A-infinity comparability inequalities as majorants.

    For each trial exponent on a uniform ladder in (0, 1] the least admissible
    prefactor is computed; the reported exponent is the largest one whose
    prefactor does not exceed ``prefactor`` (default 1, the value attained by
    ``E = Q``).  The full exponent/prefactor tables are kept.
    """
    exps = np.linspace(0.01, 1.0, 100) if exponents is None else np.asarray(exponents)
    rE, rW = ainfty_pairs(w, **sample_kw)
    d, a, dt = _majorant_exponent(rE, rW, exps, prefactor)
    e, b, et = _majorant_exponent(rW, rE, exps, prefactor)
    slack = min(np.min(a * rE**d - rW), np.min(b * rW**e - rE))
    return AinftyParams(d, a, e, b, dt, et, int(rE.size), float(slack))
