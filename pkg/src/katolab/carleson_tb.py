"""Weighted Carleson norms and the stopping-time (Tb) construction.

Cubes are handled as blocks of the dyadic hierarchy; set-valued objects
(bad sets, good sets, sawtooth regions) are boolean site masks, with the
``t`` direction represented on a :class:`~katolab.squarefunc.TimeGrid`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lattice, semigroup, weights
from .lattice import DyadicCube, Grid
from .operator import Operator
from .squarefunc import Mollifier, TimeGrid

THRESH_RE = 0.75  # Re avg nu . grad F <= 3/4 selects into S1


class StoppingTimeError(RuntimeError):
    pass


class CoverageError(RuntimeError):
    pass


# --- gamma on a time grid -------------------------------------------------


@dataclass
class GammaField:
    """``gamma_t(x)`` on the nodes of ``tgrid``; ``values`` has shape ``(n_t, dim, N)``."""

    grid: Grid
    tgrid: TimeGrid
    values: np.ndarray = field(repr=False)

    @property
    def sq(self) -> np.ndarray:
        """``|gamma_t(x)|^2``, shape ``(n_t, N)``."""
        return (np.abs(self.values) ** 2).sum(axis=1)

    def sup_norms(self) -> np.ndarray:
        """``||gamma_t||_inf`` per node."""
        return np.sqrt(self.sq.max(axis=1))


def gamma_field(op: Operator, tgrid: TimeGrid) -> GammaField:
    disp = lattice.disp_matrix(op.grid, symmetric=True)
    vals = np.stack([semigroup.gamma_t(op, t, disp) for t in tgrid.nodes])
    return GammaField(op.grid, tgrid, vals)


def constant_gamma(grid: Grid, tgrid: TimeGrid, c: float, a: float, b: float) -> GammaField:
    """``gamma_t = c e_0 1_[a, b](t)`` (for checks against the closed form ``c^2 ln(b/a)``)."""
    vals = np.zeros((tgrid.n, grid.dim, grid.N))
    on = (tgrid.nodes >= a) & (tgrid.nodes <= b)
    vals[on, 0, :] = c
    return GammaField(grid, tgrid, vals)


# --- Carleson norm --------------------------------------------------------


@dataclass
class CarlesonEstimate:
    sup: float
    argmax: str
    table: list = field(default_factory=list, repr=False)
    dyadic_sup: float = 0.0
    shifted_sup: float = 0.0
    dlog: float = 0.0


def carleson_norm(gf: GammaField, w: weights.Weight, levels=None, shifted: bool = True) -> CarlesonEstimate:
    """``sup_Q (1/w(Q)) sum_{x in Q} sum_{t < l(Q)} |gamma_t(x)|^2 dlog w(x) h^dim``.

    Default cube family: every level with ``l(Q) <= S/8``; the time grid must
    reach down to ``h`` and up to the largest cube side.
    """
    grid, tg = gf.grid, gf.tgrid
    if levels is None:
        levels = [k for k in range(grid.m + 1) if grid.S * 2.0**-k <= grid.S / 8 * (1 + 1e-12)]
    if tg.t_lo > grid.h * (1 + 1e-12):
        raise CoverageError(f"time grid starts at {tg.t_lo:.4g} > h = {grid.h:.4g}")
    top = max(grid.S * 2.0**-k for k in levels)
    if tg.t_hi < top * (1 - 1e-12):
        raise CoverageError(f"time grid ends at {tg.t_hi:.4g} < largest cube side {top:.4g}")
    sq = gf.sq * tg.weights[:, None]
    wv = w.values
    table = []
    best = {False: (-1.0, ""), True: (-1.0, "")}
    for k in levels:
        side = grid.S * 2.0**-k
        acc = sq[tg.nodes < side].sum(axis=0) * wv
        for s in (lattice.half_shifts(grid, k) if shifted else [(0,) * grid.dim]):
            num = lattice.block_reduce(grid, acc, k, s, op=np.sum)
            den = lattice.block_reduce(grid, wv, k, s, op=np.sum)
            val = num / den
            is_shift = any(s)
            for idx in np.ndindex(val.shape):
                c = lattice.cube(grid, k, idx, s)
                table.append({"cube": c.label, "level": k, "shifted": is_shift, "value": float(val[idx])})
            i = np.unravel_index(int(np.argmax(val)), val.shape)
            if val[i] > best[is_shift][0]:
                best[is_shift] = (float(val[i]), lattice.cube(grid, k, i, s).label)
    d, sft = best[False], best[True]
    top_val, top_lab = max(d, sft) if shifted else d
    return CarlesonEstimate(top_val, top_lab, table, d[0], max(sft[0], 0.0), float(tg.dlog))


def journe_check(gf: GammaField, f: np.ndarray, w: weights.Weight, moll: Mollifier | None = None,
                 carleson: CarlesonEstimate | None = None) -> float:
    """``sum_t sum_x |p_t * f|^2 |gamma_t|^2 w h^dim dlog / (||gamma||_C ||f||^2_{L^2(w)})``."""
    grid, tg = gf.grid, gf.tgrid
    moll = moll or Mollifier(grid)
    carleson = carleson or carleson_norm(gf, w)
    sq = gf.sq
    num = 0.0
    for i, (t, dl) in enumerate(zip(tg.nodes, tg.weights)):
        pf = moll.apply(f, t)
        num += dl * float(np.sum(np.abs(pf) ** 2 * sq[i] * w.values) * grid.cell_volume)
    f2 = float(np.sum(np.abs(f) ** 2 * w.values) * grid.cell_volume)
    if carleson.sup == 0:
        if num > 0:
            raise ArithmeticError("zero Carleson norm with nonzero numerator")
        return 0.0
    return num / (carleson.sup * f2)


# --- cone net ----------------------------------------------------------------


@dataclass
class ConeNet:
    eps: float
    nus: np.ndarray  # (N, dim) complex unit vectors
    coverage: float = 1.0
    n_verify: int = 0

    @property
    def N(self) -> int:
        return len(self.nus)

    def member(self, z: np.ndarray) -> np.ndarray:
        """Boolean ``(n_z, N)``: ``z in Gamma_nu``."""
        return cone_member(z, self.nus, self.eps)

    def first_cone(self, z: np.ndarray) -> np.ndarray:
        """Index of the first net vector whose cone contains each ``z`` (-1 if none)."""
        m = self.member(z)
        return np.where(m.any(axis=1), m.argmax(axis=1), -1)


def cone_member(z: np.ndarray, nus: np.ndarray, eps: float) -> np.ndarray:
    """``|z - nu (z . conj nu)| < eps |z . conj nu|`` for all pairs; ``z`` shape ``(n, dim)``."""
    z = np.atleast_2d(z)
    p = z @ np.conj(nus).T  # (n, N) = z . conj(nu)
    perp2 = np.maximum((np.abs(z) ** 2).sum(axis=1)[:, None] - np.abs(p) ** 2, 0.0)
    return np.sqrt(perp2) < eps * np.abs(p)


def _hopf(theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    return np.stack([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)], axis=-1)


def _fibonacci_sphere(n: int):
    i = np.arange(n) + 0.5
    theta = np.arccos(1 - 2 * i / n)
    phi = np.pi * (1 + np.sqrt(5)) * i
    return theta, phi


def cone_net(dim_complex: int, eps: float, n_candidates: int = 20000, n_verify: int = 20000,
             seed: int = 0, margin: float = 0.8) -> ConeNet:
    """Finite family of cones ``Gamma_nu`` covering ``C^dim``.

    Membership depends only on the complex line through ``z``, so the net
    lives on ``CP^{dim-1}``.  For ``dim = 2`` candidates are a Fibonacci
    lattice on the Bloch sphere lifted to ``C^2``; a candidate joins the net if
    no existing cone of aperture ``margin * eps`` contains it.  Coverage is
    then verified with the full aperture on an independent random sample.
    """
    if not 0 < eps <= 0.125:
        raise ValueError("cone aperture needs 0 < eps <= 1/8")
    if dim_complex == 1:
        return ConeNet(eps, np.ones((1, 1), dtype=complex), 1.0, 0)
    if dim_complex != 2:
        raise ValueError("cone nets are implemented for complex dimension 1 or 2")
    cands = _hopf(*_fibonacci_sphere(n_candidates))
    nus = [cands[0]]
    covered = cone_member(cands, np.array(nus), margin * eps)[:, 0]
    for i in range(1, len(cands)):
        if covered[i]:
            continue
        nus.append(cands[i])
        covered |= cone_member(cands, cands[i : i + 1], margin * eps)[:, 0]
    nus = np.array(nus)
    rng = np.random.Generator(np.random.Philox(seed))
    z = rng.standard_normal((n_verify, 2)) + 1j * rng.standard_normal((n_verify, 2))
    cov = float(cone_member(z, nus, eps).any(axis=1).mean())
    if cov < 1.0:
        raise CoverageError(f"cone net with N={len(nus)} covers only {cov:.4%} of the verification sample")
    return ConeNet(eps, nus, cov, n_verify)


# --- Tb construction ------------------------------------------------------------


@dataclass
class TbState:
    """Stopping-time data for one cube ``Q``.

    ``J[x, i, k] = d_k (F_Q)_i (x)``.  Per direction ``nu`` (rows of
    ``nus``): ``S1``/``S2`` as lists of cube labels, ``B1``/``B2``/``E`` as
    site masks.  ``E_Q`` is the union of the ``E`` masks.
    """

    grid: Grid
    Q: DyadicCube
    eps: float
    F: np.ndarray = field(repr=False)
    J: np.ndarray = field(repr=False)
    nus: np.ndarray = field(default=None, repr=False)
    S1: list = field(default_factory=list, repr=False)
    S2: list = field(default_factory=list, repr=False)
    B1: list = field(default_factory=list, repr=False)
    B2: list = field(default_factory=list, repr=False)
    E: list = field(default_factory=list, repr=False)

    @property
    def mask_Q(self) -> np.ndarray:
        m = np.zeros(self.grid.N, dtype=bool)
        m[self.Q.sites] = True
        return m

    @property
    def E_Q(self) -> np.ndarray:
        out = np.zeros(self.grid.N, dtype=bool)
        for e in self.E:
            out |= e
        return out

    def grad_nu(self, nu: np.ndarray) -> np.ndarray:
        """``grad F_{Q,nu} = sum_i conj(nu_i) grad F_i``, shape ``(dim, N)``."""
        return np.einsum("i,xik->kx", np.conj(nu), self.J)


def _check_cube(grid: Grid, Q: DyadicCube, eps: float) -> None:
    if not 0 < eps <= 0.125:
        raise ValueError("eps must lie in (0, 1/8]")
    if Q.side > grid.S / 16 * (1 + 1e-12):
        raise ValueError(f"cube side {Q.side:.4g} > S/16: 10Q would wrap")


def fq_level_field(op: Operator, level: int, eps: float, disp: np.ndarray | None = None):
    """``(F - x, J)`` for every cube of a level (they share the heat time ``eps^2 l^2``)."""
    grid = op.grid
    side = grid.S * 2.0**-level
    Wm = semigroup.heat_matrix(op, (eps * side) ** 2)
    G = semigroup.displacement_moment(grid, Wm, disp)
    G = -G  # sum_y W(x, y) (y - x) h^dim
    if op.real:
        G = G.real
    J = np.broadcast_to(np.eye(grid.dim), (grid.N, grid.dim, grid.dim)).astype(G.dtype).copy()
    for i in range(grid.dim):
        J[:, i, :] += lattice.grad(grid, G[i]).T
    return G, J


def make_fq(op: Operator, Q: DyadicCube, eps: float, level_field=None) -> TbState:
    """``F_Q(x) = x + sum_y W_{eps^2 l^2}(x, y) (y - x) h^dim`` (torus displacement)."""
    _check_cube(op.grid, Q, eps)
    G, J = level_field if level_field is not None else fq_level_field(op, Q.level, eps)
    F = op.grid.coords() + G
    return TbState(op.grid, Q, eps, F, J)


def _lift_coordinate(op: Operator) -> np.ndarray:
    """``L_w x_k`` for the (non-periodic) coordinates, shape ``(dim, N)``.

    The forward gradient of ``x_k`` is the unit ``k``-edge field, so
    ``L_w x_k = W^{-1} G^T M e_k``.
    """
    from .operator import grad_matrix

    grid = op.grid
    Gm = grad_matrix(grid)
    out = []
    for k in range(grid.dim):
        e = np.zeros(grid.dim * grid.N)
        e[k * grid.N : (k + 1) * grid.N] = 1.0
        out.append((Gm.T @ (op.flux @ e)) / op.weight.values)
    return np.array(out)


@dataclass
class TbHypotheses:
    c_i: float
    c_ii: float
    g_bound: float


def tb_hypotheses(state: TbState, op: Operator) -> TbHypotheses:
    """Measured constants for the two energy hypotheses and the ``|F_Q - x| <= C eps l`` bound."""
    grid, Q, w = state.grid, state.Q, op.weight
    wQ = weights.weighted_measure(w, Q)
    s5 = lattice.enlarged_cube(grid, Q, 5)
    s10 = lattice.enlarged_cube(grid, Q, 10)
    gradsq = (np.abs(state.J) ** 2).sum(axis=(1, 2))
    c_i = float(np.sum(gradsq[s5] * w.values[s5]) * grid.cell_volume / wQ)
    G = state.F - grid.coords()
    LF = _lift_coordinate(op) + np.array([op.apply(G[k]) for k in range(grid.dim)])
    lsq = (np.abs(LF) ** 2).sum(axis=0)
    c_ii = float(Q.side**2 * np.sum(lsq[s10] * w.values[s10]) * grid.cell_volume / wQ)
    g_bound = float(np.sqrt((np.abs(G) ** 2).sum(axis=0)).max() / (state.eps * Q.side))
    return TbHypotheses(c_i, c_ii, g_bound)


def grad_deviation(state: TbState) -> float:
    """``|avg_Q (grad F_Q - 1)|_F / eps``."""
    d = state.J[state.Q.sites].mean(axis=0) - np.eye(state.grid.dim)
    return float(np.linalg.norm(d) / state.eps)


def _inside(grid: Grid, Q: DyadicCube, k: int) -> np.ndarray:
    m = np.zeros(grid.N)
    m[Q.sites] = 1.0
    return lattice.block_reduce(grid, m, k) == 1.0


def _re_field(state: TbState, nu: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    g = state.grad_nu(nu)
    re = np.einsum("k,kx->x", nu, g).real
    mag = np.sqrt((np.abs(g) ** 2).sum(axis=0))
    return re, mag


def stopping_time(state: TbState, nu: np.ndarray | None = None, grad_field: np.ndarray | None = None) -> TbState:
    """Top-down maximal selection below ``Q`` for one direction ``nu``.

    A cube with no selected ancestor enters ``S1`` if
    ``Re avg nu . grad F_{Q,nu} <= 3/4``, otherwise ``S2`` if
    ``avg |grad F_{Q,nu}| > 1/(8 eps)``.  ``grad_field`` (shape
    ``(dim, N)``) overrides ``grad F_{Q,nu}`` for synthetic tests.
    """
    grid, Q = state.grid, state.Q
    if nu is None:
        nu = np.ones(grid.dim, dtype=complex) / np.sqrt(grid.dim)
    nu = np.asarray(nu, dtype=complex)
    if grad_field is None:
        re, mag = _re_field(state, nu)
    else:
        g = np.asarray(grad_field)
        re = np.einsum("k,kx->x", nu, g).real
        mag = np.sqrt((np.abs(g) ** 2).sum(axis=0))
    thresh2 = 1.0 / (8 * state.eps)
    s1, s2 = [], []
    b1 = np.zeros(grid.N, dtype=bool)
    b2 = np.zeros(grid.N, dtype=bool)
    anc = None
    for k in range(Q.level, grid.m + 1):
        inside = _inside(grid, Q, k)
        if anc is not None:
            for ax in range(grid.dim):
                anc = np.repeat(anc, 2, axis=ax)
        else:
            anc = np.zeros(inside.shape, dtype=bool)
        cand = inside & ~anc
        r = lattice.block_reduce(grid, re, k)
        a = lattice.block_reduce(grid, mag, k)
        sel1 = cand & (r <= THRESH_RE)
        sel2 = cand & ~sel1 & (a > thresh2)
        for sel, lst, B in ((sel1, s1, b1), (sel2, s2, b2)):
            for idx in zip(*np.nonzero(sel)):
                lst.append(lattice.cube(grid, k, tuple(int(i) for i in idx)).label)
            B |= lattice.block_broadcast(grid, sel.astype(float), k) > 0
        anc = anc | sel1 | sel2
    state.nus = nu[None, :] if state.nus is None else np.vstack([state.nus, nu[None, :]])
    state.S1.append(s1)
    state.S2.append(s2)
    state.B1.append(b1)
    state.B2.append(b2)
    state.E.append(state.mask_Q & ~(b1 | b2))
    return state


def density_eta(states, w: weights.Weight) -> float:
    """``min_Q w(E_Q) / w(Q)`` over the processed cubes."""
    vals = []
    for st in states:
        e = st.E_Q
        vals.append(float(w.values[e].sum() / w.values[st.Q.sites].sum()) if e.any() else 0.0)
    return min(vals)


def bad_depth(grid: Grid, Q: DyadicCube, bad: np.ndarray) -> np.ndarray:
    """Side of the largest dyadic subcube of ``Q`` inside ``bad`` containing each site (0 if none)."""
    L = np.zeros(grid.N)
    for k in range(grid.m, Q.level - 1, -1):
        full = (lattice.block_reduce(grid, bad.astype(float), k, op=np.min) == 1.0) & _inside(grid, Q, k)
        L = np.where(lattice.block_broadcast(grid, full.astype(float), k) > 0, grid.S * 2.0**-k, L)
    return L


def sawtooth_mask(grid: Grid, Q: DyadicCube, bad: np.ndarray, tnodes: np.ndarray) -> np.ndarray:
    """``(t, x) in R_Q minus the union of R_{Q_j}`` over maximal cubes ``Q_j`` of ``bad``; shape ``(n_t, N)``."""
    inQ = np.zeros(grid.N, dtype=bool)
    inQ[Q.sites] = True
    L = bad_depth(grid, Q, bad & inQ)
    t = tnodes[:, None]
    return inQ[None, :] & (t < Q.side) & (t >= L[None, :])


@dataclass
class SawtoothResult:
    lhs: float
    rhs: float
    forced_violations: int
    forced_checked: int
    domination_violations: int
    domination_checked: int
    coverage: float
    eta_Q: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs


def _At(grid: Grid, field_: np.ndarray, t: float) -> np.ndarray:
    k = lattice.level_for_scale(grid, t)
    return lattice.block_broadcast(grid, lattice.block_reduce(grid, field_, k), k)


def sawtooth_carleson(state: TbState, gf: GammaField, w: weights.Weight, net: ConeNet,
                      strict: bool = True) -> SawtoothResult:
    """Final domination on the sawtooth above ``E_Q``.

    (a) On every per-direction sawtooth ``E*_{Q,nu}``: ``3/4 < Re nu . A_t grad F``
    and ``|A_t grad F| <= 1/(8 eps)`` exactly (raises if ``strict``).
    (b) On ``E*_Q``: with ``nu_j`` the first cone containing ``gamma_t(x)``,
    ``|gamma|^2 / 4 <= |gamma . A_t grad F_{Q,nu_j}|^2`` wherever
    ``(x, t)`` also lies in ``E*_{Q,nu_j}`` (``coverage`` is that fraction).
    Then ``lhs`` and ``rhs`` of the integrated domination.
    """
    grid, Q = state.grid, state.Q
    tg = gf.tgrid
    nodes = tg.nodes
    if state.nus is None or len(state.E) != net.N:
        raise ValueError("run stopping_time for every net direction first")
    wv = w.values
    dv = grid.cell_volume
    wQ = float(wv[Q.sites].sum() * dv)
    star_Q = sawtooth_mask(grid, Q, state.mask_Q & ~state.E_Q, nodes)
    star_nu = [sawtooth_mask(grid, Q, state.mask_Q & ~e, nodes) for e in state.E]
    thresh2 = 1.0 / (8 * state.eps)
    gam = gf.values  # (n_t, dim, N)
    sq = gf.sq

    lhs = float(np.sum(sq * star_Q * tg.weights[:, None] * wv[None, :]) * dv / wQ)
    rhs = 0.0
    fv = fc = dv_ = dc = 0
    covered = total = 0
    cone_idx = None
    for i, t in enumerate(nodes):
        if t >= Q.side:
            continue
        z = gam[i].T  # (N, dim)
        nz = sq[i] > 0
        cone_idx = np.where(nz, net.first_cone(z), -1)
        tot_i = star_Q[i] & nz
        total += int(tot_i.sum())
        for j, nu in enumerate(net.nus):
            g = state.grad_nu(nu)
            re, mag = _re_field(state, nu)
            A_re = _At(grid, re, t)
            A_vec = np.stack([_At(grid, g[k], t) for k in range(grid.dim)])
            A_abs = np.sqrt((np.abs(A_vec) ** 2).sum(axis=0))
            on = star_nu[j][i]
            fc += int(on.sum())
            bad = on & ~((A_re > THRESH_RE) & (A_abs <= thresh2))
            fv += int(bad.sum())
            dot = np.einsum("kx,kx->x", gam[i], A_vec)
            inQ = np.zeros(grid.N, dtype=bool)
            inQ[Q.sites] = True
            rhs += 4 * tg.weights[i] * float(np.sum(np.abs(dot[inQ]) ** 2 * wv[inQ]) * dv / wQ)
            use = tot_i & (cone_idx == j) & on
            covered += int(use.sum())
            dc += int(use.sum())
            dv_ += int(np.sum(use & (0.25 * sq[i] > np.abs(dot) ** 2)))
    if strict and fv:
        raise StoppingTimeError(f"{fv} sawtooth points violate the stopping-time bounds")
    E = state.E_Q
    eta_Q = float(wv[E].sum() / wv[Q.sites].sum()) if E.any() else 0.0
    return SawtoothResult(lhs, rhs, fv, fc, dv_, dc, covered / total if total else 1.0, eta_Q)


# --- per-level pipeline ------------------------------------------------------------


def tb_cube_family(grid: Grid) -> list[int]:
    """Levels with ``8h <= l(Q) <= S/16``."""
    return [k for k in range(grid.m + 1) if 8 * grid.h * (1 - 1e-12) <= grid.S * 2.0**-k <= grid.S / 16 * (1 + 1e-12)]


@dataclass
class TbRun:
    """Tb pipeline over a cube family; ``carleson_bound = max_Q lhs / eta``."""

    eps: float
    rows: list = field(default_factory=list)
    eta: float = 1.0
    carleson_bound: float = 0.0
    grad_dev_max: float = 0.0
    forced_violations: int = 0
    all_dominated: bool = True
    gamma_sup: np.ndarray = field(default=None, repr=False)


def run_tb(op: Operator, eps: float = 0.05, gf: GammaField | None = None, net: ConeNet | None = None,
           levels=None, max_cubes_per_level: int | None = None) -> TbRun:
    """Full pipeline over the cube family: ``F_Q``, hypotheses, stopping times, sawtooth."""
    grid, w = op.grid, op.weight
    if gf is None:
        gf = gamma_field(op, TimeGrid(grid.h, grid.S / 8))
    net = net or cone_net(grid.dim, eps)
    levels = tb_cube_family(grid) if levels is None else levels
    if not levels:
        raise ValueError(f"no dyadic cubes with 8h <= l(Q) <= S/16 at P={grid.P}; need P >= 128")
    disp = lattice.disp_matrix(grid, symmetric=True)
    run = TbRun(eps, gamma_sup=gf.sup_norms())
    states = []
    for k in levels:
        lf = fq_level_field(op, k, eps, disp)
        cubes = lattice.dyadic_cubes(grid, k)
        if max_cubes_per_level is not None and len(cubes) > max_cubes_per_level:
            step = len(cubes) // max_cubes_per_level
            cubes = cubes[::step][:max_cubes_per_level]
        for Q in cubes:
            st = make_fq(op, Q, eps, lf)
            for nu in net.nus:
                stopping_time(st, nu)
            hyp = tb_hypotheses(st, op)
            l21 = grad_deviation(st)
            sc = sawtooth_carleson(st, gf, w, net, strict=False)
            states.append(st)
            run.rows.append({
                "cube": Q.label, "level": k, "eps": eps, "eta_Q": sc.eta_Q,
                "c_i": hyp.c_i, "c_ii": hyp.c_ii, "g_bound": hyp.g_bound, "grad_dev": l21,
                "lhs": sc.lhs, "rhs": sc.rhs, "forced_violations": sc.forced_violations,
                "domination_violations": sc.domination_violations, "coverage": sc.coverage,
            })
    run.eta = density_eta(states, w)
    run.carleson_bound = max(r["lhs"] for r in run.rows) / run.eta if run.eta > 0 else np.inf
    run.grad_dev_max = max(r["grad_dev"] for r in run.rows)
    run.forced_violations = sum(r["forced_violations"] for r in run.rows)
    run.all_dominated = all(r["lhs"] <= r["rhs"] for r in run.rows)
    return run
