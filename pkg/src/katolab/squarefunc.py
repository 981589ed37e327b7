"""Weighted square functions and the auxiliary transforms they are built from.

All time integrals ``int . dt/t`` are midpoint rules in ``log t``
(:class:`TimeGrid`).  Convolutions are circular, via FFT.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lattice, semigroup, weights
from .lattice import Grid
from .operator import Operator

DLOG_MAX = 0.25
SIGMA1 = float(np.sqrt(2 * np.log(4) / 3))


# --- time grids -----------------------------------------------------------


@dataclass(frozen=True)
class TimeGrid:
    """Log-midpoint nodes on ``[t_lo, t_hi]`` with spacing ``<= dlog_max``."""

    t_lo: float
    t_hi: float
    dlog_max: float = DLOG_MAX

    def __post_init__(self):
        if not 0 < self.t_lo < self.t_hi:
            raise ValueError("time grid needs 0 < t_lo < t_hi")

    @property
    def n(self) -> int:
        return max(1, int(np.ceil(np.log(self.t_hi / self.t_lo) / self.dlog_max - 1e-9)))

    @property
    def dlog(self) -> float:
        return float(np.log(self.t_hi / self.t_lo) / self.n)

    @property
    def nodes(self) -> np.ndarray:
        return self.t_lo * np.exp((np.arange(self.n) + 0.5) * self.dlog)

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n, self.dlog)

    def check_window(self, grid: Grid) -> None:
        """Raise unless ``h <= t_lo`` and ``t_hi <= S/8``."""
        if self.t_lo < grid.h * (1 - 1e-12) or self.t_hi > grid.S / 8 * (1 + 1e-12):
            raise ValueError(
                f"time grid [{self.t_lo:.4g}, {self.t_hi:.4g}] outside the window "
                f"[h={grid.h:.4g}, S/8={grid.S / 8:.4g}]"
            )


def window_grid(grid: Grid, t_lo: float | None = None, t_hi: float | None = None) -> TimeGrid:
    tg = TimeGrid(t_lo or grid.h, t_hi or grid.S / 8)
    tg.check_window(grid)
    return tg


# --- Fourier helpers ------------------------------------------------------


def frequencies(grid: Grid) -> np.ndarray:
    """Signed integer frequencies per axis (cycles per ``S``), shape ``(dim, N)`` in site order."""
    k = np.fft.fftfreq(grid.P, 1.0 / grid.P)
    mesh = np.meshgrid(*([k] * grid.dim), indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh])


def _fft(grid: Grid, f: np.ndarray) -> np.ndarray:
    return np.fft.fftn(np.reshape(f, grid.shape)).reshape(-1)


def _ifft(grid: Grid, F: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(np.reshape(F, grid.shape)).reshape(-1)


def apply_multiplier(grid: Grid, f: np.ndarray, m: np.ndarray) -> np.ndarray:
    out = _ifft(grid, m * _fft(grid, f))
    return out.real.copy() if np.isrealobj(f) and np.isrealobj(m) else out


def multiplier_matrix(grid: Grid, m: np.ndarray) -> np.ndarray:
    """Dense matrix of a Fourier multiplier."""
    eye = np.eye(grid.N)
    cols = np.fft.ifftn(m.reshape(grid.shape + (1,)) * np.fft.fftn(eye.reshape(grid.shape + (grid.N,)),
                                                                      axes=tuple(range(grid.dim))),
                        axes=tuple(range(grid.dim))).reshape(grid.N, grid.N)
    return cols.real.copy() if np.isrealobj(m) else cols


def convolve(grid: Grid, f: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """``(k * f)(x) = sum_y k(x - y) f(y) h^dim``; ``kernel`` indexed by displacement (site 0 = zero)."""
    out = _ifft(grid, _fft(grid, kernel) * _fft(grid, f)) * grid.cell_volume
    return out.real.copy() if np.isrealobj(f) and np.isrealobj(kernel) else out


def _offsets(grid: Grid) -> np.ndarray:
    """Minimal displacement of every site from site 0 (by index), shape ``(dim, N)``."""
    idx = grid.multi_index()
    return lattice._wrap_index(idx, grid.P) * grid.h


# --- mollifier and Littlewood-Paley filter --------------------------------


def cosine_bump(r: np.ndarray) -> np.ndarray:
    """``(1 + cos(pi r)) / 2`` on ``r < 1``: nonnegative, radial, decreasing."""
    return np.where(r < 1, 0.5 * (1 + np.cos(np.pi * np.minimum(r, 1))), 0.0)


@dataclass(frozen=True)
class Mollifier:
    grid: Grid
    profile: object = cosine_bump

    def kernel(self, t: float) -> np.ndarray:
        """``p_t``, renormalised to unit discrete mass, supported in the ball of radius ``t``."""
        if t <= 0:
            raise ValueError("mollifier scale must be positive")
        r = np.sqrt((_offsets(self.grid) ** 2).sum(axis=0)) / t
        k = self.profile(r)
        return k / (k.sum() * self.grid.cell_volume)

    def apply(self, f: np.ndarray, t: float) -> np.ndarray:
        return convolve(self.grid, f, self.kernel(t))

    def maximal_constant(self, t: float) -> float:
        """``c_p`` with ``|p_t * f| <= c_p M f`` pointwise.

        The support ball (diameter ``D`` sites) lies inside one dyadic or
        half-shifted cube of side ``b`` sites whenever ``D < b/2``; hence
        ``c_p = max(p_t) (b h)^dim``.
        """
        grid = self.grid
        k = self.kernel(t)
        D = 2 * int(np.floor(t / grid.h)) + 1
        b = 1
        while b <= 2 * D:
            b *= 2
        b = min(b, grid.P)
        return float(k.max() * (b * grid.h) ** grid.dim)


def calderon_constant(r: float) -> float:
    """``int_0^inf (e^{-a u^2} - e^{-a r^2 u^2})^2 du/u = ln((1 + r^2)^2 / (4 r^2)) / 2``."""
    return 0.5 * np.log((1 + r * r) ** 2 / (4 * r * r))


@dataclass(frozen=True)
class LPFilter:
    """Difference-of-Gaussians ``psi`` with ``psi^(xi) = c (e^{-2 pi^2 s1^2 xi^2} - e^{-2 pi^2 s2^2 xi^2})``.

    ``c`` makes the continuum Calderon integral ``int psi^(s xi)^2 ds/s``
    equal to 1; ``psi^(0) = 0`` gives exact zero mean.  The default widths
    (``s2 = 2 s1``, ``s1^2 = 2 ln 4 / 3``) put the peak of ``psi^(s .)`` at
    ``|xi| = 1/(2 pi s)``, where the symbol of ``t V_t`` for the Laplacian
    peaks when ``t = s``.
    """

    grid: Grid
    sigma1: float = SIGMA1
    sigma2: float = 2 * SIGMA1

    @property
    def c(self) -> float:
        return 1.0 / np.sqrt(calderon_constant(self.sigma2 / self.sigma1))

    def symbol(self, s: float) -> np.ndarray:
        xi2 = (frequencies(self.grid) ** 2).sum(axis=0) / self.grid.S**2
        a = 2 * np.pi**2 * s * s * xi2
        return self.c * (np.exp(-a * self.sigma1**2) - np.exp(-a * self.sigma2**2))

    def kernel(self, s: float) -> np.ndarray:
        """Real-space ``psi_s`` (zero discrete mean)."""
        return _ifft(self.grid, self.symbol(s)).real / self.grid.cell_volume

    def apply(self, f: np.ndarray, s: float) -> np.ndarray:
        return apply_multiplier(self.grid, f, self.symbol(s))

    def matrix(self, s: float) -> np.ndarray:
        return multiplier_matrix(self.grid, self.symbol(s))

    def calderon_sum(self, tgrid: TimeGrid) -> np.ndarray:
        """``sum_s psi^(s xi)^2 dlog s`` for every frequency (site order)."""
        return sum(dl * self.symbol(s) ** 2 for s, dl in zip(tgrid.nodes, tgrid.weights))

    def resolved_band(self, tgrid: TimeGrid, tol: float = 0.05) -> dict:
        """Frequencies where the discrete Calderon sum is within ``tol`` of 1."""
        cs = self.calderon_sum(tgrid)
        kn = np.sqrt((frequencies(self.grid) ** 2).sum(axis=0))
        ok = (np.abs(cs - 1) <= tol) & (kn > 0)
        return {
            "mask": ok,
            "k_min": float(kn[ok].min()) if ok.any() else np.nan,
            "k_max": float(kn[ok].max()) if ok.any() else np.nan,
            "max_error_in_band": float(np.abs(cs[ok] - 1).max()) if ok.any() else np.nan,
        }


# --- Riesz transforms, maximal function, dyadic averages ------------------


def riesz(grid: Grid, f: np.ndarray, j: int) -> np.ndarray:
    """``R_j``: multiplier ``-i xi_j / |xi|``, zero at ``xi = 0`` and on the Nyquist line of axis ``j``.

    Zeroing the Nyquist frequency keeps real input real (the multiplier there
    would be purely imaginary on a self-conjugate mode).
    """
    if not 0 <= j < grid.dim:
        raise ValueError(f"Riesz index j={j} outside [0, {grid.dim})")
    k = frequencies(grid)
    kn = np.sqrt((k**2).sum(axis=0))
    m = np.zeros(grid.N, dtype=complex)
    nz = (kn > 0) & (np.abs(k[j]) != grid.P // 2)
    m[nz] = -1j * k[j][nz] / kn[nz]
    out = _ifft(grid, m * _fft(grid, f))
    return out.real.copy() if np.isrealobj(f) else out


def maximal(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Dyadic plus half-shifted-dyadic maximal function of ``|f|``."""
    af = np.abs(np.asarray(f))
    out = np.zeros(grid.N)
    for k in range(grid.m + 1):
        for s in lattice.half_shifts(grid, k):
            avg = lattice.block_reduce(grid, af, k, s)
            np.maximum(out, lattice.block_broadcast(grid, avg, k, s), out=out)
    return out


def dyadic_avg(grid: Grid, f: np.ndarray, t: float) -> np.ndarray:
    """``A_t f(x)``: average over the dyadic cube ``Q_t(x)``."""
    k = lattice.level_for_scale(grid, t)
    return lattice.block_broadcast(grid, lattice.block_reduce(grid, np.asarray(f), k), k)


# --- square functions -------------------------------------------------------


@dataclass
class SFResult:
    value: float
    norm2: float
    per_t: np.ndarray = field(repr=False, default=None)

    @property
    def ratio(self) -> float:
        return self.value / self.norm2 if self.norm2 > 0 else 0.0


def _wsum(w: weights.Weight, u: np.ndarray) -> float:
    return float(np.sum(np.abs(u) ** 2 * w.values) * w.grid.cell_volume)


def vertical_sf(op: Operator, g: np.ndarray, tgrid: TimeGrid) -> SFResult:
    """``int int |t V_t g|^2 w dx dt/t`` and ``||g||^2_{L^2(w)}``."""
    w = op.weight
    if not op.eig_reliable:
        return vertical_sf_batch(op, [g], tgrid)[0]
    per = np.array([dl * _wsum(w, t * semigroup.vt_apply(op, t, g)) for t, dl in zip(tgrid.nodes, tgrid.weights)])
    return SFResult(float(per.sum()), _wsum(w, g), per)


def vertical_sf_batch(op: Operator, gs, tgrid: TimeGrid) -> list[SFResult]:
    """:func:`vertical_sf` for several functions, forming ``V_t`` once per node."""
    w = op.weight
    G = np.array(gs)
    per = np.zeros((len(G), tgrid.n))
    for i, (t, dl) in enumerate(zip(tgrid.nodes, tgrid.weights)):
        VG = G @ semigroup.vt_matrix(op, t).T
        for j in range(len(G)):
            per[j, i] = dl * _wsum(w, t * VG[j])
    return [SFResult(float(p.sum()), _wsum(w, g), p) for p, g in zip(per, G)]


def gfunction_sf(f: np.ndarray, filt: LPFilter, w: weights.Weight, tgrid: TimeGrid) -> SFResult:
    """``int int |psi_s * f|^2 w dx ds/s`` and ``||f||^2_{L^2(w)}``."""
    per = np.array([dl * _wsum(w, filt.apply(f, s)) for s, dl in zip(tgrid.nodes, tgrid.weights)])
    return SFResult(float(per.sum()), _wsum(w, f), per)


def pa_sf(f: np.ndarray, w: weights.Weight, tgrid: TimeGrid, moll: Mollifier | None = None) -> SFResult:
    """``int int |(P_t - A_t) f|^2 w dx dt/t`` with ``P_t f = p_t * f``."""
    grid = w.grid
    moll = moll or Mollifier(grid)
    per = np.array([
        dl * _wsum(w, moll.apply(f, t) - dyadic_avg(grid, f, t)) for t, dl in zip(tgrid.nodes, tgrid.weights)
    ])
    return SFResult(float(per.sum()), _wsum(w, f), per)


def taylor_sf(op: Operator, f: np.ndarray, moll: Mollifier | None, tgrid: TimeGrid) -> SFResult:
    """Square function of ``V_t`` applied to the first-order Taylor remainder.

    ``sum_y V_t(x,y) [f(y) - f(x) - (y - x).(p_t * grad f)(x)] h^dim``
    ``= V_t f - f V_t 1 - gamma_t . (p_t * grad f)``; the normaliser is
    ``||grad f||^2_{L^2(w)}``.
    """
    return taylor_sf_batch(op, [f], moll, tgrid)[0]


def taylor_sf_batch(op: Operator, fs, moll: Mollifier | None, tgrid: TimeGrid) -> list[SFResult]:
    """:func:`taylor_sf` for several functions, sharing ``V_t`` and ``gamma_t`` per node."""
    grid, w = op.grid, op.weight
    if tgrid.t_hi > grid.S / 8 * (1 + 1e-12):
        raise ValueError("taylor_sf needs t_hi <= S/8")
    moll = moll or Mollifier(grid)
    disp = lattice.disp_matrix(grid, symmetric=True)
    F = np.array(fs)  # (n_f, N)
    gfs = [lattice.grad(grid, f) for f in F]
    one = np.ones(grid.N)
    per = np.zeros((len(F), tgrid.n))
    for i, (t, dl) in enumerate(zip(tgrid.nodes, tgrid.weights)):
        V = semigroup.vt_matrix(op, t)
        gam = semigroup.displacement_moment(grid, V, disp)
        V1 = V @ one
        VF = F @ V.T
        for j, (f, gf) in enumerate(zip(F, gfs)):
            pg = np.stack([moll.apply(gf[k], t) for k in range(grid.dim)])
            r = VF[j] - f * V1 - np.sum(gam * pg, axis=0)
            per[j, i] = dl * _wsum(w, r)
    return [
        SFResult(float(p.sum()), weights.weighted_norm(f, w, "GradL2w") ** 2, p) for p, f in zip(per, F)
    ]


# --- operator-norm decay ----------------------------------------------------


@dataclass
class OpNormDecay:
    """Majorant ``||R_t Q_s|| <= K min(t/s, s/t)^alpha`` over a measured table."""

    K: float
    alpha: float
    table: list = field(default_factory=list, repr=False)

    def holds(self, tol: float = 1e-12) -> bool:
        return all(r["norm"] <= self.K * r["m"] ** self.alpha * (1 + tol) for r in self.table)


def opnorm_decay(op: Operator, filt: LPFilter, s_list, t_list) -> OpNormDecay:
    """Measure ``||(t V_t) Q_s||_{B(L^2(w))}`` exactly and fit ``(K, alpha)``.

    ``K`` is the largest measured norm; ``alpha`` the largest exponent for
    which ``K min(t/s, s/t)^alpha`` still majorises every off-diagonal pair.
    """
    table = []
    Qs = {s: filt.matrix(s) for s in s_list}
    for t in t_list:
        R = t * semigroup.vt_matrix(op, t)
        for s in s_list:
            table.append({"s": float(s), "t": float(t), "m": float(min(t / s, s / t)), "norm": op.w_opnorm(R @ Qs[s])})
    K = max(r["norm"] for r in table)
    off = [r for r in table if r["m"] < 1]
    alpha = min((np.log(r["norm"] / K) / np.log(r["m"]) for r in off), default=np.inf) if off else np.inf
    return OpNormDecay(float(K), float(alpha), table)
