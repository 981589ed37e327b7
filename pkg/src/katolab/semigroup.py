"""Heat semigroup ``exp(-t L_w)``, its kernels, Gaussian-bound fits, and ``gamma_t``."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import lattice
from .operator import Operator


@dataclass
class HeatKernel:
    """``K[i, j] = [exp(-t L_w)]_{ij} / h**dim``."""

    t: float
    K: np.ndarray = field(repr=False)
    cell_volume: float = 1.0

    def conservation_residual(self) -> float:
        return float(np.abs(self.K.sum(axis=1) * self.cell_volume - 1).max())


@dataclass
class VtKernel:
    """``V[i, j] = [-2t L_w exp(-t^2 L_w)]_{ij} / h**dim``."""

    t: float
    V: np.ndarray = field(repr=False)
    cell_volume: float = 1.0

    def moment_residual(self) -> float:
        """Zero-moment residual, scaled by the kernel's row mass."""
        rows = self.V * self.cell_volume
        return float(np.abs(rows.sum(axis=1)).max() / max(np.abs(rows).sum(axis=1).max(), 1e-300))


def heat_apply(op: Operator, t: float, f: np.ndarray, method: str = "spectral") -> np.ndarray:
    """``exp(-t L_w) f``; ``method`` is ``spectral`` or ``scaling_squaring`` (Pade)."""
    if t < 0:
        raise ValueError("heat_apply needs t >= 0")
    if t == 0:
        return np.array(f, copy=True)
    if method == "spectral":
        if not op.eig_reliable:
            return _cast_like(op, op.exp_matrix(t) @ f, f)
        return op.apply_function(lambda mu: np.exp(-t * mu), f)
    if method == "scaling_squaring":
        out = sla.expm(-t * op.matrix) @ f
        return out.real if op.real and np.isrealobj(f) else out
    raise ValueError(f"unknown method {method!r}")


def _cast_like(op: Operator, out: np.ndarray, f) -> np.ndarray:
    return out.real.copy() if op.real and np.isrealobj(f) else out


def heat_matrix(op: Operator, t: float) -> np.ndarray:
    return op.exp_matrix(t)


def vt_matrix(op: Operator, t: float) -> np.ndarray:
    if op.eig_reliable:
        return op.function(lambda mu: -2 * t * mu * np.exp(-t * t * mu))
    return -2 * t * (op.matrix @ op.exp_matrix(t * t))


def heat_kernel(op: Operator, t: float) -> HeatKernel:
    if t <= 0:
        raise ValueError("heat kernel needs t > 0")
    dv = op.grid.cell_volume
    return HeatKernel(t, heat_matrix(op, t) / dv, dv)


def vt_kernel(op: Operator, t: float) -> VtKernel:
    if t <= 0:
        raise ValueError("V_t kernel needs t > 0")
    dv = op.grid.cell_volume
    return VtKernel(t, vt_matrix(op, t) / dv, dv)


def vt_apply(op: Operator, t: float, g: np.ndarray) -> np.ndarray:
    if op.eig_reliable:
        return op.apply_function(lambda mu: -2 * t * mu * np.exp(-t * t * mu), g)
    return _cast_like(op, -2 * t * (op.matrix @ (op.exp_matrix(t * t) @ g)), g)


# --- gamma_t ----------------------------------------------------------------


def displacement_moment(grid, Kmat: np.ndarray, disp: np.ndarray | None = None) -> np.ndarray:
    """``-sum_j Kmat[i, j] disp(i, j)`` for a matrix acting on grid functions.

    The antipodal displacement is zeroed so that even kernels have exactly
    vanishing first moment.
    """
    if disp is None:
        disp = lattice.disp_matrix(grid, symmetric=True)
    return -np.einsum("ij,kij->ki", Kmat, disp)


def gamma_t(op: Operator, t: float, disp: np.ndarray | None = None) -> np.ndarray:
    """``gamma_t(x) = -sum_y V_t(x, y) (x - y) h^dim``, shape ``(dim, N)``."""
    if not 0 < t <= op.grid.S / 8:
        raise ValueError(f"gamma_t needs 0 < t <= S/8 = {op.grid.S / 8} (got {t})")
    return displacement_moment(op.grid, vt_matrix(op, t), disp)


# --- Gaussian bound fits ----------------------------------------------------


@dataclass
class DecayFit:
    C1: float
    C2: float
    mu: float
    alpha: float
    t_window: tuple[float, float]
    rows: list[dict] = field(default_factory=list, repr=False)
    vt: dict = field(default_factory=dict, repr=False)
    min_log_slack: float = 0.0
    n_samples: int = 0


def trust_window(grid) -> tuple[float, float]:
    """Heat-time window ``[4 h^2, (S/8)^2]``."""
    return 4 * grid.h**2, (grid.S / 8) ** 2


def _samples(Kd: np.ndarray, dist: np.ndarray, dmax: float, floor: float):
    peak = np.abs(Kd).max()
    return (dist <= dmax) & (np.abs(Kd) >= floor * peak)


def _holder_diff(grid, Kd: np.ndarray) -> np.ndarray:
    """Worst nearest-neighbour Holder difference per pair, over ``h = +-h e_k``.

    ``|K(x+h, y) - K(x, y)| + |K(x, y+h) - K(x, y)|`` maximised over the
    ``2 dim`` shifts.
    """
    N = grid.N
    idx = np.arange(N)
    best = np.zeros_like(Kd, dtype=float)
    for k in range(grid.dim):
        for s in (1, -1):
            nb = lattice.shifted(grid, idx, k, s)
            dx = np.abs(Kd[nb, :] - Kd)
            dy = np.abs(Kd[:, nb] - Kd)
            np.maximum(best, dx + dy, out=best)
    return best


def _envelope_rate(y: np.ndarray, u: np.ndarray) -> tuple[float, float]:
    """Peak-anchored envelope ``y <= log C1 - C2 u``.

    With ``y*`` the sample maximum and ``u*`` the largest ``u`` attaining it,
    ``C2`` is the least decay slope beyond ``u*`` and ``C1 = exp(y* + C2 u*)``.
    Samples with ``u <= u*`` lie below ``y*`` and are majorised automatically.
    For kernels peaked on the diagonal (``u* = 0``) this is the envelope
    through the peak.
    """
    ymax = y.max()
    ustar = float(u[y >= ymax - 1e-12 * max(1.0, abs(ymax))].max())
    far = u > ustar
    C2 = float(np.min((ymax - y[far]) / (u[far] - ustar))) if far.any() else 0.0
    return C2, float(np.exp(ymax + C2 * ustar))


def _holder_exponent(ratio: np.ndarray, r: np.ndarray, cap: float, ladder: np.ndarray):
    """Largest exponent on ``ladder`` with ``ratio <= cap * r**e`` everywhere."""
    best = (0.0, float(np.max(ratio)))
    lr = np.log(r)
    lq = np.log(np.maximum(ratio, 1e-300))
    for e in ladder:
        c = float(np.exp(np.max(lq - e * lr)))
        if c <= cap:
            best = (float(e), c)
    return best


def gaussian_fit(
    op: Operator,
    t_list,
    dmax_frac: float = 0.25,
    floor: float = 1e-3,
    holder_cap: float = 4.0,
) -> DecayFit:
    """Majorant fit of the Gaussian and Holder bounds for ``W_t`` and ``V_t``.

    Samples are pairs at torus distance ``<= dmax_frac * S`` whose kernel
    magnitude is at least ``floor`` times the peak (the resolved core: beyond
    it the lattice kernel is no longer Gaussian).  For each ``t`` the largest
    rate ``C2_t`` whose envelope through the diagonal peak majorises all
    samples is found (anchored at the kernel's peak, see
    :func:`_envelope_rate`); the window-uniform ``C2`` is their minimum and ``C1`` the
    least prefactor making ``C1 t^{-n/2} exp(-C2 d^2/t)`` a majorant for every
    ``t``.  The Holder exponent ``mu`` is the largest value on a 0.05 ladder
    for which nearest-neighbour differences are majorised with prefactor
    ``<= holder_cap * C1`` and rate ``C2 / 2``.  ``V_t`` is treated the same
    way with ``t -> sqrt(t)`` (its time variable is a length).
    """
    grid = op.grid
    lo, hi = trust_window(grid)
    ts = np.asarray(sorted(t_list), dtype=float)
    ts = ts[(ts >= lo * (1 - 1e-12)) & (ts <= hi * (1 + 1e-12))]
    if ts.size == 0:
        raise ValueError(f"no t inside the trust window [{lo:.3g}, {hi:.3g}]")
    n = grid.dim
    disp = lattice.disp_matrix(grid)
    dist = np.sqrt((disp**2).sum(axis=0))
    dmax = dmax_frac * grid.S
    ladder = np.round(np.arange(0.05, 1.0001, 0.05), 10)

    def fit(kernels, scale_pow, time_of):
        per = []
        for t, Kd in kernels:
            tau = time_of(t)  # heat-time equivalent: d^2/tau in the exponent
            m = _samples(Kd, dist, dmax, floor)
            y = np.log(np.maximum(np.abs(Kd[m]), 1e-300) * tau**scale_pow)
            u = dist[m] ** 2 / tau
            C2t, C1t = _envelope_rate(y, u)
            per.append((t, tau, Kd, m, C2t, C1t))
        C2 = min(p[4] for p in per)
        C1 = 0.0
        slack = np.inf
        for t, tau, Kd, m, *_ in per:
            y = np.log(np.maximum(np.abs(Kd[m]), 1e-300) * tau**scale_pow)
            u = dist[m] ** 2 / tau
            C1 = max(C1, float(np.exp(np.max(y + C2 * u))))
        for t, tau, Kd, m, *_ in per:
            y = np.log(np.maximum(np.abs(Kd[m]), 1e-300) * tau**scale_pow)
            u = dist[m] ** 2 / tau
            slack = min(slack, float(np.min(np.log(C1) - C2 * u - y)))
        # Holder
        ratios, rs = [], []
        for t, tau, Kd, m, *_ in per:
            D = _holder_diff(grid, Kd)[m]
            u = dist[m] ** 2 / tau
            # ratio D / (C1 tau^-p exp(-C2 u / 2)), in logs to avoid overflow
            lg = np.log(np.maximum(D, 1e-300)) + scale_pow * np.log(tau) + 0.5 * C2 * u - np.log(C1)
            ratios.append(np.exp(np.minimum(lg, 700)))
            rs.append(grid.h / (np.sqrt(tau) + dist[m]))
        expo, cH = _holder_exponent(np.concatenate(ratios), np.concatenate(rs), holder_cap, ladder)
        return per, C1, C2, slack, expo, cH

    Wk = [(t, heat_matrix(op, t) / grid.cell_volume) for t in ts]
    per, C1, C2, slack, mu, cH = fit(Wk, n / 2, lambda t: t)
    rows = [{"t": t, "C1_t": c1, "C2_t": c2} for t, _, _, _, c2, c1 in per]
    nsamp = int(sum(p[3].sum() for p in per))
    del Wk

    sts = np.sqrt(ts)
    Vk = [(s, vt_matrix(op, s) / grid.cell_volume) for s in sts]
    vper, vC1, vC2, vslack, alpha, vcH = fit(Vk, (n + 1) / 2, lambda s: s * s)
    vt = {
        "C1": vC1, "C2": vC2, "alpha": alpha, "holder_prefactor": vcH,
        "rows": [{"t": s, "C1_t": c1, "C2_t": c2} for s, _, _, _, c2, c1 in vper],
        "min_log_slack": vslack,
    }
    vt["heat_holder_prefactor"] = cH
    return DecayFit(
        C1=C1, C2=C2, mu=mu, alpha=alpha, t_window=(float(ts[0]), float(ts[-1])),
        rows=rows, vt=vt, min_log_slack=slack, n_samples=nsamp,
    )
