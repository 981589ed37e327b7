"""Square roots of ``L_w``: spectral oracle, heat-semigroup quadrature, Kato ratios."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import weights
from .operator import Operator, adjoint

C_NORM = 8 * np.sqrt(2) / np.sqrt(np.pi)


class SpectrumError(ValueError):
    pass


class QuadratureSpanError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureScheme:
    """Midpoint rule in ``log t`` for ``int_0^inf . dt/t`` on ``[t_min, t_max]``."""

    t_min: float
    t_max: float
    M: int = 200
    c_norm: float = C_NORM

    def __post_init__(self):
        if not 0 < self.t_min < self.t_max:
            raise ValueError("quadrature needs 0 < t_min < t_max")
        if self.M < 16:
            raise ValueError("quadrature needs at least 16 nodes")

    @property
    def dlog(self) -> float:
        return float(np.log(self.t_max / self.t_min) / self.M)

    @property
    def nodes(self) -> np.ndarray:
        return self.t_min * np.exp((np.arange(self.M) + 0.5) * self.dlog)

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.M, self.dlog)

    def multiplier(self, mu: np.ndarray) -> np.ndarray:
        """The scalar function the scheme applies to each eigenvalue."""
        t = self.nodes[:, None]
        mu = np.asarray(mu)[None, :]
        return self.c_norm * np.sum(self.dlog * t**3 * np.exp(-2 * t * t * mu) * mu**2, axis=0)


def scheme_for(op: Operator, M: int = 200, lo_factor: float = 1e-4, hi_factor: float = 10.0) -> QuadratureScheme:
    """Scheme spanning the spectrum of ``op``.

    ``t_min = lo_factor / sqrt(mu_max)``: the integrand near ``t = 0`` behaves
    like ``(t^2 mu)^2``, so the truncation error is ``O(lo_factor^4)``; the
    default puts it below round-off.
    """
    mags = np.abs(op.eigvals)
    mu_max = float(mags.max())
    mu_min = op.smallest_nonzero()
    return QuadratureScheme(lo_factor / np.sqrt(mu_max), hi_factor / np.sqrt(mu_min), M)


def _check_span(op: Operator, scheme: QuadratureScheme) -> None:
    mags = np.abs(op.eigvals)
    lo = 0.1 / np.sqrt(mags.max())
    hi = 10 / np.sqrt(op.smallest_nonzero())
    if scheme.t_min > lo * (1 + 1e-12) or scheme.t_max < hi * (1 - 1e-12):
        raise QuadratureSpanError(
            f"scheme [{scheme.t_min:.4g}, {scheme.t_max:.4g}] does not span the spectrum; "
            f"need t_min <= {lo:.4g} and t_max >= {hi:.4g}"
        )


def spectral_sqrt(op: Operator) -> Operator:
    """Principal square root.

    Uses the cached eigendecomposition when it is reliable and the Schur
    method (``scipy.linalg.sqrtm``) otherwise; the returned operator keeps
    ``sqrt(mu)`` as its eigenvalues.
    """
    mu = op.eigvals
    scale = max(float(np.abs(mu).max()), 1e-300)
    if np.min(mu.real) < -1e-12 * scale:
        raise SpectrumError(f"eigenvalue with real part {np.min(mu.real):.3g} < 0: no principal root")
    mu = np.where(mu.real < 0, 1j * mu.imag, mu)
    root = np.sqrt(mu.astype(complex))
    if op.eig_reliable:
        R = (op.V * root[None, :]) @ op.Vinv
    else:
        R = np.asarray(sla.sqrtm(op.matrix))
    if op.real:
        R = R.real.copy()
    return dataclasses.replace(op, matrix=R, eigvals=root, fld=None, flux=None)


def quadrature_sqrt_apply(op: Operator, f: np.ndarray, scheme: QuadratureScheme | None = None,
                          check_span: bool = True) -> np.ndarray:
    """``c_norm sum_k dlog t_k^3 exp(-2 t_k^2 L) L^2 f`` over the scheme's nodes."""
    from .semigroup import heat_apply

    scheme = scheme or scheme_for(op)
    if check_span:
        _check_span(op, scheme)
    L2f = op.apply(op.apply(f))
    out = np.zeros_like(L2f, dtype=complex if np.iscomplexobj(L2f) or not op.real else float)
    for t, dl in zip(scheme.nodes, scheme.weights):
        out = out + dl * t**3 * heat_apply(op, 2 * t * t, L2f)
    return scheme.c_norm * out


def roundoff_floor(op: Operator, f: np.ndarray, scheme: QuadratureScheme, ref: np.ndarray) -> float:
    """Relative error floor of :func:`quadrature_sqrt_apply` from round-off.

    Each node applies a dense matrix to ``L^2 f``; the standard forward
    bound for an ``N``-term inner product gives an error of at most about
    ``N eps ||L^2 f||`` per node, and the weights ``c dlog t^3`` accumulate
    it.  ``ref`` is the exact ``L^{1/2} f``.  Below this level doubling the
    node count cannot reduce the observed error.
    """
    L2f = op.apply(op.apply(f))
    acc = scheme.c_norm * float(np.sum(scheme.weights * scheme.nodes**3))
    return float(np.finfo(float).eps * op.grid.N * acc * op.norm(L2f) / max(op.norm(ref), 1e-300))


def w_mean(f: np.ndarray, w: weights.Weight) -> complex:
    return complex(np.sum(f * w.values) / np.sum(w.values))


def center(f: np.ndarray, w: weights.Weight) -> np.ndarray:
    """Subtract the ``w``-weighted mean."""
    m = w_mean(f, w)
    return f - (m.real if np.isrealobj(f) else m)


def kato_ratio(op: Operator, f: np.ndarray, root: Operator | None = None) -> float:
    """``||L^{1/2} f||_{L^2(w)} / ||grad f||_{L^2(w)}`` with the edge-weighted gradient norm."""
    g = weights.weighted_norm(f, op.weight, "GradL2w", edge=True)
    if g == 0:
        raise ValueError("Kato ratio undefined for constant f")
    root = root or spectral_sqrt(op)
    f = center(f, op.weight)
    return op.norm(root.apply(f)) / g


@dataclass
class KatoReport:
    ratios: np.ndarray
    ids: list = field(default_factory=list)
    P: int = 0

    @property
    def min(self) -> float:
        return float(self.ratios.min())

    @property
    def max(self) -> float:
        return float(self.ratios.max())


def kato_report(op: Operator, fs, ids=None) -> KatoReport:
    root = spectral_sqrt(op)
    r = np.array([kato_ratio(op, f, root) for f in fs])
    return KatoReport(r, list(ids) if ids is not None else list(range(len(r))), op.grid.P)


@dataclass
class DualityChain:
    """Signed slacks of the chain ``||grad f||^2 <= lam^-1 Re a(f,f) = ... <= ...``.

    Nonnegative slack means the link holds; identities carry ``-|residual|``.
    All entries are relative to ``a_scale = |a(f, f)|``.
    """

    ellipticity: float
    form: float
    factorisation: float
    cauchy_schwarz: float
    root_adjoint_distance: float
    a_scale: float

    def as_list(self) -> list[float]:
        return [self.ellipticity, self.form, self.factorisation, self.cauchy_schwarz]


def duality_chain_check(op: Operator, f: np.ndarray, op_star: Operator | None = None) -> DualityChain:
    """Verify each link of the reduction from the Kato estimate to its half.

    (a) ``lam_edge ||grad f||^2 <= Re a(f, f)``;
    (b) ``Re a(f, f) = Re <L f, f>_w``;
    (c) ``<L f, f>_w = <L^{1/2} f, (L^{1/2})^* f>_w``;
    (d) ``|<L^{1/2} f, (L^{1/2})^* f>| <= ||L^{1/2} f|| ||(L^*)^{1/2} f||``.
    Also returns the relative operator distance between ``(L^{1/2})^*`` and
    ``(L^*)^{1/2}``.
    """
    w = op.weight
    lam_e, _ = op.edge_constants()
    op_star = op_star or adjoint(op)
    root = spectral_sqrt(op)
    root_star = spectral_sqrt(op_star)

    a = op.form(f, f)
    scale = max(abs(a), 1e-300)
    g2 = weights.weighted_norm(f, w, "GradL2w", edge=True) ** 2
    s_a = (a.real - lam_e * g2) / scale
    s_b = -abs(a.real - op.inner(op.apply(f), f).real) / scale
    Rf = root.apply(f)
    Rsf = root_star.apply(f)
    s_c = -abs(op.inner(op.apply(f), f) - op.inner(Rf, Rsf)) / scale
    s_d = (op.norm(Rf) * op.norm(Rsf) - abs(op.inner(Rf, Rsf))) / scale

    adj_of_root = op.w_adjoint_of(root.matrix)
    dist = op.w_opnorm(adj_of_root - root_star.matrix) / max(op.w_opnorm(root_star.matrix), 1e-300)
    return DualityChain(float(s_a), float(s_b), float(s_c), float(s_d), float(dist), float(scale))
