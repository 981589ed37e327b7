"""Discrete degenerate elliptic operators ``L_w = -w^{-1} div A grad`` on the torus."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import lattice
from .lattice import Grid, div, grad  # noqa: F401  (re-exported)
from .weights import Weight

MAX_DENSE_SITES = 4096
# eigenbases worse conditioned than this are not used for exponentials/roots
MAX_EIG_COND = 1e4


class EllipticityError(ValueError):
    pass


class AssemblyError(RuntimeError):
    pass


# --- coefficient fields ---------------------------------------------------


@dataclass(frozen=True)
class EllipticField:
    """Per-site complex matrix ``A(x)`` (shape ``(N, dim, dim)``) with its weight."""

    grid: Grid
    A: np.ndarray = field(repr=False)
    weight: Weight = field(repr=False)
    lam: float = 1.0
    Lam: float = 1.0
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def normalized(self) -> np.ndarray:
        """``w(x)^{-1} A(x)``."""
        return self.A / self.weight.values[:, None, None]

    @property
    def is_hermitian(self) -> bool:
        return bool(np.allclose(self.A, np.conj(np.swapaxes(self.A, 1, 2)), rtol=0, atol=1e-14 * np.abs(self.A).max()))

    @property
    def is_real(self) -> bool:
        return not np.any(np.imag(self.A))

    def adjoint(self) -> "EllipticField":
        return EllipticField(
            self.grid, np.conj(np.swapaxes(self.A, 1, 2)).copy(), self.weight,
            self.lam, self.Lam, self.kind + "*", self.params,
        )

    def validate(self, tol: float = 1e-12) -> None:
        c = ellipticity_constants(self)
        if not (c.lam > 0 and c.lam >= self.lam - tol and c.Lam <= self.Lam + tol):
            raise EllipticityError(
                f"field {self.kind!r} violates the declared bounds: measured "
                f"lambda={c.lam:.6g} (declared {self.lam}), Lambda={c.Lam:.6g} (declared {self.Lam})"
            )


class Ellipticity(NamedTuple):
    lam: float
    Lam: float

    @property
    def valid(self) -> bool:
        return self.lam > 0 and self.Lam < np.inf


def ellipticity_constants(fld: EllipticField) -> Ellipticity:
    """Exact per-site extremes: min eigenvalue of the Hermitian part of ``w^{-1}A``
    and max operator norm of ``w^{-1}A``, over all sites."""
    B = fld.normalized()
    herm = (B + np.conj(np.swapaxes(B, 1, 2))) / 2
    lam = np.linalg.eigvalsh(herm).min()
    Lam = np.linalg.norm(B, ord=2, axis=(1, 2)).max()
    return Ellipticity(float(lam), float(Lam))


def _smooth_modes(grid: Grid, n: int) -> np.ndarray:
    """``n`` fixed smooth periodic scalar fields in [-1, 1], shape ``(n, N)``."""
    x = grid.coords() / grid.S * 2 * np.pi
    out = []
    for j in range(n):
        phase = 0.7 * (j + 1)
        s = np.sin((j % 3 + 1) * x[0] + phase)
        if grid.dim == 2:
            s = 0.5 * s + 0.5 * np.cos(((j + 1) % 3 + 1) * x[1] - phase + 0.3 * np.sin(x[0]))
        out.append(s)
    return np.array(out)


def _clamp_eigs(B: np.ndarray, lo: float, hi: float) -> np.ndarray:
    vals, vecs = np.linalg.eigh(B)
    vals = np.clip(vals, lo, hi)
    return np.einsum("nij,nj,nkj->nik", vecs, vals, vecs)


def make_field(grid: Grid, w: Weight, kind: str = "identity", **params) -> EllipticField:
    """Build a coefficient field from a named family.

    ``identity``: ``A = w I``.
    ``real_symmetric``: ``A = w (I + amp * B)`` with ``B`` smooth symmetric,
    eigenvalues clamped to ``[lam, Lam]`` (defaults amp=0.6, lam=0.5, Lam=2).
    ``complex_perturbation``: ``A = w (I + kappa * B)`` with ``B`` smooth
    and unitary at every site, so ``lam = 1 - kappa`` and ``Lam = 1 + kappa``.
    """
    d, N = grid.dim, grid.N
    eye = np.broadcast_to(np.eye(d), (N, d, d))
    if kind == "identity":
        B, lam, Lam = eye.astype(complex), 1.0, 1.0
    elif kind == "real_symmetric":
        amp = float(params.get("amp", 0.6))
        lam, Lam = float(params.get("lam", 0.5)), float(params.get("Lam", 2.0))
        if not 0 < lam <= 1 <= Lam:
            raise EllipticityError("real_symmetric needs 0 < lam <= 1 <= Lam")
        modes = _smooth_modes(grid, 3)
        S = np.zeros((N, d, d))
        S[:, 0, 0] = modes[0]
        if d == 2:
            S[:, 1, 1] = modes[1]
            S[:, 0, 1] = S[:, 1, 0] = 0.8 * modes[2]
        B = _clamp_eigs(eye + amp * S, lam, Lam).astype(complex)
    elif kind == "complex_perturbation":
        kappa = float(params.get("kappa", 0.3))
        if not 0 <= kappa < 1:
            raise EllipticityError(f"kappa={kappa} outside [0, 1)")
        x = grid.coords() / grid.S * 2 * np.pi
        theta = x[0] + 0.7 * np.sin(2 * x[0])
        if d == 1:
            U = np.exp(1j * theta)[:, None, None]
        else:
            theta = theta + 0.5 * np.cos(x[1])
            phi = 0.9 * np.sin(x[0] + x[1])
            c, s = np.cos(phi), np.sin(phi)
            U = np.exp(1j * theta)[:, None, None] * np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
        B, lam, Lam = eye + kappa * U, 1.0 - kappa, 1.0 + kappa
    else:
        raise ValueError(f"unknown field family {kind!r}; known: {sorted(FIELD_FAMILIES)}")
    A = np.ascontiguousarray(w.values[:, None, None] * B)
    fld = EllipticField(grid, A, w, lam, Lam, kind, dict(params))
    fld.validate()
    return fld


FIELD_FAMILIES = ("identity", "real_symmetric", "complex_perturbation")


# --- assembly -------------------------------------------------------------


def _shift_matrix(grid: Grid, k: int, s: int = 1) -> sp.csr_matrix:
    """``(S f)(x) = f(x + s e_k)``."""
    cols = lattice.shifted(grid, np.arange(grid.N), k, s)
    return sp.csr_matrix((np.ones(grid.N), (np.arange(grid.N), cols)), shape=(grid.N, grid.N))


def grad_matrix(grid: Grid) -> sp.csr_matrix:
    eye = sp.identity(grid.N, format="csr")
    return sp.vstack([(_shift_matrix(grid, k) - eye) / grid.h for k in range(grid.dim)]).tocsr()


def flux_matrix(fld: EllipticField) -> sp.csr_matrix:
    """Edge-to-edge coefficient map ``M`` with ``a(f, g) = (M grad f) . conj(grad g) h^dim``.

    Diagonal entries of ``A`` are averaged onto edge midpoints; an off-diagonal
    coupling ``A_kl`` acts on the ``l``-component averaged back to sites and is
    averaged forward onto ``k``-edges.
    """
    grid, A = fld.grid, fld.A
    d, N = grid.dim, grid.N
    eye = sp.identity(N, format="csr")
    blocks = [[None] * d for _ in range(d)]
    for k in range(d):
        blocks[k][k] = sp.diags(lattice.edge_average(grid, A[:, k, k])[k])
    for k in range(d):
        to_edge = (eye + _shift_matrix(grid, k, 1)) / 2
        for l in range(d):
            if l == k or not np.any(A[:, k, l]):
                continue
            to_site = (eye + _shift_matrix(grid, l, -1)) / 2
            blocks[k][l] = to_edge @ sp.diags(A[:, k, l]) @ to_site
    return sp.bmat(blocks, format="csr")


@dataclass
class Operator:
    """Dense ``L_w`` with cached eigendecomposition ``L_w = V diag(mu) V^{-1}``."""

    grid: Grid
    weight: Weight = field(repr=False)
    matrix: np.ndarray = field(repr=False)
    eigvals: np.ndarray = field(repr=False)
    V: np.ndarray = field(repr=False)
    Vinv: np.ndarray = field(repr=False)
    hermitian: bool = False
    real: bool = False
    fld: EllipticField | None = field(default=None, repr=False)
    flux: sp.csr_matrix | None = field(default=None, repr=False)
    v_cond: float = 1.0

    @property
    def N(self) -> int:
        return self.grid.N

    @property
    def eig_reliable(self) -> bool:
        """Whether ``V diag(phi(mu)) V^{-1}`` is accurate (Hermitian or well-conditioned ``V``)."""
        return self.hermitian or self.v_cond <= MAX_EIG_COND

    def exp_matrix(self, t: float) -> np.ndarray:
        """``exp(-t L_w)``: spectral when the eigenbasis is reliable, Pade
        scaling-and-squaring otherwise (near-degenerate +-k pairs make the
        eigenvectors of non-normal ``L_w`` badly conditioned)."""
        if self.eig_reliable:
            return self.function(lambda mu: np.exp(-t * mu))
        return self._cast(sla.expm(-t * self.matrix))

    def apply(self, f: np.ndarray) -> np.ndarray:
        return self.matrix @ f

    def _cast(self, M: np.ndarray) -> np.ndarray:
        return M.real.copy() if self.real else M

    def function(self, phi: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Dense matrix of ``phi(L_w)`` through the eigendecomposition."""
        return self._cast((self.V * phi(self.eigvals)[None, :]) @ self.Vinv)

    def apply_function(self, phi: Callable[[np.ndarray], np.ndarray], f: np.ndarray) -> np.ndarray:
        out = self.V @ (phi(self.eigvals)[:, None] * (self.Vinv @ np.reshape(f, (self.N, -1))))
        out = out.reshape(np.shape(f))
        return out.real.copy() if self.real and np.isrealobj(f) else out

    def inner(self, f, g) -> complex:
        return complex(np.sum(f * np.conj(g) * self.weight.values) * self.grid.cell_volume)

    def norm(self, f) -> float:
        return float(np.sqrt(np.sum(np.abs(f) ** 2 * self.weight.values) * self.grid.cell_volume))

    def form(self, f, g) -> complex:
        """``a(f, g)`` evaluated from the flux map, independently of the dense matrix."""
        gf = lattice.grad(self.grid, f).reshape(-1)
        gg = lattice.grad(self.grid, g).reshape(-1)
        return complex(np.sum((self.flux @ gf) * np.conj(gg)) * self.grid.cell_volume)

    def w_adjoint_of(self, B: np.ndarray) -> np.ndarray:
        """Adjoint of a matrix ``B`` in the ``L^2(w)`` inner product: ``W^{-1} B^H W``."""
        w = self.weight.values
        return (np.conj(B.T) * w[None, :]) / w[:, None]

    def w_opnorm(self, B: np.ndarray) -> float:
        """Operator norm of ``B`` on ``L^2(w)``: largest singular value of ``W^{1/2} B W^{-1/2}``."""
        s = np.sqrt(self.weight.values)
        return float(np.linalg.norm(s[:, None] * B / s[None, :], 2))

    def edge_constants(self) -> tuple[float, float]:
        """Exact discrete ellipticity of the flux map relative to edge-averaged weights.

        Returns ``(lam_edge, Lam_edge)``: the least eigenvalue of the Hermitian
        part and the norm of ``W_e^{-1/2} M W_e^{-1/2}``, so that
        ``lam_edge ||grad f||^2 <= Re a(f, f) <= Lam_edge ||grad f||^2`` in the
        edge-weighted norm.
        """
        we = self.weight.edge_values().reshape(-1)
        s = 1.0 / np.sqrt(we)
        B = sp.diags(s) @ self.flux @ sp.diags(s)
        if (B - sp.diags(B.diagonal())).count_nonzero() == 0:
            dg = B.diagonal()
            return float(dg.real.min()), float(np.abs(dg).max())
        n = B.shape[0]
        H = (B + B.conj().T) / 2
        if n <= 2048:
            Bd = B.toarray()
            return float(np.linalg.eigvalsh(H.toarray()).min()), float(np.linalg.norm(Bd, 2))
        lo = spla.eigsh(H, k=1, which="SA", return_eigenvectors=False)[0]
        hi = spla.svds(B, k=1, return_singular_vectors=False)[0]
        return float(lo), float(hi)

    def smallest_nonzero(self) -> float:
        mags = np.abs(self.eigvals)
        return float(mags[mags > 0].min())

    def dump(self, path) -> None:
        """Plain-text matrix dump (real and imaginary parts) for debugging."""
        M = np.asarray(self.matrix)
        np.savetxt(path, np.hstack([M.real, M.imag]) if np.iscomplexobj(M) else M, fmt="%.17g")


def _spectral(grid: Grid, w: Weight, K: np.ndarray, hermitian: bool):
    wv = w.values
    if hermitian:
        s = 1.0 / np.sqrt(wv)
        Hm = s[:, None] * K * s[None, :]
        Hm = (Hm + np.conj(Hm.T)) / 2
        mu, U = np.linalg.eigh(Hm)
        V = s[:, None] * U
        Vinv = np.conj(U.T) * np.sqrt(wv)[None, :]
        mu = mu.astype(complex)
    else:
        mu, V = sla.eig(K / wv[:, None])
        Vinv = np.linalg.inv(V)
    scale = np.abs(mu).max()
    tiny = np.abs(mu) <= 1e-10 * scale
    mu = np.where(tiny, 0.0, mu)
    if hermitian:
        cond = float(np.sqrt(wv.max() / wv.min()))
    else:
        cond = float(np.linalg.cond(V))
    return mu, V, Vinv, cond


def assemble(fld: EllipticField, check: bool = True) -> Operator:
    """Assemble ``L_w f = -w^{-1} div(M grad f)`` and cache its spectrum."""
    grid, w = fld.grid, fld.weight
    if grid.N > MAX_DENSE_SITES:
        raise AssemblyError(f"dense assembly limited to N <= {MAX_DENSE_SITES} sites (got {grid.N})")
    G = grad_matrix(grid)
    M = flux_matrix(fld)
    K = (G.T @ M @ G).toarray()
    hermitian = fld.is_hermitian
    real = fld.is_real
    if real:
        K = K.real
    L = K / w.values[:, None]
    mu, V, Vinv, cond = _spectral(grid, w, K, hermitian)
    op = Operator(grid, w, L, mu, V, Vinv, hermitian, real, fld, M, cond)
    if check:
        rng = np.random.Generator(np.random.Philox(12345))
        for _ in range(2):
            f = rng.standard_normal(grid.N) + 1j * rng.standard_normal(grid.N)
            g = rng.standard_normal(grid.N) + 1j * rng.standard_normal(grid.N)
            r = form_identity_check(op, f, g, relative=True)
            if r > 1e-10:
                raise AssemblyError(f"form identity residual {r:.3g} exceeds 1e-10")
        if np.min(mu.real) < -1e-9 * np.abs(mu).max():
            raise AssemblyError("assembled operator has eigenvalues with negative real part")
    return op


def form_identity_check(op: Operator, f, g, relative: bool = False) -> float:
    """``|a(f, g) - <L_w f, g>_w|``; with ``relative=True`` divided by
    ``sqrt(|a(f,f)| |a(g,g)|)`` (when nonzero)."""
    a = op.form(f, g)
    b = op.inner(op.apply(f), g)
    r = abs(a - b)
    if relative:
        scale = np.sqrt(abs(op.form(f, f)) * abs(op.form(g, g)))
        if scale > 0:
            r /= scale
    return float(r)


def adjoint(op: Operator) -> Operator:
    """The ``L^2(w)``-adjoint, assembled from the conjugate-transposed field."""
    if op.fld is None:
        raise ValueError("adjoint needs an operator assembled from a field")
    return assemble(op.fld.adjoint())
