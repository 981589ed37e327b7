"""Periodic grid geometry, dyadic cube hierarchy and torus displacements.

Sites are cell centres ``(idx + 1/2) * h`` on a periodic lattice with
``P = 2**m`` points per side.  Site arrays are flat, in C order over the
multi-index ``(i_0, ..., i_{dim-1})``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

MAX_LEVELS = {1: 12, 2: 7}


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    dim: int
    m: int
    S: float = 1.0

    def __post_init__(self):
        if self.dim not in MAX_LEVELS:
            raise GridError(f"dim={self.dim} unsupported: only 1 or 2 space dimensions")
        hi = MAX_LEVELS[self.dim]
        if not 3 <= self.m <= hi:
            raise GridError(
                f"m={self.m} out of range for dim={self.dim}: need 3 <= m <= {hi} "
                f"(P = 2**m points per side)"
            )
        if not self.S > 0:
            raise GridError("side length S must be positive")

    @property
    def P(self) -> int:
        return 2**self.m

    @property
    def h(self) -> float:
        return self.S / self.P

    @property
    def N(self) -> int:
        return self.P**self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.P,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    def multi_index(self) -> np.ndarray:
        """Integer multi-indices, shape ``(dim, N)``."""
        idx = np.indices(self.shape).reshape(self.dim, -1)
        return idx

    def coords(self) -> np.ndarray:
        """Cell-centre coordinates, shape ``(dim, N)``."""
        return (self.multi_index() + 0.5) * self.h

    def site(self, *index: int) -> int:
        return int(np.ravel_multi_index(tuple(i % self.P for i in index), self.shape))

    def site_at(self, *x: float) -> int:
        """Site whose cell contains the point ``x`` (periodically wrapped)."""
        idx = [int(math.floor((xi % self.S) / self.h)) % self.P for xi in x]
        return self.site(*idx)


def make_grid(dim: int, m: int, S: float = 1.0) -> Grid:
    return Grid(dim, m, S)


@dataclass(frozen=True)
class DyadicCube:
    """Index block of side ``P / 2**level`` sites.

    ``shift`` (in sites, per axis) is zero for true dyadic cubes and half a
    block for the shifted families used in supremum scans.
    """

    level: int
    index: tuple[int, ...]
    side: float
    sites: np.ndarray = field(repr=False, compare=False)
    shift: tuple[int, ...] = ()

    @property
    def n_sites(self) -> int:
        return int(self.sites.size)

    @property
    def label(self) -> str:
        s = "x".join(str(i) for i in self.index)
        if any(self.shift):
            s += "+" + "x".join(str(i) for i in self.shift)
        return f"L{self.level}:{s}"


def _block_sites(grid: Grid, start: tuple[int, ...], size: int) -> np.ndarray:
    axes = [(np.arange(size) + s) % grid.P for s in start]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.ravel_multi_index(tuple(a.ravel() for a in mesh), grid.shape)


def _check_level(grid: Grid, k: int) -> None:
    if not 0 <= k <= grid.m:
        raise GridError(f"level k={k} out of range [0, {grid.m}]")


def cube(grid: Grid, k: int, index: tuple[int, ...], shift: tuple[int, ...] | None = None) -> DyadicCube:
    _check_level(grid, k)
    b = grid.P >> k
    shift = tuple(shift) if shift is not None else (0,) * grid.dim
    start = tuple(i * b + s for i, s in zip(index, shift))
    return DyadicCube(k, tuple(index), grid.S * 2.0**-k, _block_sites(grid, start, b), shift)


def dyadic_cubes(grid: Grid, k: int, shift: tuple[int, ...] | None = None) -> list[DyadicCube]:
    """All ``2**(k*dim)`` cubes of level ``k`` (optionally translated by ``shift`` sites)."""
    _check_level(grid, k)
    n = 2**k
    return [cube(grid, k, idx, shift) for idx in itertools.product(range(n), repeat=grid.dim)]


def half_shifts(grid: Grid, k: int) -> list[tuple[int, ...]]:
    """Shift vectors ``{0, b/2}^dim`` for level ``k``; only the zero shift when ``b == 1``."""
    b = grid.P >> k
    if b < 2:
        return [(0,) * grid.dim]
    return list(itertools.product((0, b // 2), repeat=grid.dim))


def level_labels(grid: Grid, k: int) -> np.ndarray:
    """Flat cube id (within level ``k``) of every site."""
    _check_level(grid, k)
    b = grid.P >> k
    idx = grid.multi_index() // b
    return np.ravel_multi_index(tuple(idx), (2**k,) * grid.dim)


def level_for_scale(grid: Grid, t: float) -> int:
    """Level ``k`` with ``t <= S 2**-k < 2t``."""
    if not 0 < t <= grid.S:
        raise GridError(f"t={t} out of range (0, S={grid.S}]")
    k = int(math.floor(math.log2(grid.S / t) + 1e-12))
    # guard the floor against round-off on exact powers of two
    while grid.S * 2.0**-k < t:
        k -= 1
    while grid.S * 2.0 ** -(k + 1) >= t:
        k += 1
    if k > grid.m:
        raise GridError(f"t={t} below grid resolution: no dyadic cube with t <= l(Q) < 2t")
    return k


def containing_cube(grid: Grid, x_site: int, t: float) -> DyadicCube:
    """The dyadic cube ``Q_t(x)`` containing ``x_site`` with ``t <= l(Q) < 2t``."""
    k = level_for_scale(grid, t)
    b = grid.P >> k
    idx = np.unravel_index(x_site, grid.shape)
    return cube(grid, k, tuple(int(i) // b for i in idx))


def enlarged_cube(grid: Grid, Q: DyadicCube, factor: int) -> np.ndarray:
    """Sites of the torus-periodic block ``factor * Q`` centred on ``Q``.

    Raises if the block would wrap onto itself.
    """
    b = grid.P >> Q.level
    size = factor * b
    if size > grid.P:
        raise GridError(
            f"{factor}Q has {size} sites per side but the torus only has {grid.P}; "
            "use a smaller cube"
        )
    shift = Q.shift or (0,) * grid.dim
    start = tuple(i * b + s - (size - b) // 2 for i, s in zip(Q.index, shift))
    return _block_sites(grid, start, size)


def _wrap_index(d: np.ndarray, P: int) -> np.ndarray:
    d = np.mod(d, P)
    return np.where(d > P // 2, d - P, d)


def torus_disp(grid: Grid, i: int, j: int) -> np.ndarray:
    """Signed minimal displacement ``x_i - x_j``; components in ``(-S/2, S/2]``."""
    a = np.array(np.unravel_index(i, grid.shape))
    b = np.array(np.unravel_index(j, grid.shape))
    return _wrap_index(a - b, grid.P) * grid.h


def disp_matrix(grid: Grid, symmetric: bool = False) -> np.ndarray:
    """All pairwise displacements ``x_i - x_j``, shape ``(dim, N, N)``.

    With ``symmetric=True`` the antipodal component ``S/2`` (where the
    minimal displacement is ambiguous) is set to zero, so the field is exactly
    antisymmetric.
    """
    idx = grid.multi_index()
    out = np.empty((grid.dim, grid.N, grid.N))
    for k in range(grid.dim):
        d = _wrap_index(idx[k][:, None] - idx[k][None, :], grid.P)
        if symmetric:
            d = np.where(d == grid.P // 2, 0, d)
        out[k] = d * grid.h
    return out


def torus_distance(grid: Grid, x0: int) -> np.ndarray:
    """Euclidean torus distance from site ``x0`` to every site."""
    idx = grid.multi_index()
    c = np.array(np.unravel_index(x0, grid.shape))[:, None]
    d = _wrap_index(idx - c, grid.P) * grid.h
    return np.sqrt((d**2).sum(axis=0))


def shifted(grid: Grid, f: np.ndarray, k: int, s: int = 1) -> np.ndarray:
    """Values at ``x + s e_k`` (periodic); works on trailing site axis."""
    lead = f.shape[:-1]
    a = f.reshape(lead + grid.shape)
    return np.roll(a, -s, axis=len(lead) + k).reshape(f.shape)


def grad(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Forward-difference gradient, shape ``(dim, N)``; component k lives on edge ``x + h e_k / 2``."""
    f = np.asarray(f)
    return np.stack([(shifted(grid, f, k) - f) / grid.h for k in range(grid.dim)])


def div(grid: Grid, v: np.ndarray) -> np.ndarray:
    """Backward-difference divergence, minus the unweighted adjoint of :func:`grad`."""
    v = np.asarray(v)
    return sum((v[k] - shifted(grid, v[k], k, -1)) / grid.h for k in range(grid.dim))


def edge_average(grid: Grid, u: np.ndarray) -> np.ndarray:
    """Arithmetic average of site values onto the forward edges, shape ``(dim, N)``."""
    return np.stack([(u + shifted(grid, u, k)) / 2 for k in range(grid.dim)])


def block_reduce(grid: Grid, f: np.ndarray, k: int, shift: tuple[int, ...] | None = None, op=np.mean) -> np.ndarray:
    """Reduce ``f`` over each level-``k`` block; returns an array of shape ``(2**k,)*dim``."""
    b = grid.P >> k
    a = np.asarray(f).reshape(grid.shape)
    if shift is not None and any(shift):
        a = np.roll(a, tuple(-s for s in shift), axis=tuple(range(grid.dim)))
    n = 2**k
    a = a.reshape(sum(((n, b) for _ in range(grid.dim)), ()))
    return op(a, axis=tuple(range(1, 2 * grid.dim, 2)))


def block_broadcast(grid: Grid, vals: np.ndarray, k: int, shift: tuple[int, ...] | None = None) -> np.ndarray:
    """Inverse of :func:`block_reduce`: spread per-block values back onto sites (flat)."""
    b = grid.P >> k
    a = np.asarray(vals)
    for ax in range(grid.dim):
        a = np.repeat(a, b, axis=ax)
    if shift is not None and any(shift):
        a = np.roll(a, tuple(shift), axis=tuple(range(grid.dim)))
    return a.reshape(-1)
