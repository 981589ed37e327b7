"""Seeded test-function ensembles.

Every function is defined in the continuum and sampled at the cell centres, so
the same ensemble member is comparable across refinements ``P -> 2P``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .lattice import Grid

DRAW_PATHS = (
    "ensemble.bandlimited: complex normal Fourier coefficients, shape (n_random, n_modes), "
    "modes with max |k_i| <= band, ordered by itertools.product; amplitude decay (1 + |k|^2)^-1",
    "ensemble.bumps: uniform centres in [0, S)^dim, shape (n_bumps, dim)",
)


@dataclass(frozen=True)
class EnsembleSpec:
    count: int = 64
    seed: int = 0
    band: int = 8
    n_plane: int = 8
    n_bump: int = 8
    bump_radius: float = 0.15

    def __post_init__(self):
        if self.count < self.n_plane + self.n_bump + 1:
            raise ValueError("ensemble count must exceed plane waves + bumps")


@dataclass
class Ensemble:
    grid: Grid
    functions: list = field(repr=False)
    ids: list

    def __len__(self):
        return len(self.functions)

    def __iter__(self):
        return iter(self.functions)


def _modes(dim: int, band: int) -> np.ndarray:
    ks = [k for k in itertools.product(range(-band, band + 1), repeat=dim) if any(k)]
    return np.array(ks, dtype=float)


def plane_wave(grid: Grid, k, phase: float = 0.0) -> np.ndarray:
    x = grid.coords() / grid.S
    return np.cos(2 * np.pi * np.tensordot(np.atleast_1d(k), x, axes=1) + phase)


def bump(grid: Grid, centre, radius: float) -> np.ndarray:
    """Smooth ``cos^2`` bump of the given radius around ``centre`` (torus distance)."""
    x = grid.coords()
    d = np.asarray(centre, dtype=float)[:, None]
    disp = (x - d + grid.S / 2) % grid.S - grid.S / 2
    r = np.sqrt((disp**2).sum(axis=0)) / radius
    return np.where(r < 1, np.cos(np.pi * r / 2) ** 2, 0.0)


def make_ensemble(grid: Grid, spec: EnsembleSpec = EnsembleSpec()) -> Ensemble:
    """``count`` real functions: band-limited random fields, plane waves, bumps.

    Random draws come from one Philox generator seeded with ``spec.seed`` in
    the order listed in :data:`DRAW_PATHS`; they do not depend on ``P``.
    """
    rng = np.random.Generator(np.random.Philox(spec.seed))
    n_random = spec.count - spec.n_plane - spec.n_bump
    ks = _modes(grid.dim, spec.band)
    amp = 1.0 / (1.0 + (ks**2).sum(axis=1))
    coef = rng.standard_normal((n_random, len(ks))) + 1j * rng.standard_normal((n_random, len(ks)))
    centres = rng.uniform(0, grid.S, size=(spec.n_bump, grid.dim))

    x = grid.coords() / grid.S
    phases = np.exp(2j * np.pi * ks @ x)  # (n_modes, N)
    fs, ids = [], []
    for i in range(n_random):
        fs.append(((coef[i] * amp) @ phases).real)
        ids.append(f"band{i:02d}")
    for j in range(spec.n_plane):
        k = np.zeros(grid.dim)
        k[j % grid.dim] = 1 + j // grid.dim
        fs.append(plane_wave(grid, k, 0.3 * j))
        ids.append(f"wave{j:02d}")
    for j in range(spec.n_bump):
        fs.append(bump(grid, centres[j], spec.bump_radius * grid.S))
        ids.append(f"bump{j:02d}")
    return Ensemble(grid, fs, ids)
