import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from katolab import lattice


def test_make_grid_examples():
    g = lattice.make_grid(1, 3, 1.0)
    assert g.P == 8 and g.h == 0.125
    assert lattice.make_grid(2, 5, 1.0).N == 1024
    with pytest.raises(lattice.GridError):
        lattice.make_grid(3, 5, 1.0)


def test_dyadic_cubes_examples():
    g = lattice.make_grid(1, 3)
    top = lattice.dyadic_cubes(g, 0)
    assert len(top) == 1 and top[0].n_sites == 8
    leaves = lattice.dyadic_cubes(g, 3)
    assert len(leaves) == 8 and all(c.n_sites == 1 for c in leaves)
    g2 = lattice.make_grid(2, 3)
    cs = lattice.dyadic_cubes(g2, 1)
    assert len(cs) == 4 and all(c.n_sites == 16 for c in cs)


def test_dyadic_cubes_partition():
    g = lattice.make_grid(2, 3)
    for k in range(4):
        for s in lattice.half_shifts(g, k):
            sites = np.concatenate([c.sites for c in lattice.dyadic_cubes(g, k, s)])
            assert sorted(sites) == list(range(g.N))


def test_torus_disp_examples():
    g = lattice.make_grid(1, 3)
    i, j = g.site_at(0.0 + g.h / 2), g.site_at(0.875 + g.h / 2)
    assert np.allclose(lattice.torus_disp(g, i, j), [0.125])
    assert np.allclose(lattice.torus_disp(g, 3, 3), [0.0])
    i, j = g.site_at(0.25 + g.h / 2), g.site_at(0.5 + g.h / 2)
    assert np.allclose(lattice.torus_disp(g, i, j), [-0.25])


def test_disp_matrix_symmetric_is_odd():
    g = lattice.make_grid(1, 3)
    d = lattice.disp_matrix(g, symmetric=True)
    assert np.array_equal(d, -np.swapaxes(d, 1, 2))
    assert np.all(np.abs(d) < g.S / 2)


def test_containing_cube_examples():
    g = lattice.make_grid(1, 3)
    c = lattice.containing_cube(g, 5, 0.2)
    assert c.level == 2 and c.side == 0.25
    assert lattice.containing_cube(g, 5, 1.0).level == 0
    x = g.site_at(0.6)
    c = lattice.containing_cube(g, x, 0.1)
    assert c.level == 3 and x in c.sites


def test_level_for_scale_exact_powers():
    g = lattice.make_grid(1, 6)
    for k in range(7):
        assert lattice.level_for_scale(g, 2.0**-k) == k
    with pytest.raises(lattice.GridError):
        lattice.level_for_scale(g, g.h / 3)


def test_enlarged_cube_wrap_guard():
    g = lattice.make_grid(1, 5)
    Q = lattice.cube(g, 4, (0,))
    assert lattice.enlarged_cube(g, Q, 5).size == 10
    with pytest.raises(lattice.GridError):
        lattice.enlarged_cube(g, lattice.cube(g, 1, (0,)), 5)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_grad_div_adjoint(seed):
    g = lattice.make_grid(2, 3)
    r = np.random.Generator(np.random.Philox(seed))
    f = r.standard_normal(g.N)
    v = r.standard_normal((2, g.N))
    lhs = np.sum(lattice.grad(g, f) * v)
    rhs = -np.sum(f * lattice.div(g, v))
    assert abs(lhs - rhs) < 1e-12 * max(1.0, abs(lhs)) / g.h


def test_grad_constant_and_block_roundtrip():
    g = lattice.make_grid(2, 3)
    assert np.all(lattice.grad(g, np.full(g.N, 3.0)) == 0)
    vals = np.arange(16.0).reshape(4, 4)
    b = lattice.block_broadcast(g, vals, 2)
    assert np.array_equal(lattice.block_reduce(g, b, 2), vals)
