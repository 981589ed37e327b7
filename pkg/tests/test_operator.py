import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from katolab import lattice, operator, weights
from conftest import build_op


def test_make_field_examples():
    g = lattice.make_grid(1, 5)
    w1 = weights.constant_weight(g)
    f = operator.make_field(g, w1, "identity")
    assert np.all(f.A == np.eye(1)) and (f.lam, f.Lam) == (1.0, 1.0)
    wp = weights.power_weight(g, 0.5)
    k0 = operator.make_field(g, wp, "complex_perturbation", kappa=0.0)
    assert np.allclose(k0.A, operator.make_field(g, wp, "identity").A, atol=0)
    k3 = operator.make_field(g, w1, "complex_perturbation", kappa=0.3)
    assert operator.ellipticity_constants(k3).lam >= 0.7 - 1e-12
    with pytest.raises(ValueError):
        operator.make_field(g, w1, "nonsense")


def test_ellipticity_constants_and_invalid_field():
    g = lattice.make_grid(2, 3)
    w = weights.constant_weight(g)
    assert operator.ellipticity_constants(operator.make_field(g, w, "identity")) == (1.0, 1.0)
    c = operator.ellipticity_constants(operator.make_field(g, w, "complex_perturbation", kappa=0.3))
    assert 0.7 - 1e-12 <= c.lam <= 1
    A = np.broadcast_to(np.eye(2), (g.N, 2, 2)).copy()
    A[5] = np.diag([1.0, -0.5])
    bad = operator.EllipticField(g, A, w, 0.5, 1.0, "custom")
    assert operator.ellipticity_constants(bad).lam <= 0
    with pytest.raises(operator.EllipticityError):
        bad.validate()


def test_div_grad_plane_wave_symbol():
    g = lattice.make_grid(1, 6)
    x = g.coords()[0]
    f = np.exp(2j * np.pi * x)
    out = lattice.div(g, lattice.grad(g, f))
    sym = -(2 / g.h) ** 2 * np.sin(np.pi * g.h) ** 2
    assert np.allclose(out, sym * f, atol=1e-10)


def test_laplacian_stencil_and_spectrum(lap64):
    g = lap64.grid
    P = g.P
    ref = (2 * np.eye(P) - np.roll(np.eye(P), 1, 1) - np.roll(np.eye(P), -1, 1)) / g.h**2
    assert np.allclose(lap64.matrix, ref, atol=1e-9)
    assert np.abs(lap64.apply(np.ones(P))).max() < 1e-9
    mu = np.sort(lap64.eigvals.real)
    exact = np.sort((2 / g.h) ** 2 * np.sin(np.pi * np.arange(P) / P) ** 2)
    assert np.allclose(mu, exact, rtol=1e-10, atol=1e-9)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_form_identity_random(seed):
    op = build_op(2, 3, "complex_perturbation", "power", {"a": 0.5})
    r = np.random.Generator(np.random.Philox(seed))
    f = r.standard_normal(op.N) + 1j * r.standard_normal(op.N)
    h = r.standard_normal(op.N) + 1j * r.standard_normal(op.N)
    assert operator.form_identity_check(op, f, h, relative=True) < 1e-10


def test_form_constant_and_hermitian(sym64, rng):
    c = np.full(sym64.N, 2.0)
    assert sym64.form(c, c) == 0
    f = rng.standard_normal(sym64.N) + 1j * rng.standard_normal(sym64.N)
    a = sym64.form(f, f)
    assert abs(a.imag) <= 1e-12 * abs(a)


def test_adjoint_examples(sym64, cplx64, cplx2d, rng):
    assert np.abs(operator.adjoint(sym64).matrix - sym64.matrix).max() < 1e-12 * np.abs(sym64.matrix).max()
    for op in (cplx64, cplx2d):
        back = operator.adjoint(operator.adjoint(op))
        assert np.abs(back.matrix - op.matrix).max() < 1e-12 * np.abs(op.matrix).max()
        star = operator.adjoint(op)
        f = rng.standard_normal(op.N) + 1j * rng.standard_normal(op.N)
        g = rng.standard_normal(op.N) + 1j * rng.standard_normal(op.N)
        lhs, rhs = op.inner(op.apply(f), g), op.inner(f, star.apply(g))
        assert abs(lhs - rhs) < 1e-10 * op.norm(op.apply(f)) * op.norm(g)


def test_edge_constants_bound_form(cplx64, rng):
    lam, Lam = cplx64.edge_constants()
    f = rng.standard_normal(cplx64.N) + 1j * rng.standard_normal(cplx64.N)
    g2 = weights.weighted_norm(f, cplx64.weight, "GradL2w", edge=True) ** 2
    a = cplx64.form(f, f)
    assert lam * g2 <= a.real * (1 + 1e-12) and abs(a) <= Lam * g2 * (1 + 1e-12)


def test_dense_limit():
    g = lattice.make_grid(2, 7)
    w = weights.constant_weight(g)
    with pytest.raises(operator.AssemblyError):
        operator.assemble(operator.make_field(g, w, "identity"))
