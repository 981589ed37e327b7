import numpy as np
import pytest

from katolab import semigroup
from conftest import build_op


def test_heat_apply_examples(lap64, cplx64, rng):
    f = rng.standard_normal(lap64.N)
    assert np.array_equal(semigroup.heat_apply(lap64, 0.0, f), f)
    for op in (lap64, cplx64):
        one = semigroup.heat_apply(op, 0.003, np.ones(op.N))
        assert np.abs(one - 1).max() < 1e-10
    g = lap64.grid
    x = g.coords()[0]
    e = np.exp(2j * np.pi * x)
    mu1 = (2 / g.h) ** 2 * np.sin(np.pi * g.h) ** 2
    t = 0.01
    assert np.allclose(semigroup.heat_apply(lap64, t, e), np.exp(-t * mu1) * e, atol=1e-12)
    with pytest.raises(ValueError):
        semigroup.heat_apply(lap64, -1.0, f)


def test_heat_methods_agree(cplx64, rng):
    f = rng.standard_normal(cplx64.N)
    a = semigroup.heat_apply(cplx64, 0.002, f)
    b = semigroup.heat_apply(cplx64, 0.002, f, method="scaling_squaring")
    assert np.abs(a - b).max() < 1e-10 * np.abs(f).max()


def test_heat_kernel_continuum_interior():
    op = build_op(1, 8)
    g = op.grid
    t = 4e-4
    K = semigroup.heat_kernel(op, t).K
    i = g.N // 2
    d = np.abs(g.coords()[0] - g.coords()[0][i])
    inner = d < 0.1
    cont = (4 * np.pi * t) ** -0.5 * np.exp(-d**2 / (4 * t))
    assert np.abs(K[i, inner] - cont[inner]).max() < 0.01 * cont.max()


def test_kernel_residuals(cplx64, sym64):
    for op in (cplx64, sym64):
        assert semigroup.heat_kernel(op, 0.001).conservation_residual() < 1e-10
        assert semigroup.vt_kernel(op, 0.05).moment_residual() < 1e-10
    with pytest.raises(ValueError):
        semigroup.heat_kernel(sym64, 0.0)


def test_gaussian_fit_laplacian():
    op = build_op(1, 8)
    lo, hi = semigroup.trust_window(op.grid)
    fit = semigroup.gaussian_fit(op, np.geomspace(lo, hi, 8))
    assert abs(fit.C2 - 0.25) < 0.025
    assert fit.mu == 1.0
    assert fit.min_log_slack >= -1e-9


def test_gaussian_fit_real_symmetric(sym64):
    lo, hi = semigroup.trust_window(sym64.grid)
    fit = semigroup.gaussian_fit(sym64, np.geomspace(lo, hi, 6))
    assert fit.C1 > 0 and fit.C2 > 0 and np.isfinite(fit.C1)
    assert fit.min_log_slack >= -1e-9
    with pytest.raises(ValueError):
        semigroup.gaussian_fit(sym64, [10.0])


def test_gamma_examples(lap64, cplx64):
    for t in (lap64.grid.h, 0.05, lap64.grid.S / 8):
        assert np.abs(semigroup.gamma_t(lap64, t)).max() < 1e-10
    gam = semigroup.gamma_t(cplx64, 0.05)
    assert np.all(np.isfinite(gam)) and np.abs(gam).max() > 1e-3
    with pytest.raises(ValueError):
        semigroup.gamma_t(cplx64, 0.2)


def test_frozen_gamma_oracle(sym64):
    # regression value for the 1D real_symmetric, power(a=0.5), P=64 operator
    s = float(np.abs(semigroup.gamma_t(sym64, 0.0625)).max())
    assert s == pytest.approx(FROZEN_GAMMA, rel=1e-9)


FROZEN_GAMMA = 0.9431807288276359
