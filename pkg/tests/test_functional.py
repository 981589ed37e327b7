import dataclasses

import numpy as np
import pytest

from katolab import functional as fn
from katolab.ensembles import EnsembleSpec, make_ensemble


def test_c_norm_scalar_identity():
    for lam in (0.3, 4.0, 1e4):
        sch = fn.QuadratureScheme(1e-4 / np.sqrt(lam), 10 / np.sqrt(lam), 200)
        assert sch.multiplier(np.array([lam]))[0] == pytest.approx(np.sqrt(lam), rel=1e-10)


def test_spectral_sqrt_scalar(lap64):
    # 1x1 operator: only the spectral data matter to the root
    one = dataclasses.replace(
        lap64, matrix=np.array([[4.0]]),
        eigvals=np.array([4.0 + 0j]), V=np.eye(1), Vinv=np.eye(1), fld=None, flux=None,
    )
    assert fn.spectral_sqrt(one).matrix[0, 0] == pytest.approx(2.0)


def test_spectral_sqrt_laplacian(lap64):
    g = lap64.grid
    root = fn.spectral_sqrt(lap64)
    exact = np.sort(2 / g.h * np.abs(np.sin(np.pi * np.arange(g.P) / g.P)))
    assert np.allclose(np.sort(root.eigvals.real), exact, rtol=1e-9, atol=1e-6)
    assert np.linalg.norm(root.matrix @ root.matrix - lap64.matrix) < 1e-8 * np.linalg.norm(lap64.matrix)


def test_spectral_sqrt_nonnormal(cplx64, cplx2d):
    for op in (cplx64, cplx2d):
        R = fn.spectral_sqrt(op).matrix
        assert np.linalg.norm(R @ R - op.matrix) < 1e-8 * np.linalg.norm(op.matrix)


def test_quadrature_examples(sym64, cplx64, rng):
    assert np.abs(fn.quadrature_sqrt_apply(sym64, np.full(sym64.N, 3.0))).max() < 1e-8
    for op in (sym64, cplx64):
        f = rng.standard_normal(op.N)
        ref = fn.spectral_sqrt(op).apply(f)
        q = fn.quadrature_sqrt_apply(op, f, fn.scheme_for(op, 200))
        assert op.norm(q - ref) / op.norm(ref) < 1e-4


def test_quadrature_span_guard(sym64, rng):
    bad = fn.QuadratureScheme(1.0, 10.0, 50)
    with pytest.raises(fn.QuadratureSpanError):
        fn.quadrature_sqrt_apply(sym64, rng.standard_normal(sym64.N), bad)


def test_quadrature_error_decreases_above_floor(sym64, rng):
    f = rng.standard_normal(sym64.N)
    ref = fn.spectral_sqrt(sym64).apply(f)
    errs = [sym64.norm(fn.quadrature_sqrt_apply(sym64, f, fn.scheme_for(sym64, M)) - ref) / sym64.norm(ref)
            for M in (20, 40, 80)]
    assert errs[0] > errs[1] > errs[2]
    floor = fn.roundoff_floor(sym64, f, fn.scheme_for(sym64, 400), ref)
    e400 = sym64.norm(fn.quadrature_sqrt_apply(sym64, f, fn.scheme_for(sym64, 400)) - ref) / sym64.norm(ref)
    assert e400 <= floor


def test_kato_ratio_examples(lap64, sym64):
    ens = make_ensemble(lap64.grid, EnsembleSpec(count=24))
    rep = fn.kato_report(lap64, ens.functions, ens.ids)
    assert abs(rep.min - 1) < 1e-9 and abs(rep.max - 1) < 1e-9
    lam, Lam = sym64.edge_constants()
    rep = fn.kato_report(sym64, ens.functions)
    assert np.sqrt(lam) - 1e-8 <= rep.min <= rep.max <= np.sqrt(Lam) + 1e-8
    with pytest.raises(ValueError):
        fn.kato_ratio(sym64, np.ones(sym64.N))


def test_kato_complex_refinement():
    from conftest import build_op

    reps = []
    for m in (6, 7):
        op = build_op(1, m, "complex_perturbation", "power", {"a": 0.5}, {"kappa": 0.3})
        ens = make_ensemble(op.grid, EnsembleSpec(count=24))
        reps.append(fn.kato_report(op, ens.functions))
    assert abs(reps[1].max / reps[0].max - 1) < 0.25
    assert abs(reps[1].min / reps[0].min - 1) < 0.25


def test_duality_chain(sym64, cplx64, cplx2d, rng):
    for op in (sym64, cplx64, cplx2d):
        f = rng.standard_normal(op.N) + 1j * rng.standard_normal(op.N)
        ch = fn.duality_chain_check(op, f)
        assert min(ch.as_list()) >= -1e-10
        assert ch.root_adjoint_distance < 1e-8


def test_negative_spectrum_rejected(lap64):
    bad = dataclasses.replace(lap64, eigvals=-np.abs(lap64.eigvals) - 1)
    with pytest.raises(fn.SpectrumError):
        fn.spectral_sqrt(bad)
