import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from katolab import carleson_tb as cb
from katolab import lattice, weights
from katolab.squarefunc import Mollifier, TimeGrid
from conftest import build_op


@pytest.fixture(scope="module")
def lap256():
    return build_op(1, 8)


@pytest.fixture(scope="module")
def sym128():
    return build_op(1, 7, "real_symmetric", "power", {"a": 0.5})


def _tg(grid):
    return TimeGrid(grid.h, grid.S / 8)


# --- Carleson norm / Journe ----------------------------------------------


def test_carleson_zero_and_closed_form():
    g = lattice.make_grid(1, 7)
    tg = _tg(g)
    w = weights.constant_weight(g)
    assert cb.carleson_norm(cb.constant_gamma(g, tg, 0.0, 0.01, 0.02), w).sup == 0
    a, b = tg.t_lo * np.exp(2 * tg.dlog), tg.t_lo * np.exp(7 * tg.dlog)
    c = 1.7
    est = cb.carleson_norm(cb.constant_gamma(g, tg, c, a, b), w, shifted=False)
    vals = [r["value"] for r in est.table if g.S * 2.0 ** -r["level"] >= b]
    assert vals and np.allclose(vals, c * c * np.log(b / a), rtol=1e-12)
    assert est.sup == pytest.approx(c * c * np.log(b / a), rel=1e-12)


def test_carleson_coverage_errors():
    g = lattice.make_grid(1, 7)
    w = weights.constant_weight(g)
    gf = cb.constant_gamma(g, TimeGrid(2 * g.h, g.S / 8), 1.0, 0.1, 0.2)
    with pytest.raises(cb.CoverageError):
        cb.carleson_norm(gf, w)
    gf = cb.constant_gamma(g, TimeGrid(g.h, g.S / 16), 1.0, 0.01, 0.02)
    with pytest.raises(cb.CoverageError):
        cb.carleson_norm(gf, w)


def test_carleson_real_symmetric_refinement():
    sups = []
    for m in (7, 8):
        op = build_op(1, m, "real_symmetric", "power", {"a": 0.5})
        est = cb.carleson_norm(cb.gamma_field(op, _tg(op.grid)), op.weight)
        assert est.sup >= est.dyadic_sup > 0 and np.isfinite(est.sup)
        assert all(r["value"] >= 0 for r in est.table)
        sups.append(est.sup)
    assert max(sups) / min(sups) < 1.25


def test_journe_examples(sym128):
    g = sym128.grid
    tg = _tg(g)
    w = sym128.weight
    zero = cb.constant_gamma(g, tg, 0.0, 0.01, 0.02)
    assert cb.journe_check(zero, np.ones(g.N), w) == 0.0
    gf = cb.gamma_field(sym128, tg)
    assert cb.journe_check(gf, np.ones(g.N), w, Mollifier(g)) <= 1 + 1e-12
    rng = np.random.Generator(np.random.Philox(3))
    r = cb.journe_check(gf, rng.standard_normal(g.N), w)
    assert 0 < r < 10


# --- cone net -------------------------------------------------------------


def test_cone_net_examples():
    one = cb.cone_net(1, 0.05)
    assert one.N == 1
    z = np.array([[2 - 3j], [0.1j]])
    assert one.member(z).all()
    n1 = cb.cone_net(2, 0.1)
    assert n1.coverage == 1.0 and n1.N < 1000
    n2 = cb.cone_net(2, 0.08)
    assert n2.N >= n1.N
    with pytest.raises(ValueError):
        cb.cone_net(2, 0.2)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_cone_chain(seed):
    eps = 0.1
    net = cb.cone_net(2, eps)
    r = np.random.Generator(np.random.Philox(seed))
    z = r.standard_normal(2) + 1j * r.standard_normal(2)
    j = net.first_cone(z[None, :])[0]
    assert j >= 0
    nu = net.nus[j]
    # a vector A with Re nu.A > 3/4 and |A| <= 1/(8 eps)
    perp = np.array([-np.conj(nu[1]), np.conj(nu[0])])
    A = (0.76 + r.uniform(0, 0.4)) * np.conj(nu) + r.uniform(-0.4, 0.4) * perp
    assert (nu @ A).real > 0.75 and np.linalg.norm(A) <= 1 / (8 * eps)
    assert np.linalg.norm(z) <= 2 * abs(z @ A)


# --- F_Q, hypotheses ------------------------------------------------------------


def test_fq_identity(lap256):
    g = lap256.grid
    Q = lattice.cube(g, 4, (3,))
    st_ = cb.make_fq(lap256, Q, 0.05)
    assert np.abs(st_.F - g.coords()).max() < 1e-12
    assert np.abs(st_.J - 1).max() < 1e-10
    hyp = cb.tb_hypotheses(st_, lap256)
    assert hyp.c_i == pytest.approx(5.0, rel=1e-9)
    assert hyp.c_ii < 1e-16 and hyp.g_bound < 1e-9
    assert cb.grad_deviation(st_) < 1e-8
    with pytest.raises(ValueError):
        cb.make_fq(lap256, lattice.cube(g, 3, (0,)), 0.05)


def test_fq_eps_limit(sym128):
    Q = lattice.cube(sym128.grid, 4, (2,))
    dev = [np.abs(cb.make_fq(sym128, Q, e).J - 1).max() for e in (0.1, 0.025, 0.005)]
    assert dev[0] > dev[1] > dev[2]


def test_hypotheses_eps_sweep(sym128):
    Q = lattice.cube(sym128.grid, 4, (5,))
    l21 = []
    for eps in (0.025, 0.05, 0.1):
        s = cb.make_fq(sym128, Q, eps)
        h = cb.tb_hypotheses(s, sym128)
        assert all(np.isfinite([h.c_i, h.c_ii, h.g_bound]))
        l21.append(cb.grad_deviation(s))
    assert max(l21) < 1


# --- stopping time -----------------------------------------------------------------


def _synthetic(grid, level=4, index=(2,), eps=0.05):
    Q = lattice.cube(grid, level, index)
    J = np.ones((grid.N, 1, 1))
    return cb.TbState(grid, Q, eps, grid.coords().astype(float), J)


def test_stopping_time_trivial():
    g = lattice.make_grid(1, 8)
    s = cb.stopping_time(_synthetic(g), np.array([1.0 + 0j]))
    assert s.S1 == [[]] and s.S2 == [[]] and s.E[0].sum() == s.Q.n_sites
    s = _synthetic(g)
    cb.stopping_time(s, np.array([1.0 + 0j]), grad_field=np.zeros((1, g.N)))
    assert s.S1 == [[s.Q.label]] and not s.E[0].any()
    assert cb.density_eta([s], weights.constant_weight(g)) == 0.0


def test_stopping_time_mixed_field():
    g = lattice.make_grid(1, 8)
    s = _synthetic(g)
    field = np.zeros((1, g.N))
    left = s.Q.sites[: s.Q.n_sites // 2]
    field[0, left] = 2.0  # root average 1 > 3/4, right child average 0
    cb.stopping_time(s, np.array([1.0 + 0j]), grad_field=field)
    right = lattice.cube(g, s.Q.level + 1, (2 * s.Q.index[0] + 1,))
    assert s.S1 == [[right.label]] and s.S2 == [[]]
    assert np.array_equal(np.flatnonzero(s.E[0]), np.sort(left))
    # a large gradient triggers the second threshold
    s2 = _synthetic(g)
    field[0, left] = 30.0
    field[0, s.Q.sites[s.Q.n_sites // 2 :]] = 1.0
    cb.stopping_time(s2, np.array([1.0 + 0j]), grad_field=field)
    assert s2.S1 == [[]] and s2.S2 == [[s2.Q.label]]


def test_set_algebra_and_sawtooth_mask():
    g = lattice.make_grid(1, 8)
    s = _synthetic(g)
    s.J[s.Q.sites[4:8], 0, 0] = 0.0
    s.J[np.setdiff1d(s.Q.sites, s.Q.sites[4:8]), 0, 0] = 1.2
    cb.stopping_time(s, np.array([1.0 + 0j]))
    w = weights.power_weight(g, 0.5)
    wQ = weights.weighted_measure(w, s.Q)
    E = s.E_Q
    bad = s.mask_Q & ~E
    assert weights.weighted_measure(w, E) + weights.weighted_measure(w, bad) == pytest.approx(wQ, rel=1e-15)
    tg = _tg(g)
    mask = cb.sawtooth_mask(g, s.Q, bad, tg.nodes)
    half = s.Q.side / 2
    for i, t in enumerate(tg.nodes):
        assert not mask[i, bad].any() or t >= half
        assert mask[i, E].all() == (t < s.Q.side)


def test_sawtooth_synthetic_forced_bounds(sym128):
    g = sym128.grid
    s = _synthetic(g, level=3, index=(1,))
    assert s.Q.n_sites == 16
    s.J[:, 0, 0] = 1.2
    s.J[s.Q.sites[4:8], 0, 0] = 0.0
    net = cb.cone_net(1, s.eps)
    cb.stopping_time(s, net.nus[0])
    gf = cb.gamma_field(sym128, _tg(g))
    res = cb.sawtooth_carleson(s, gf, sym128.weight, net, strict=True)
    assert res.forced_violations == 0 and res.forced_checked > 0
    assert res.domination_violations == 0
    assert 0 < res.eta_Q < 1


def test_sawtooth_examples(lap256, sym128):
    g = lap256.grid
    net = cb.cone_net(1, 0.05)
    Q = lattice.cube(g, 4, (7,))
    s = cb.make_fq(lap256, Q, 0.05)
    cb.stopping_time(s, net.nus[0])
    zero = cb.constant_gamma(g, _tg(g), 0.0, 0.01, 0.02)
    r0 = cb.sawtooth_carleson(s, zero, lap256.weight, net)
    assert r0.lhs == 0 and r0.rhs == 0
    one = cb.constant_gamma(g, _tg(g), 1.0, g.h, g.S / 8)
    r1 = cb.sawtooth_carleson(s, one, lap256.weight, net)
    assert r1.eta_Q == 1.0 and r1.coverage == 1.0
    assert r1.rhs == pytest.approx(4 * r1.lhs, rel=1e-10)
    with pytest.raises(ValueError):
        cb.sawtooth_carleson(cb.make_fq(lap256, Q, 0.05), one, lap256.weight, net)


def test_run_tb_real_symmetric(sym128):
    run = cb.run_tb(sym128, 0.05)
    assert run.forced_violations == 0 and run.all_dominated
    assert run.eta > 0 and np.isfinite(run.carleson_bound)
    with pytest.raises(ValueError):
        cb.run_tb(build_op(1, 6), 0.05)
