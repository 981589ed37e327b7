"""Verification suites run by the CLI.

Each suite walks the configured cases over the refinement series and returns
plot-ready rows plus pass/fail checks against the acceptance thresholds.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import carleson_tb as cb
from . import functional as fn
from . import lattice, operator, semigroup, squarefunc, weights
from .config import Case, ExperimentConfig
from .ensembles import EnsembleSpec, make_ensemble


@dataclass
class Check:
    """One pass/fail verdict (a report record without timing)."""

    suite: str
    case: str
    name: str
    value: float
    threshold: str
    passed: bool
    m: int | None = None

    def as_dict(self) -> dict:
        return {
            "suite": self.suite, "case": self.case, "m": self.m, "name": self.name,
            "value": _json_float(self.value), "threshold": self.threshold, "passed": bool(self.passed),
        }


@dataclass
class SuiteResult:
    name: str
    rows: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    duration: float = 0.0
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(c.passed for c in self.checks)


def _json_float(v):
    v = float(v)
    return v if np.isfinite(v) else str(v)


def rel_variation(vals) -> float:
    """``max/min - 1`` of positive values (``inf`` if any is non-positive)."""
    v = np.asarray(vals, dtype=float)
    if v.size == 0:
        return 0.0
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        return np.inf
    return float(v.max() / v.min() - 1)


class Lab:
    """Caches grids, operators and ensembles shared between suites."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self._ops = {}
        self._ens = {}

    def grid(self, m: int) -> lattice.Grid:
        return lattice.make_grid(self.cfg.dim, m, self.cfg.S)

    def op(self, case: Case, m: int) -> operator.Operator:
        key = (case.label, m)
        if key not in self._ops:
            g = self.grid(m)
            w = weights.make_weight(g, case.weight.family, **case.weight.params)
            self._ops[key] = operator.assemble(operator.make_field(g, w, case.field.family, **case.field.params))
        return self._ops[key]

    def ensemble(self, m: int):
        if m not in self._ens:
            spec = EnsembleSpec(count=self.cfg.ensemble_count, seed=self.cfg.seed, band=self.cfg.band)
            self._ens[m] = make_ensemble(self.grid(m), spec)
        return self._ens[m]

    def tgrid(self, m: int) -> squarefunc.TimeGrid:
        g = self.grid(m)
        return squarefunc.TimeGrid(g.h, g.S / 8, self.cfg.dlog_max)


def _is_trivial(case: Case) -> bool:
    """``A = I`` with ``w = 1`` (a constant weight, or a power weight with ``a = 0``)."""
    flat = case.weight.family == "constant" or (case.weight.family == "power" and case.weight.params.get("a", 1) == 0)
    return case.field.family == "identity" and flat


def _refinement_checks(suite, case, rows, keys, limit, checks, name_fmt="{}_variation"):
    if len(rows) < 2:
        return
    for k in keys:
        v = rel_variation([r[k] for r in rows])
        checks.append(Check(suite, case.label, name_fmt.format(k), v, f"< {limit}", v < limit))


# --- kato -------------------------------------------------------------------------


def _identities(op: operator.Operator, f: np.ndarray, g: np.ndarray, root: operator.Operator) -> dict:
    one = np.ones(op.grid.N)
    L = op.matrix
    nL = np.linalg.norm(L)
    out = {
        "conservation": float(np.abs(semigroup.heat_apply(op, 0.01 * op.grid.S**2, one) - 1).max()),
        "vt_moment": semigroup.vt_kernel(op, 0.1 * op.grid.S).moment_residual(),
        "form_identity": operator.form_identity_check(op, f, g, relative=True),
        "sqrt_squared": float(np.linalg.norm(root.matrix @ root.matrix - L) / nL),
    }
    adj2 = operator.adjoint(operator.adjoint(op))
    out["adjoint_involution"] = float(np.linalg.norm(adj2.matrix - L) / nL)
    if op.hermitian:
        a = op.form(f, f).real
        out["hermitian_form"] = abs(a - op.norm(root.apply(f)) ** 2) / abs(a)
    else:
        out["hermitian_form"] = np.nan
    return out


def suite_kato(lab: Lab) -> SuiteResult:
    cfg = lab.cfg
    res = SuiteResult("kato")
    for case in cfg.cases:
        rows = []
        for m in cfg.m_list:
            op = lab.op(case, m)
            ens = lab.ensemble(m)
            root = fn.spectral_sqrt(op)
            rep = fn.kato_report(op, ens.functions, ens.ids)
            lam_e, Lam_e = op.edge_constants()
            f = fn.center(ens.functions[0], op.weight)
            ids = _identities(op, ens.functions[0], ens.functions[1], root)
            row = {
                "case": case.label, "m": m, "P": op.grid.P, "hermitian": int(op.hermitian),
                "ratio_min": rep.min, "ratio_max": rep.max,
                "sqrt_lam_edge": np.sqrt(lam_e), "sqrt_Lam_edge": np.sqrt(Lam_e), **ids,
            }
            # quadrature is O(M) matrix exponentials without a reliable eigenbasis: keep it to P <= 128 there
            if op.eig_reliable or op.grid.P <= 128:
                ref = root.apply(f)
                errs = {}
                for M in (cfg.quad_M, 2 * cfg.quad_M):
                    sch = fn.scheme_for(op, M, cfg.quad_lo, cfg.quad_hi)
                    errs[M] = op.norm(fn.quadrature_sqrt_apply(op, f, sch) - ref) / op.norm(ref)
                floor = fn.roundoff_floor(op, f, fn.scheme_for(op, 2 * cfg.quad_M, cfg.quad_lo, cfg.quad_hi), ref)
                row.update(quad_err_M=errs[cfg.quad_M], quad_err_2M=errs[2 * cfg.quad_M], quad_floor=floor)
            else:
                row.update(quad_err_M=np.nan, quad_err_2M=np.nan, quad_floor=np.nan)
            rows.append(row)

            lab_ = case.label
            for k in ("conservation", "vt_moment", "form_identity", "sqrt_squared", "adjoint_involution", "hermitian_form"):
                if np.isfinite(row[k]):
                    res.checks.append(Check("kato", lab_, k, row[k], "<= 1e-9", row[k] <= 1e-9, m))
            if np.isfinite(row["quad_err_M"]):
                e1, e2 = row["quad_err_M"], row["quad_err_2M"]
                res.checks.append(Check("kato", lab_, "quadrature_error", e1, "< 1e-4", e1 < 1e-4, m))
                ok = e2 < e1 or max(e1, e2) <= row["quad_floor"]
                res.checks.append(Check("kato", lab_, "quadrature_doubling", e2, "< err(M) or both <= round-off floor", ok, m))
            if op.hermitian:
                lo, hi = row["sqrt_lam_edge"] - 1e-8, row["sqrt_Lam_edge"] + 1e-8
                res.checks.append(Check("kato", lab_, "ratio_min_in_bounds", rep.min, f">= {lo:.12g}", rep.min >= lo, m))
                res.checks.append(Check("kato", lab_, "ratio_max_in_bounds", rep.max, f"<= {hi:.12g}", rep.max <= hi, m))
            if _is_trivial(case):
                dev = max(abs(rep.min - 1), abs(rep.max - 1))
                res.checks.append(Check("kato", lab_, "ratio_exact", dev, "<= 1e-9", dev <= 1e-9, m))
        res.rows.extend(rows)
        _refinement_checks("kato", case, rows, ("ratio_min", "ratio_max"), 0.25, res.checks)
        spread = max(r["ratio_max"] for r in rows) / min(r["ratio_min"] for r in rows)
        res.checks.append(Check("kato", case.label, "max_over_min", spread, "< 10", spread < 10))
    return res


# --- gaussfit ---------------------------------------------------------------------


def suite_gaussfit(lab: Lab) -> SuiteResult:
    cfg = lab.cfg
    res = SuiteResult("gaussfit")
    for case in cfg.cases:
        for m in cfg.m_list:
            op = lab.op(case, m)
            lo, hi = semigroup.trust_window(op.grid)
            fit = semigroup.gaussian_fit(op, np.geomspace(lo, hi, 12))
            row = {
                "case": case.label, "m": m, "P": op.grid.P, "C1": fit.C1, "C2": fit.C2, "mu": fit.mu,
                "vt_C1": fit.vt["C1"], "vt_C2": fit.vt["C2"], "alpha": fit.alpha,
                "min_log_slack": fit.min_log_slack, "n_samples": fit.n_samples,
            }
            res.rows.append(row)
            ok = fit.C2 > 0 and fit.C1 > 0 and fit.min_log_slack >= -1e-9
            res.checks.append(Check("gaussfit", case.label, "majorant_valid", fit.C2, "C1, C2 > 0 and envelope holds", ok, m))
            if _is_trivial(case) and cfg.dim == 1:
                res.checks.append(Check("gaussfit", case.label, "C2_calibration", fit.C2, "in [0.225, 0.275]",
                                        0.225 <= fit.C2 <= 0.275, m))
    return res


# --- squarefunc -------------------------------------------------------------------


def eigen_vertical(op: operator.Operator, index: int = 5, dlog_max: float = 0.25) -> float:
    """Vertical square function of a real eigenfunction over ``[0.01, 10] / sqrt(mu)`` (exact: 1/2)."""
    order = np.argsort(np.abs(op.eigvals))
    j = order[index]
    mu = float(op.eigvals[j].real)
    g = op.V[:, j]
    g = g.real if op.real else g
    tg = squarefunc.TimeGrid(0.01 / np.sqrt(mu), 10 / np.sqrt(mu), dlog_max)
    return squarefunc.vertical_sf(op, g, tg).ratio


def suite_squarefunc(lab: Lab) -> SuiteResult:
    cfg = lab.cfg
    res = SuiteResult("squarefunc")
    for case in cfg.cases:
        rows = []
        for m in cfg.m_list:
            op = lab.op(case, m)
            g, w = op.grid, op.weight
            ens = lab.ensemble(m)
            tg = lab.tgrid(m)
            filt = squarefunc.LPFilter(g)
            moll = squarefunc.Mollifier(g)
            fs = [fn.center(f, w) for f in ens.functions]
            vert = [r.ratio for r in squarefunc.vertical_sf_batch(op, fs, tg)]
            gfun = [squarefunc.gfunction_sf(f, filt, w, tg).ratio for f in fs]
            pa = [squarefunc.pa_sf(f, w, tg, moll).ratio for f in fs]
            tay = [r.ratio for r in squarefunc.taylor_sf_batch(op, fs, moll, tg)]
            band = filt.resolved_band(tg)
            row = {
                "case": case.label, "m": m, "P": g.P,
                "vertical_max": max(vert), "gfunction_max": max(gfun), "pa_max": max(pa), "taylor_max": max(tay),
                "band_k_min": band["k_min"], "band_k_max": band["k_max"], "band_error": band["max_error_in_band"],
                "eigen_vertical": eigen_vertical(op, dlog_max=cfg.dlog_max) if op.hermitian else np.nan,
            }
            if _is_trivial(case):
                t0 = g.S / 32
                dec = squarefunc.opnorm_decay(op, filt, t0 * np.array([1 / 16, 1 / 4, 1, 4, 16]), [t0])
                row.update(schur_K=dec.K, schur_alpha=dec.alpha)
                res.checks.append(Check("squarefunc", case.label, "schur_alpha", dec.alpha, "> 0.1", dec.alpha > 0.1, m))
            else:
                row.update(schur_K=np.nan, schur_alpha=np.nan)
            rows.append(row)
            for k in ("vertical_max", "gfunction_max", "pa_max", "taylor_max"):
                res.checks.append(Check("squarefunc", case.label, f"{k}_finite", row[k], "finite", bool(np.isfinite(row[k])), m))
            if np.isfinite(row["eigen_vertical"]):
                dev = abs(row["eigen_vertical"] - 0.5) / 0.5
                res.checks.append(Check("squarefunc", case.label, "eigen_vertical_half", dev, "< 0.02", dev < 0.02, m))
        res.rows.extend(rows)
        if case.field.family == "real_symmetric":
            for a, b in zip(rows, rows[1:]):
                for k in ("vertical_max", "gfunction_max", "pa_max", "taylor_max"):
                    v = rel_variation([a[k], b[k]])
                    res.checks.append(Check("squarefunc", case.label, f"{k}_refinement", v, "< 0.5", v < 0.5, b["m"]))
    return res


# --- carleson -----------------------------------------------------------------------


def suite_carleson(lab: Lab) -> SuiteResult:
    cfg = lab.cfg
    res = SuiteResult("carleson")
    for case in cfg.cases:
        for m in cfg.m_list:
            op = lab.op(case, m)
            g, w = op.grid, op.weight
            tg = lab.tgrid(m)
            gf = cb.gamma_field(op, tg)
            sups = gf.sup_norms()
            ce = cb.carleson_norm(gf, w)
            moll = squarefunc.Mollifier(g)
            ens = lab.ensemble(m)
            journe = max(cb.journe_check(gf, f, w, moll, ce) for f in ens.functions[:8])
            journe_one = cb.journe_check(gf, np.ones(g.N), w, moll, ce)
            var = float(sups.max() / sups.min()) if sups.min() > 0 else np.inf
            res.rows.append({
                "case": case.label, "m": m, "P": g.P, "gamma_sup": float(sups.max()), "gamma_sup_min_t": float(sups.min()),
                "gamma_sup_variation": var, "carleson_sup": ce.sup, "carleson_dyadic": ce.dyadic_sup,
                "carleson_shifted": ce.shifted_sup, "argmax": ce.argmax, "journe_max": journe, "journe_one": journe_one,
            })
            if _is_trivial(case):
                s = float(sups.max())
                res.checks.append(Check("carleson", case.label, "gamma_null", s, "< 1e-10", s < 1e-10, m))
            else:
                res.checks.append(Check("carleson", case.label, "gamma_sup_variation", var, "< 2", var < 2, m))
            res.checks.append(Check("carleson", case.label, "carleson_finite", ce.sup, "finite", bool(np.isfinite(ce.sup)), m))
    return res


# --- tb --------------------------------------------------------------------------------


NULL_TOL = 1e-10


def _null_ratio(num: float, den: float) -> float:
    """``num / den``, with both treated as exact zeros below ``NULL_TOL`` (ratio 1 when both are)."""
    if max(abs(num), abs(den)) < NULL_TOL:
        return 1.0
    return num / den if den > 0 else np.inf


def suite_tb(lab: Lab) -> SuiteResult:
    cfg = lab.cfg
    res = SuiteResult("tb")
    if cfg.dim != 1:
        res.error = "the Tb suite needs 8h <= l(Q) <= S/16 with N <= 4096: only dim 1 is feasible"
        return res
    for case in cfg.cases:
        summ = []
        for m in cfg.m_list:
            op = lab.op(case, m)
            if not cb.tb_cube_family(op.grid):
                continue
            gf = cb.gamma_field(op, lab.tgrid(m))
            per_eps = {}
            for eps in sorted(set(cfg.eps) | {cfg.eps_default}):
                run = cb.run_tb(op, eps, gf=gf)
                per_eps[eps] = run
                for r in run.rows:
                    res.rows.append({"case": case.label, "m": m, "P": op.grid.P, **r})
            main = per_eps[cfg.eps_default]
            summ.append({"m": m, "eta": main.eta, "carleson_bound": main.carleson_bound})
            lab_ = case.label
            res.checks.append(Check("tb", lab_, "forced_bounds_violations", main.forced_violations, "== 0",
                                    main.forced_violations == 0, m))
            res.checks.append(Check("tb", lab_, "eta", main.eta, "> 0", main.eta > 0, m))
            worst = max(r["lhs"] - r["rhs"] for r in main.rows)
            res.checks.append(Check("tb", lab_, "sawtooth_lhs_minus_rhs", worst, "<= 0 at every cube", main.all_dominated, m))
            res.checks.append(Check("tb", lab_, "carleson_bound_finite", main.carleson_bound, "finite",
                                    bool(np.isfinite(main.carleson_bound)), m))
            l21 = [per_eps[e].grad_dev_max for e in sorted(per_eps)]
            growth = _null_ratio(l21[0], l21[-1])
            res.checks.append(Check("tb", lab_, "grad_dev_small_eps_growth", growth, "<= 2 (smallest eps vs largest)",
                                    growth <= 2, m))
        if len(summ) >= 2:
            for a, b in zip(summ, summ[1:]):
                v = rel_variation([a["eta"], b["eta"]])
                res.checks.append(Check("tb", case.label, "eta_refinement", v, "< 0.25", v < 0.25, b["m"]))
                x, y = sorted((a["carleson_bound"], b["carleson_bound"]))
                r = _null_ratio(y, x)
                res.checks.append(Check("tb", case.label, "carleson_bound_refinement", r, "< 2", r < 2, b["m"]))
    return res


SUITE_FUNCS = {
    "kato": suite_kato,
    "gaussfit": suite_gaussfit,
    "squarefunc": suite_squarefunc,
    "carleson": suite_carleson,
    "tb": suite_tb,
}


def run_suite(lab: Lab, name: str) -> SuiteResult:
    """Run one suite; an exception is recorded as a failed suite instead of aborting the run."""
    t0 = time.perf_counter()
    try:
        res = SUITE_FUNCS[name](lab)
    except Exception as exc:  # recorded, the run continues
        res = SuiteResult(name, error=f"{type(exc).__name__}: {exc}")
    res.duration = time.perf_counter() - t0
    return res
