"""Command-line experiment runner: ``run``, ``diff`` and ``list-families``."""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import io
import json
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import SUITES, ConfigError, load_config
from .ensembles import DRAW_PATHS
from .operator import FIELD_FAMILIES
from .suites import Lab, run_suite
from .weights import WEIGHT_FAMILIES

DEFAULT_OUT = "katolab-out"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.12g" % float(v)
    return str(v)


def write_csv(path: Path, rows: list[dict]) -> None:
    """CSV with '.' decimals, ``%.12g`` floats and LF line endings; columns in first-seen order."""
    cols = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(cols)
    for r in rows:
        wr.writerow([_fmt(r.get(k)) for k in cols])
    path.write_bytes(buf.getvalue().encode())


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _dump(path: Path, obj) -> None:
    path.write_bytes((json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n").encode())


def run(config_path: str, out: str | None = None, suites: list[str] | None = None, seed: int | None = None,
        threads: int = 1, stream=sys.stdout) -> int:
    """Execute the configured suites; returns the exit status (1 iff any check fails)."""
    from threadpoolctl import threadpool_limits

    cfg = load_config(config_path)
    if suites is not None:
        bad = [s for s in suites if s not in SUITES]
        if bad:
            raise ConfigError("--suites", f"unknown suites {bad}; known: {list(SUITES)}")
        cfg.suites = [s for s in SUITES if s in suites]
    if seed is not None:
        if not 0 <= seed < 2**64:
            raise ConfigError("--seed", "must be an unsigned 64-bit integer")
        cfg.seed = seed
    out_dir = Path(out or os.environ.get("KATOLAB_OUT") or cfg.out or DEFAULT_OUT)
    out_dir.mkdir(parents=True, exist_ok=True)

    started = dt.datetime.now(dt.timezone.utc).isoformat()
    lab = Lab(cfg)
    results = []
    with threadpool_limits(limits=threads):
        for name in cfg.suites:
            res = run_suite(lab, name)
            results.append(res)
            write_csv(out_dir / f"{name}.csv", res.rows)
            n_fail = sum(not c.passed for c in res.checks)
            status = "ERROR " + res.error if res.error else ("PASS" if res.passed else f"FAIL ({n_fail} checks)")
            print(f"{name}: {status} [{len(res.checks)} checks, {res.duration:.1f}s]", file=stream)
            for c in res.checks:
                if not c.passed:
                    print(f"  FAIL {c.case} m={c.m} {c.name} = {c.value:.6g} (need {c.threshold})", file=stream)

    passed = all(r.passed for r in results)
    summary = {
        "config_digest": cfg.digest(),
        "config": cfg.canonical(),
        "passed": passed,
        "suites": {
            r.name: {
                "passed": r.passed,
                "error": r.error,
                "n_checks": len(r.checks),
                "n_failed": sum(not c.passed for c in r.checks),
                "checks": [c.as_dict() for c in r.checks],
            }
            for r in results
        },
    }
    _dump(out_dir / "summary.json", summary)
    manifest = {
        "tool": "katolab",
        "version": __version__,
        "config_path": str(config_path),
        "config_digest": cfg.digest(),
        "started": started,
        "finished": dt.datetime.now(dt.timezone.utc).isoformat(),
        "durations_s": {r.name: round(r.duration, 3) for r in results},
        "threads": threads,
        "rng": {"generator": "numpy Philox", "seed": cfg.seed, "draw_paths": list(DRAW_PATHS)},
        "python": platform.python_version(),
        "numpy": np.__version__,
        "files": [f"{r.name}.csv" for r in results] + ["summary.json"],
    }
    _dump(out_dir / "manifest.json", manifest)
    return 0 if passed else 1


def _flatten(summary: dict) -> dict:
    flat = {"passed": summary.get("passed")}
    for sname, s in summary.get("suites", {}).items():
        for c in s.get("checks", []):
            flat[f"{sname}/{c['case']}/m={c['m']}/{c['name']}"] = c["value"]
    return flat


def report_diff(dir_a: str, dir_b: str) -> list[str]:
    """Field-by-field comparison of two runs' summaries with relative deltas."""
    loaded = []
    for d in (dir_a, dir_b):
        if not (Path(d) / "manifest.json").is_file():
            raise FileNotFoundError(f"no manifest.json in {d}")
        loaded.append(_flatten(json.loads((Path(d) / "summary.json").read_text())))
    a, b = loaded
    lines = []
    for k in sorted(set(a) | set(b)):
        va, vb = a.get(k), b.get(k)
        if va == vb:
            continue
        if isinstance(va, (int, float)) and isinstance(vb, (int, float)) and not isinstance(va, bool):
            rel = abs(vb - va) / max(abs(va), abs(vb), 1e-300)
            lines.append(f"{k}: {va:.12g} -> {vb:.12g} (rel {rel:.3g})")
        else:
            lines.append(f"{k}: {va!r} -> {vb!r}")
    return lines


def list_families() -> list[str]:
    return [f"weight: {name}" for name in WEIGHT_FAMILIES] + [f"field: {name}" for name in FIELD_FAMILIES]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="katolab", description="Weighted Kato square-root verification laboratory.")
    sub = p.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run the configured suites")
    r.add_argument("config")
    r.add_argument("--out", help=f"output directory (default: $KATOLAB_OUT, config 'out', or {DEFAULT_OUT})")
    r.add_argument("--suites", help="comma-separated subset of " + ",".join(SUITES))
    r.add_argument("--seed", type=int, help="override the ensemble seed (unsigned 64-bit)")
    r.add_argument("--threads", type=int, default=1, help="BLAS threads (default 1, for bitwise determinism)")
    d = sub.add_parser("diff", help="compare the summaries of two runs")
    d.add_argument("dir_a")
    d.add_argument("dir_b")
    sub.add_parser("list-families", help="list weight and coefficient families")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.cmd == "run":
        try:
            suites = args.suites.split(",") if args.suites else None
            return run(args.config, args.out, suites, args.seed, args.threads)
        except (ConfigError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    if args.cmd == "diff":
        try:
            lines = report_diff(args.dir_a, args.dir_b)
        except FileNotFoundError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print("\n".join(lines))
        return 0
    print("\n".join(list_families()))
    return 0


if __name__ == "__main__":
    sys.exit(main())
