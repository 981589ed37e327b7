import json

import pytest

from katolab import cli
from katolab.config import ConfigError, load_config, parse_config


def _write(tmp_path, doc, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


KATO = {"grid": {"dim": 1, "m_list": [5, 6]}, "weight": "constant", "field": "identity",
        "ensemble": {"count": 24}, "suites": ["kato"]}


def test_config_defaults_and_errors(tmp_path):
    cfg = parse_config({})
    assert cfg.dim == 1 and cfg.suites[0] == "kato"
    bad = [
        ({"weight": "nonsense"}, "weight[0].family"),
        ({"grid": {"m_list": [8, 7]}}, "grid.m_list"),
        ({"grid": {"dim": 2, "m_list": [9]}}, "grid.m_list[0]"),
        ({"grid": {"dim": 2, "m_list": [6, 7]}}, "grid.m_list[1]"),
        ({"eps": {"sweep": [0.2]}}, "eps.sweep[0]"),
        ({"suites": ["plots"]}, "suites[0]"),
        ({"extra": 1}, "$"),
        ({"field": {"family": "complex_perturbation", "params": {"kappa": 2}}}, "field[0].params"),
        ({"weight": {"family": "power", "params": {"a": 1.5}}}, "weight[0].params"),
    ]
    for doc, path in bad:
        with pytest.raises(ConfigError) as ei:
            parse_config(doc)
        assert ei.value.path == path
    (tmp_path / "broken.json").write_text("{")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "broken.json")


def test_unknown_family_writes_nothing(tmp_path, capsys):
    out = tmp_path / "out"
    rc = cli.main(["run", _write(tmp_path, dict(KATO, field="mystery")), "--out", str(out)])
    assert rc == 2 and not out.exists()
    assert "field[0].family" in capsys.readouterr().err


def test_run_rows_and_determinism(tmp_path, capsys):
    cfg = _write(tmp_path, dict(KATO, grid={"dim": 1, "m_list": [5, 6, 7]}))
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", cfg, "--out", str(a)]) == 0
    assert cli.main(["run", cfg, "--out", str(b)]) == 0
    rows = (a / "kato.csv").read_text().splitlines()
    assert len(rows) == 1 + 3
    assert (a / "kato.csv").read_bytes() == (b / "kato.csv").read_bytes()
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()
    summary = json.loads((a / "summary.json").read_text())
    assert summary["passed"] and summary["suites"]["kato"]["n_failed"] == 0
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["config_digest"] == summary["config_digest"]
    assert cli.report_diff(str(a), str(b)) == []
    capsys.readouterr()
    assert cli.main(["diff", str(a), str(b)]) == 0


def test_seed_changes_results_and_diff(tmp_path):
    cfg = _write(tmp_path, KATO)
    a, b = tmp_path / "a", tmp_path / "b"
    cli.main(["run", cfg, "--out", str(a)])
    cli.main(["run", cfg, "--out", str(b), "--seed", "7"])
    assert cli.report_diff(str(a), str(b))
    with pytest.raises(FileNotFoundError):
        cli.report_diff(str(a), str(tmp_path))


def test_out_dir_from_env(tmp_path, monkeypatch):
    monkeypatch.setenv("KATOLAB_OUT", str(tmp_path / "env"))
    assert cli.main(["run", _write(tmp_path, KATO)]) == 0
    assert (tmp_path / "env" / "summary.json").is_file()


def test_list_families(capsys):
    assert cli.main(["list-families"]) == 0
    out = capsys.readouterr().out
    for name in ("weight: constant", "weight: power", "field: identity", "field: complex_perturbation"):
        assert name in out
