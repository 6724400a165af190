import json
import mpmath
import pytest
import yaml

from suspflow import cli
from suspflow.analysis import ball_volume_fraction
from suspflow.config import expand_symbol, has_integer_relation, load, validate
from suspflow.runner import CSV_COLUMNS


def write(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(data if isinstance(data, str) else yaml.safe_dump(data, sort_keys=False))
    return path


OCCUPATION = {
    "base": {"dimension": 4, "rotation": ["sqrt2", "sqrt3", "golden", "sqrt6"]},
    "profile": {"kind": "unit"},
    "experiment": "occupation",
    "params": {"delta": 0.2, "horizons": [1000], "points": 1},
    "seed": 3,
}


def test_symbols_expand():
    mpmath.mp.dps = 40
    assert expand_symbol("sqrt2") == float(mpmath.sqrt(2) - 1)
    assert expand_symbol("golden") == float((mpmath.sqrt(5) - 1) / 2)
    assert expand_symbol("sqrt6") == float(mpmath.sqrt(6) - 2)
    assert expand_symbol("0.125") == 0.125
    with pytest.raises(ValueError):
        expand_symbol("pi-ish")


def test_integer_relation():
    assert has_integer_relation([0.25, 0.5])
    assert has_integer_relation([expand_symbol("sqrt2"), 1 - expand_symbol("sqrt2")])
    assert not has_integer_relation([expand_symbol(t) for t in ("sqrt2", "sqrt3", "golden", "sqrt6")])


def test_valid_config_has_no_diagnostics(tmp_path):
    assert validate(write(tmp_path, OCCUPATION)) == []


def test_rational_rotation_warns(tmp_path):
    cfg = dict(OCCUPATION, base={"dimension": 2, "rotation": ["0.5", "0.25"]})
    diags = validate(write(tmp_path, cfg))
    assert [d.level for d in diags] == ["warning"]
    assert "base map not minimal" in diags[0].message


def test_bad_theta(tmp_path):
    cfg = dict(OCCUPATION, profile={"kind": "theta", "theta": 1.5})
    diags = validate(write(tmp_path, cfg))
    assert any("theta must lie in (0,1)" in d.message for d in diags)


def test_unknown_experiment_exit_code(tmp_path, capsys):
    path = write(tmp_path, dict(OCCUPATION, experiment="nosuch"))
    assert cli.main(["run", str(path), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "experiment" in err and "nosuch" in err
    line = path.read_text().splitlines().index("experiment: nosuch") + 1
    assert f"line {line}:" in err


def test_syntax_error_reports_line(tmp_path):
    path = write(tmp_path, "experiment: occupation\nparams: [1, 2\n")
    diags = validate(path)
    assert diags and diags[0].level == "error" and diags[0].line is not None


def test_missing_file():
    diags = validate("/nonexistent/cfg.yaml")
    assert diags[0].field == "<file>"


def test_bad_sweep_axis(tmp_path):
    cfg = dict(OCCUPATION, sweep={"name": "nonsense", "values": [1, 2]})
    assert any(d.field == "sweep.name" for d in validate(write(tmp_path, cfg)))


def test_validate_command(tmp_path):
    assert cli.main(["validate", str(write(tmp_path, OCCUPATION))]) == 0
    bad = dict(OCCUPATION, profile={"kind": "theta", "theta": 1.5})
    assert cli.main(["validate", str(write(tmp_path, bad, "bad.yaml"))]) == 2


def test_run_occupation_unit(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["run", str(write(tmp_path, OCCUPATION)), "--out", str(out)]) == 0
    lines = (out / "results.csv").read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    row = lines[1].split(",")
    assert abs(float(row[5]) - ball_volume_fraction(0.2, 5)) < 0.02
    manifest = json.loads((out / "manifest.json").read_text())
    for f in manifest["files"]:
        assert (out / f).stat().st_size > 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["schema_version"] == 1


def test_manifest_hash_matches_config(tmp_path):
    import hashlib

    path = write(tmp_path, OCCUPATION)
    out = tmp_path / "o"
    cli.main(["run", str(path), "--out", str(out)])
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config_sha256"] == hashlib.sha256(path.read_bytes()).hexdigest()
    assert manifest["run_id"].endswith(manifest["config_sha256"][:12])


def test_family_scan_rows(tmp_path):
    cfg = {
        "experiment": "family-scan",
        "params": {"thetas": [0.4, 0.2, 0.1, 0.05], "delta": 0.1, "horizon": 100},
    }
    out = tmp_path / "o"
    assert cli.main(["run", str(write(tmp_path, cfg)), "--out", str(out)]) == 0
    rows = (out / "results.csv").read_text().splitlines()[1:]
    assert len(rows) == 4
    assert [r.split(",")[4] for r in rows] == [f"fraction[theta={t:g}]" for t in (0.4, 0.2, 0.1, 0.05)]


def test_seed_flag_changes_points(tmp_path):
    path = write(tmp_path, OCCUPATION)
    cli.main(["run", str(path), "--out", str(tmp_path / "a"), "--seed", "1"])
    cli.main(["run", str(path), "--out", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a/results.csv").read_text() != (tmp_path / "b/results.csv").read_text()


def test_all_truncated_exit_code(tmp_path):
    cfg = {
        "profile": {"kind": "power", "ell": 1},
        "experiment": "hitting",
        "params": {"d1": 0.1, "d2": 0.2, "blocks": 100000, "max_fast": 20},
    }
    assert cli.main(["run", str(write(tmp_path, cfg)), "--out", str(tmp_path / "o")]) == 3


@pytest.mark.parametrize("experiment,params", [
    ("hitting", {"d1": 0.1, "d2": 0.2, "blocks": 2}),
    ("gamma-divergence", {"decades": 2}),
    ("ball-floor", {"n": 2000, "eps": 0.2, "centers": 100}),
    ("lyapunov", {"n": 2000}),
    ("cocycle-check", {"samples": 3}),
    ("rank", {}),
    ("first-hit", {"d1": 0.05, "d2": 0.1, "samples": 10}),
])
def test_every_experiment_runs(tmp_path, experiment, params):
    cfg = {"profile": {"kind": "power", "ell": 2}, "experiment": experiment, "params": params}
    out = tmp_path / "o"
    assert cli.main(["run", str(write(tmp_path, cfg)), "--out", str(out)]) == 0
    rows = (out / "results.csv").read_text().splitlines()[1:]
    assert rows and all(r.startswith(experiment + ",") for r in rows)


def test_load_fills_defaults(tmp_path):
    cfg = load(write(tmp_path, {"experiment": "lyapunov"}))
    assert cfg.params["lam"] == 2.0 and cfg.workers == 1
