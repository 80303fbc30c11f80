import json

import pytest

from dyndet.cli import ConfigError, ExperimentConfig, emit, main, run

FAST = {"M_max": 4, "N": 6, "homotopy_levels": [32, 64], "algebra_resolution": 64, "algebra_tol": 0.05}


def write_config(tmp_path, **over):
    d = dict(FAST, **over)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(d))
    return p


def test_config_round_trip():
    cfg = ExperimentConfig(model="perturbed", M_max=5, checks=("orbits", "det"))
    again = ExperimentConfig.from_json(cfg.to_json())
    assert again == cfg and again.hash() == cfg.hash()
    # output location and threads do not change the numerical hash
    assert ExperimentConfig(out="/elsewhere", threads=4).hash() == ExperimentConfig().hash()
    assert ExperimentConfig(N=8).hash() != ExperimentConfig().hash()


@pytest.mark.parametrize(
    "bad",
    [{"M_max": 0}, {"N": 3}, {"checks": ["nope"]}, {"model": "unknown"}, {"homotopy_levels": [4]}, {"colour": 1}],
)
def test_config_rejects(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json("[1, 2]")


def test_homotopy_only_report():
    # two coarse levels only: the mechanics matter here, the 1e-3 target is tested elsewhere
    rep = run(ExperimentConfig.from_dict(dict(FAST, checks=["homotopy"], homotopy_tol=5e-3)))
    assert list(rep.stages) == ["homotopy"]
    st = rep.stages["homotopy"]
    assert st.status == "pass", st.checks
    assert {"homotopy_k0", "homotopy_k1", "homotopy_k2"} <= set(st.checks)
    assert "homotopy_k1.csv" in rep.tables


def test_dependencies_run_first():
    rep = run(ExperimentConfig.from_dict(dict(FAST, checks=["det"])))
    assert list(rep.stages) == ["orbits", "det"]
    assert rep.passed


def test_exit_codes(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["det", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert (tmp_path / "a" / "summary.json").exists()
    strict = write_config(tmp_path, homotopy_tol=1e-12)
    assert main(["homotopy", "--config", str(strict), "--out", str(tmp_path / "b")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["det", "--config", str(bad), "--out", str(tmp_path / "c")]) == 2
    assert main(["det", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["bogus"]) == 2
    assert main(["det", "--config", str(cfg), "--modes", "2", "--out", str(tmp_path / "d")]) == 2
    out = capsys.readouterr()
    assert "overall:" in out.out and "invalid input" in out.err


def test_csv_outputs_are_byte_identical(tmp_path):
    cfg = write_config(tmp_path)
    for name in ("r1", "r2"):
        assert main(["det", "--config", str(cfg), "--out", str(tmp_path / name), "--format", "csv"]) == 0
    files = sorted(p.name for p in (tmp_path / "r1").iterdir())
    assert {"traces.csv", "orbits.csv", "series.csv", "zeros.csv"} <= set(files)
    for f in files:
        assert (tmp_path / "r1" / f).read_bytes() == (tmp_path / "r2" / f).read_bytes()


def test_output_directory_from_environment(tmp_path, monkeypatch):
    target = tmp_path / "from-env"
    monkeypatch.setenv("DYNDET_OUT", str(target))
    assert main(["orbits", "--config", str(write_config(tmp_path)), "--format", "json"]) == 0
    summary = json.loads((target / "summary.json").read_text())
    assert summary["passed"] and "orbits" in summary["stages"]


def test_stage_isolation(tmp_path):
    """A failing or heavy independent stage does not alter the others' tables."""
    base = ExperimentConfig.from_dict(dict(FAST, checks=["orbits", "det"]))
    more = ExperimentConfig.from_dict(dict(FAST, checks=["orbits", "det", "homotopy"], homotopy_tol=1e-12))
    a, b = run(base), run(more)
    assert b.stages["homotopy"].status == "fail"
    assert a.stages["det"].status == b.stages["det"].status == "pass"
    for name in a.tables:
        assert a.tables[name] == b.tables[name]
    paths = emit(a, tmp_path / "iso", "json")
    assert [p.name for p in paths] == ["summary.json"]
    with pytest.raises(ValueError):
        emit(a, tmp_path / "iso", "xml")


def test_linear_all_checks_pass():
    rep = run(ExperimentConfig(model="linear"))
    failing = {s: {c: v for c, v in st.checks.items() if not v["pass"]} for s, st in rep.stages.items() if st.status != "pass"}
    assert rep.passed, failing
    assert list(rep.stages) == ["orbits", "det", "spectra", "homotopy", "kneading"]
