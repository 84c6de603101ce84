import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from wtbridge.cli import EXIT_ANALYSIS, EXIT_CONFIG, EXIT_OK, history_name, main, output_root
from wtbridge.config import ConfigError, dump, load_config, parse_config, set_value, simulation_config, violations
from wtbridge.coupled_solver import SimulationConfig, read_history_csv

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
QUICK = ["--duration", "10", "--set", "simulation.run_up=2", "--realisations", "2", "--jobs", "1"]


def test_defaults_are_clean():
    cfg = load_config()
    assert violations(cfg) == []
    sc = simulation_config(cfg, "WT", 3, 2)
    assert sc == SimulationConfig(scenario="WT", case=3, realisation=2)


@pytest.mark.parametrize("name", ["case1.yaml", "case2.yaml", "case3.yaml", "matrix.yaml", "linear_oracle.yaml"])
def test_shipped_configs_are_clean(name):
    assert violations(load_config(CONFIGS / name)) == []


def test_shape_errors_name_the_field(tmp_path):
    with pytest.raises(ConfigError, match=r"simulation\.duraton"):
        parse_config({"simulation": {"duraton": 10}})
    with pytest.raises(ConfigError, match=r"simulation\.dt"):
        parse_config({"simulation": {"dt": -1}})
    p = tmp_path / "bad.yaml"
    p.write_text("simulation: [1, 2\n")
    with pytest.raises(ConfigError, match="invalid YAML"):
        load_config(p)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.yaml")


def test_cross_field_violations(tmp_path):
    cfg = parse_config({"simulation": {"cases": [1], "mean_wind_U": 22.0},
                        "traffic": {"composition": {"car": 0.9, "van": 0.07}},
                        "files": {"bridge": str(tmp_path / "none.bridge")}})
    found = violations(cfg)
    assert any("case/wind-band mismatch" in v for v in found)
    assert any("sum to 0.97" in v for v in found)
    assert any(v.startswith("files.bridge") for v in found)
    cfg = parse_config({"traffic": {"composition": {"car": 0.5, "tram": 0.5}}})
    assert any("not in the vehicle catalog" in v for v in violations(cfg))


def test_relative_files_resolve_against_config_dir(tmp_path):
    (tmp_path / "sub").mkdir()
    p = tmp_path / "sub" / "c.yaml"
    p.write_text("files:\n  bridge: ../x.bridge\n")
    assert load_config(p).files.bridge == str((tmp_path / "x.bridge").resolve())


def test_set_value_and_dump_roundtrip():
    cfg = set_value(load_config(), "wind.intensity", "[0.2, 0.1, 0.05]")
    assert cfg.wind.intensity == (0.2, 0.1, 0.05)
    with pytest.raises(ConfigError, match="unknown section"):
        set_value(cfg, "nosuch.key", "1")
    with pytest.raises(ConfigError):
        set_value(cfg, "simulation.nosuch", "1")
    assert parse_config(yaml.safe_load(dump(cfg))) == cfg


def test_validate_verb(tmp_path, capsys):
    assert main(["validate", "--config", str(CONFIGS / "case3.yaml")]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("0 violations") and "resolved configuration" in out
    assert main(["validate", "--case", "1", "--wind-speed", "22"]) == EXIT_CONFIG
    assert "case/wind-band mismatch" in capsys.readouterr().out
    p = tmp_path / "c.yaml"
    p.write_text("traffic:\n  composition: {car: 0.9, van: 0.07}\n")
    assert main(["validate", "--config", str(p)]) == EXIT_CONFIG
    out = capsys.readouterr().out
    assert out.startswith("1 violation\n") and "0.97" in out
    assert main(["validate", "--set", "simulation.bogus=1"]) == EXIT_CONFIG


def test_output_root_env(monkeypatch, tmp_path):
    monkeypatch.setenv("WTBRIDGE_OUTPUT", str(tmp_path))
    assert output_root(None) == tmp_path
    assert output_root("x") == Path("x")
    assert history_name("WT", 3, 4) == "history_WT_case3_r04.csv"


def test_run_rejects_bad_config(tmp_path, capsys):
    assert main(["run", "--case", "1", "--wind-speed", "22", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "case/wind-band mismatch" in capsys.readouterr().err
    assert not (tmp_path / "manifest.json").exists()


def test_run_without_turbulence_is_quiet(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--scenario", "W", "--turbulence", "0", "--out", str(out)] + QUICK) == EXIT_OK
    for r in range(2):
        h = read_history_csv(out / history_name("W", 3, r))
        assert np.ptp(h.h, axis=0).max() < 1e-9  # only the steady mean-wind deflection remains


def test_run_analyze_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["run", "--scenario", "W", "T", "WT", "--case", "1", "3"] + QUICK
    assert main(args + ["--out", str(a)]) == EXIT_OK
    assert main(args + ["--out", str(b), "--jobs", "2"]) == EXIT_OK
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
    manifest = json.loads((a / "manifest.json").read_text())
    assert len(manifest["outputs"]) == 12
    assert set(manifest["config_hash"]) == {"1", "3"}
    assert (a / "timings.json").exists()
    first = manifest["outputs"][0]
    assert set(first["seeds"]) == {"wind", "roughness", "traffic", "params"}

    capsys.readouterr()
    assert main(["analyze", str(a / "manifest.json")]) == EXIT_OK
    printed = capsys.readouterr().out
    assert "width metric" in printed
    res = a / "analysis"
    for name in ("compare_1.csv", "compare_3.svg", "case_study.csv", "summary.json", "envelope_W+T_3.csv",
                 "psd_x1347_h_WT_3.csv", "psd_x1347_alpha_WT_1.svg"):
        assert (res / name).is_file(), name
    summary = json.loads((res / "summary.json").read_text())
    assert [r["case"] for r in summary["case_study"]] == [1, 3]
    assert main(["analyze", str(b / "manifest.json")]) == EXIT_OK
    for name in ("compare_3.csv", "case_study.csv", "summary.json", "compare_3.svg"):
        assert (res / name).read_bytes() == (b / "analysis" / name).read_bytes(), name


def test_analyze_errors(tmp_path, capsys):
    m = tmp_path / "manifest.json"
    m.write_text(json.dumps({"outputs": []}))
    assert main(["analyze", str(m)]) == EXIT_ANALYSIS
    assert "nothing to analyze" in capsys.readouterr().err
    m.write_text(json.dumps({"outputs": [{"scenario": "W", "case": 3, "realisation": 0, "path": "gone.csv"}]}))
    assert main(["analyze", str(m)]) == EXIT_ANALYSIS
    assert "gone.csv" in capsys.readouterr().err
    assert main(["analyze", str(tmp_path / "absent.json")]) == EXIT_ANALYSIS
