import json
import math
import os
from pathlib import Path

import pytest

from splitmap.cli import main
from splitmap.config import ConfigError, apply_overrides, load_config, parse_config
from splitmap.runner import dump_json_17, emit_plots, run_scenario, sweep

SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "splitmap" / "scenarios"


def quick_doc(seed=5):
    return {
        "manifold": {"kind": "euclidean", "dimension": 2, "domain_radius": 3.0},
        "construction": {
            "beta": 12.0,
            "epsilon": 0.15,
            "q1_scale": 1.1,
            "ball_radius": 1.0,
            "net_samples": 500,
            "partner_budget": 3,
        },
        "sampling": {
            "seed": seed,
            "pair_count": 400,
            "bundle_count": 1500,
            "probe_grid": 300,
            "estimate_count": 800,
        },
    }


# ------------------------------------------------------------- config


def test_load_bundled_scenarios():
    for name in ("euclidean-n2.toml", "cone-n2.toml", "sphere-cap-n2.toml", "graph-euclidean-n2.toml"):
        cfg = load_config(SCENARIOS / name)
        assert cfg.sampling["seed"] is not None


def test_seed_mandatory():
    doc = quick_doc()
    del doc["sampling"]["seed"]
    with pytest.raises(ConfigError):
        parse_config(doc)


def test_unknown_key_rejected():
    doc = quick_doc()
    doc["construction"]["betaa"] = 3.0
    with pytest.raises(ConfigError):
        parse_config(doc)


def test_range_validation():
    doc = quick_doc()
    doc["construction"]["beta"] = 1.0
    with pytest.raises(ConfigError):
        parse_config(doc)


def test_override_plain_and_dotted():
    cfg = parse_config(quick_doc())
    cfg2 = apply_overrides(cfg, ["beta=20", "sampling.seed=9"])
    assert cfg2.construction["beta"] == 20.0
    assert cfg2.sampling["seed"] == 9


def test_override_unknown_key():
    cfg = parse_config(quick_doc())
    with pytest.raises(ConfigError):
        apply_overrides(cfg, ["nonsense=1"])


def test_echo_roundtrip():
    cfg = parse_config(quick_doc())
    again = parse_config(json.loads(json.dumps(cfg.echo())))
    assert again.echo() == cfg.echo()


def test_json_config_accepted(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(quick_doc()))
    cfg = load_config(path)
    assert cfg.construction["beta"] == 12.0


def test_malformed_toml_reports_error(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[manifold\nkind='euclidean'")
    with pytest.raises(ConfigError):
        load_config(path)


# ------------------------------------------------------------- json text


def test_dump_json_17_fixed_digits():
    text = dump_json_17({"x": 1.0 / 3.0, "bad": float("nan")})
    assert "0.33333333333333331" in text
    assert '"nan"' in text
    json.loads(text)


# ------------------------------------------------------------- runner


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = parse_config(quick_doc())
    art = run_scenario(cfg, out)
    return cfg, art, out


def test_run_artifacts_exist(run_dir):
    _, art, _ = run_dir
    assert art.exit_code() == 0
    for path in [art.frame_path, art.report_path, art.log_path, art.config_path, *art.csv_paths, *art.svg_paths]:
        assert Path(path).exists(), path


def test_run_report_schema(run_dir):
    _, art, _ = run_dir
    doc = json.loads(Path(art.report_path).read_text())
    assert doc["schema_version"] == 1
    assert math.isfinite(doc["report"]["headline_epsilon"])
    assert doc["config"]["construction"]["beta"] == 12.0


def test_run_deterministic(run_dir, tmp_path):
    cfg, art, _ = run_dir
    art2 = run_scenario(cfg, tmp_path / "again")
    a = Path(art.report_path).read_bytes()
    b = Path(art2.report_path).read_bytes()
    assert a == b


def test_emit_plots_for_reports(run_dir, tmp_path):
    _, art, _ = run_dir
    written = emit_plots([art.report_path], tmp_path / "plots")
    assert any(w.endswith("_gram.svg") for w in written)
    for w in written:
        body = Path(w).read_text()
        assert body.startswith("<svg")
        assert body.endswith("</svg>")


def test_sweep_runs_and_orders(tmp_path):
    cfg = parse_config(quick_doc())
    arts = sweep(cfg, "construction.beta", [16.0, 8.0], tmp_path, threads=1)
    table = (tmp_path / "sweep.csv").read_text().strip().split("\n")
    assert table[0].startswith("construction.beta")
    first = float(table[1].split(",")[0])
    second = float(table[2].split(",")[0])
    assert first < second  # sorted by knob
    assert (tmp_path / "sweep_epsilon.svg").exists()
    assert len(arts) == 2


# ------------------------------------------------------------- cli


def test_cli_run_exit_codes(tmp_path):
    scenario = tmp_path / "s.json"
    scenario.write_text(json.dumps(quick_doc()))
    code = main(["run", "--scenario", str(scenario), "--out", str(tmp_path / "o")])
    assert code == 0
    assert (tmp_path / "o" / "report.json").exists()


def test_cli_rejects_malformed(tmp_path, capsys):
    scenario = tmp_path / "bad.toml"
    scenario.write_text("not a config at all = [")
    code = main(["run", "--scenario", str(scenario), "--out", str(tmp_path / "o2")])
    assert code == 1
    assert not (tmp_path / "o2" / "report.json").exists()


def test_cli_override_echo(tmp_path):
    scenario = tmp_path / "s.json"
    scenario.write_text(json.dumps(quick_doc()))
    out = tmp_path / "o3"
    code = main(["run", "--scenario", str(scenario), "--out", str(out), "--override", "beta=16"])
    assert code == 0
    doc = json.loads((out / "report.json").read_text())
    assert doc["config"]["construction"]["beta"] == 16.0


def test_cli_env_out(tmp_path, monkeypatch):
    scenario = tmp_path / "s.json"
    scenario.write_text(json.dumps(quick_doc()))
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("SPLITMAP_OUT", str(tmp_path / "envout"))
    code = main(["run", "--scenario", str(scenario)])
    assert code == 0
    assert (tmp_path / "envout" / "report.json").exists()


def test_cli_sweep_empty_values(tmp_path):
    scenario = tmp_path / "s.json"
    scenario.write_text(json.dumps(quick_doc()))
    code = main(["sweep", "--scenario", str(scenario), "--axis", "construction.beta", "--values", "", "--out", str(tmp_path / "sw")])
    assert code == 1


def test_cli_plot_missing_report(tmp_path):
    code = main(["plot", "--report", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
    assert code == 1
