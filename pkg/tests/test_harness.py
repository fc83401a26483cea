import json
import math

import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from yukawalab import cli
from yukawalab.harness import config as hc
from yukawalab.harness import report, runner

SMALL_MODEL = {"box_half_length": 8.0, "grid_size": 64}


def _flow_cfg(out, **flow):
    block = {"horizon": 1.0, "dt": 1e-2, "stride": 20, "snapshots": True}
    block.update(flow)
    return {"kind": "flow", "output_dir": str(out), "model": SMALL_MODEL, "initial": {"type": "modes", "meson_amplitude": 0.05}, "flow": block}


def test_defaults_fill_every_block():
    cfg = hc.resolve({"kind": "flow"})
    assert cfg["model"]["grid_size"] == 256
    assert cfg["tolerances"]["energy_drift"] == 1e-6
    assert cfg["quantum_sweep"]["hslash_list"] == [0.5, 0.25, 0.125]


def test_all_errors_are_reported():
    raw = {"kind": "nope", "bogus": 1, "model": {"grid_size": 100, "mass": "heavy"}, "flow": {"dt": -1.0}}
    with pytest.raises(hc.ConfigError) as exc:
        hc.resolve(raw)
    text = "\n".join(exc.value.errors)
    for needle in ("kind: must be one of", "bogus: unknown key", "model.mass: expected", "flow.dt: must be positive"):
        assert needle in text


def test_integer_accepted_for_float_and_bool_rejected():
    cfg = hc.resolve({"kind": "flow", "flow": {"horizon": 2}})
    assert isinstance(cfg["flow"]["horizon"], float)
    with pytest.raises(hc.ConfigError, match="got bool"):
        hc.resolve({"kind": "flow", "flow": {"horizon": True}})


def test_overrides_parse_yaml_values(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"kind": "hartree"}))
    cfg = hc.load(path, ["hartree.deltas=[0.2, 0.4]", "model.cutoff.radius=1.5", "seed=3"])
    assert cfg["hartree"]["deltas"] == [0.2, 0.4]
    assert cfg["model"]["cutoff"]["radius"] == 1.5
    assert cfg["seed"] == 3
    with pytest.raises(hc.ConfigError):
        hc.apply_overrides({}, ["no_equals_sign"])


def test_example_configs_validate():
    from pathlib import Path

    for path in sorted(Path(__file__).resolve().parent.parent.joinpath("configs").glob("*.yaml")):
        assert hc.RunConfig.from_file(path).kind in hc.KINDS


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=20))
def test_csv_floats_round_trip(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("csv") / "t.csv"
    rows = [{"i": i, "v": v} for i, v in enumerate(values)]
    report.emit_report(rows, "csv", path, ["i", "v"])
    header, back = report.read_csv(path)
    assert header == ["i", "v"]
    assert [r["v"] for r in back] == [float(v) for v in values]


def test_empty_table_and_json(tmp_path):
    p = report.emit_report([], "csv", tmp_path / "empty.csv", ["a", "b"])
    assert p.read_text() == "a,b\n"
    with pytest.raises(ValueError):
        report.emit_report([], "csv", tmp_path / "x.csv")
    j = report.emit_report({"x": float("nan"), "z": 1 + 2j}, "json", tmp_path / "r.json")
    data = json.loads(j.read_text())
    assert data == {"x": "nan", "z": {"re": 1.0, "im": 2.0}}
    with pytest.raises(ValueError):
        report.emit_report([], "xml", tmp_path / "r.xml", ["a"])


def test_flow_run_outputs_and_determinism(tmp_path):
    hashes = []
    for name in ("a", "b"):
        man = runner.run_experiment(hc.RunConfig.from_dict(_flow_cfg(tmp_path / name)))
        assert man.status == "ok"
        assert man.summary["max_mass_drift"] <= 1e-12
        files = json.loads((tmp_path / name / "manifest.json").read_text())["files"]
        assert {"trajectory.csv", "grid_x.csv", "grid_k.csv", "snapshots.bin"} <= set(files)
        hashes.append(files)
    assert hashes[0] == hashes[1]
    header, rows = report.read_csv(tmp_path / "a" / "trajectory.csv")
    assert header == list(runner.TRAJECTORY_COLUMNS)
    assert rows[-1]["t"] == pytest.approx(1.0)


def test_hartree_run(tmp_path):
    raw = {"kind": "hartree", "output_dir": str(tmp_path), "model": SMALL_MODEL, "hartree": {"deltas": [0.3], "starts": 2}}
    man = runner.run_experiment(hc.RunConfig.from_dict(raw))
    _, rows = report.read_csv(tmp_path / "hartree.csv")
    assert rows[0]["residual"] <= 1e-8
    assert rows[0]["identity_gap"] <= 1e-10
    assert man.summary["max_residual"] == rows[0]["residual"]


def test_numerical_failure_writes_manifest(tmp_path):
    raw = {"kind": "hartree", "output_dir": str(tmp_path), "model": SMALL_MODEL, "hartree": {"deltas": [0.5], "starts": 1, "method": "pg", "max_iter": 1}}
    with pytest.raises(runner.NumericalFailure) as exc:
        runner.run_experiment(hc.RunConfig.from_dict(raw))
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["status"] == "failed" and "ConvergenceError" in man["error"]
    assert exc.value.manifest.status == "failed"


def test_cli_exit_codes_and_report(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("kind: flow\nflow: {dt: -1}\nextra: 1\n")
    assert cli.main(["validate", str(bad)]) == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "flow.dt" in err and "extra" in err
    assert cli.main(["validate", str(tmp_path / "missing.yaml")]) == cli.EXIT_CONFIG

    good = tmp_path / "good.yaml"
    good.write_text(yaml.safe_dump(_flow_cfg(tmp_path / "run")))
    assert cli.main(["run", str(good), "--override", "flow.horizon=0.5", "--report"]) == cli.EXIT_OK
    out = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert out["status"] == "ok"
    fig = tmp_path / "run" / "figures" / "flow_drift.png"
    assert fig.exists() and fig.read_bytes()[:4] == b"\x89PNG"
    man = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert "figures/flow_drift.png" in man["files"]

    assert cli.main(["report", str(tmp_path / "nowhere")]) == cli.EXIT_CONFIG


def test_cli_numerical_exit_code(tmp_path):
    cfg = tmp_path / "c.yaml"
    raw = {"kind": "hartree", "output_dir": str(tmp_path / "o"), "model": SMALL_MODEL, "hartree": {"deltas": [0.5], "starts": 1, "method": "pg", "max_iter": 1}}
    cfg.write_text(yaml.safe_dump(raw))
    assert cli.main(["run", str(cfg)]) == cli.EXIT_NUMERICAL


def test_hartree_report_figure(tmp_path):
    raw = {"kind": "hartree", "output_dir": str(tmp_path), "model": SMALL_MODEL, "hartree": {"deltas": [0.3], "starts": 1}}
    runner.run_experiment(hc.RunConfig.from_dict(raw))
    paths = report.render_report(tmp_path)
    assert [p.name for p in paths] == ["hartree_density.png"]


def test_non_finite_cells_are_strings():
    assert report._plain(math.inf) == "inf"
    assert report._cell(0.1) == "0.1"
