import csv
import hashlib
import io
import json
import math
import os
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from conelrt import experiments as exp
from conelrt.experiments import ConfigError, PowerCurvePoint, ScenarioConfig


def small_config(scenario, tmp_path, **kw):
    defaults = dict(
        scenario=scenario, n_grid=[48], param_grid=[0.0, 3.0],
        alpha=0.05, reps_power=300, reps_calibration=2000,
        master_seed=11, output_dir=str(tmp_path), extra={},
    )
    defaults.update(kw)
    return ScenarioConfig(**defaults)


def null_rows(points):
    return [p for p in points if p.param == 0.0]


@pytest.mark.parametrize("scenario,kw", [
    ("circular", {}),
    ("lasso", dict(n_grid=[60], extra={"p": 8, "lambda_const": 4.0},
                   param_grid=[0.0, 4.0])),
    ("iso", dict(n_grid=[128], param_grid=[0.0, 1.5])),
    ("subspace-cone", dict(n_grid=[32], param_grid=[0.0, 6.0],
                           extra={"orders": [0]})),
    ("fig2", dict(n_grid=[256], param_grid=[0.0, 1.0])),
])
def test_scenarios_run_and_null_rows_have_size_alpha(scenario, kw, tmp_path):
    config = small_config(scenario, tmp_path, **kw)
    points, manifest = exp.run_scenario(config)
    assert points
    for p in null_rows(points):
        se = max(p.empirical_se, math.sqrt(0.05 * 0.95 / p.reps))
        assert abs(p.empirical_power - config.alpha) <= 3 * se, p.scenario
    for p in points:
        assert 0.0 <= p.empirical_power <= 1.0
        assert p.empirical_se == pytest.approx(
            math.sqrt(p.empirical_power * (1 - p.empirical_power) / p.reps))
    assert manifest["csv_sha256"]


def test_fig1_orders_power_by_decay(tmp_path):
    config = small_config("fig1", tmp_path, n_grid=[512],
                          param_grid=[0.1, 0.9], reps_power=300)
    points, _ = exp.run_scenario(config)
    by = {(p.scenario, p.param): p.empirical_power for p in points}
    assert by[("fig1:flat", 0.1)] > by[("fig1:flat", 0.9)]
    assert by[("fig1:decay", 0.1)] > by[("fig1:decay", 0.9)]
    # no prediction column for this scenario
    assert all(p.predicted_power is None for p in points)


def test_counterexamples_notes(tmp_path):
    config = small_config("counterexamples", tmp_path, n_grid=[256],
                          param_grid=[0.9], reps_power=200,
                          reps_calibration=2000,
                          extra={"oracle_reps": 200000, "reps_variance": 400})
    points, manifest = exp.run_scenario(config)
    notes = manifest["notes"]
    assert 0 < notes["c0"] < 1
    assert notes["gap_at_c1"] < 0
    assert 0.5 < notes["predicted_variance_ratio"] < 1.1
    assert abs(notes["variance_of_standardized_statistic"]
               - notes["predicted_variance_ratio"]) <= 6 * notes["variance_se"] + 0.1
    sides = {p.scenario for p in points}
    assert sides == {"counterexamples:one-sided", "counterexamples:two-sided"}


def test_rerun_is_byte_identical(tmp_path):
    config = small_config("circular", tmp_path, reps_power=200,
                          reps_calibration=1500)
    exp.run_scenario(config)
    first = (tmp_path / "circular.csv").read_bytes()
    first_svg = (tmp_path / "circular.svg").read_bytes()
    exp.run_scenario(config)
    assert (tmp_path / "circular.csv").read_bytes() == first
    assert (tmp_path / "circular.svg").read_bytes() == first_svg


def test_csv_format_rules(tmp_path):
    pts = [
        PowerCurvePoint(scenario="fig1:flat", n=8, param=0.25, reps=100,
                        empirical_power=1 / 3, empirical_se=0.047140452079,
                        predicted_power=None, m_hat=1.234567890123456,
                        sigma_hat=2.0, seed=77),
    ]
    path = tmp_path / "t.csv"
    exp.emit_csv(pts, str(path))
    text = path.read_text()
    lines = text.strip().splitlines()
    assert lines[0] == ",".join(exp.CSV_HEADER)
    row = next(csv.reader(io.StringIO(lines[1])))
    assert row[exp.CSV_HEADER.index("predicted_power")] == ""       # not "NaN"
    assert row[exp.CSV_HEADER.index("empirical_power")] == "0.333333333333"
    assert row[exp.CSV_HEADER.index("m_hat")] == "1.23456789012"    # 12 digits
    assert row[exp.CSV_HEADER.index("seed")] == "77"


def test_single_point_outputs_are_well_formed(tmp_path):
    pts = [PowerCurvePoint(scenario="solo", n=4, param=1.0, reps=10,
                           empirical_power=0.5, empirical_se=0.158,
                           predicted_power=0.4, m_hat=1.0, sigma_hat=1.0,
                           seed=1)]
    exp.emit_csv(pts, str(tmp_path / "one.csv"))
    assert len((tmp_path / "one.csv").read_text().strip().splitlines()) == 2
    exp.emit_svg(pts, str(tmp_path / "one.svg"))
    root = ET.fromstring((tmp_path / "one.svg").read_text())
    assert root.tag.endswith("svg")


def test_svg_has_polyline_per_curve(tmp_path):
    config = small_config("circular", tmp_path, reps_power=150,
                          reps_calibration=1200)
    points, _ = exp.run_scenario(config)
    root = ET.fromstring((tmp_path / "circular.svg").read_text())
    polylines = [el for el in root.iter() if el.tag.endswith("polyline")]
    # two curves, each with an empirical and a predicted line
    assert len(polylines) == 4


def test_manifest_hashes_and_config_echo(tmp_path):
    config = small_config("iso", tmp_path, n_grid=[96], param_grid=[0.0],
                          reps_power=150, reps_calibration=1200)
    points, manifest = exp.run_scenario(config)
    data = (tmp_path / "iso.csv").read_bytes()
    assert manifest["csv_sha256"] == hashlib.sha256(data).hexdigest()
    assert manifest["config"]["scenario"] == "iso"
    on_disk = json.loads((tmp_path / "manifest.json").read_text())
    assert on_disk["csv_sha256"] == manifest["csv_sha256"]
    assert all("seed" in p for p in on_disk["points"])


def test_config_validation():
    with pytest.raises(ConfigError):
        exp.config_from_dict({"scenario": "nope", "n_grid": [4], "param_grid": [1]})
    with pytest.raises(ConfigError):
        exp.config_from_dict({"scenario": "fig1", "n_grid": [], "param_grid": [1]})
    with pytest.raises(ConfigError):
        exp.config_from_dict({"scenario": "fig1", "n_grid": [4], "param_grid": [1],
                              "bogus": True})
    with pytest.raises(ConfigError):
        exp.config_from_dict({"scenario": "fig1", "n_grid": [4], "param_grid": [1],
                              "alpha": "big"})
    with pytest.raises(ConfigError):
        exp.config_from_dict({"n_grid": [4], "param_grid": [1]})
    cfg = exp.config_from_dict({"scenario": "fig1", "n_grid": [4],
                                "param_grid": [0.5], "reps_power": 100,
                                "reps_calibration": 1000})
    assert cfg.alpha == 0.05


def test_load_config_round_trip(tmp_path):
    cfg = small_config("fig2", tmp_path, n_grid=[64], param_grid=[0.0, 0.5])
    doc = {k: v for k, v in cfg.__dict__.items()}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    loaded = exp.load_config(str(path))
    assert loaded == cfg
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        exp.load_config(str(bad))


def test_iso_alternative_stays_monotone():
    grid, alt = exp.iso_local_alternative(200, 2.0)
    assert np.all(np.diff(alt) > 0)
    with pytest.raises(ConfigError):
        exp.iso_local_alternative(10, 10.0)


def test_failure_flushes_marker(tmp_path):
    config = small_config("iso", tmp_path, n_grid=[10], param_grid=[50.0],
                          reps_power=100, reps_calibration=1000)
    with pytest.raises(ConfigError):
        exp.run_scenario(config)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert "failed" in manifest
