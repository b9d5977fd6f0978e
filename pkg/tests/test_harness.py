"""Study harness: heat data, tabular ingestion, manifests, artifact dumps."""
import csv
import json
import warnings
from pathlib import Path

import numpy as np
import pytest

from lipcert.errors import (
    ConstantColumn,
    MalformedCSV,
    NoEligibleCheckpoint,
    NonNumeric,
    OutOfDomain,
)
from lipcert.geometry import BoxDomain, grid_points
from lipcert.harness import (
    HeatScenario,
    build_manifest,
    canonical_json,
    config_hash,
    generate_heat_dataset,
    generate_tabular_csv,
    grid_min_partial,
    heat_solution,
    load_tabular,
    minmax_scale,
    minmax_unscale,
    parse_config_file,
    run_demo_from_manifest,
    run_heat_demo,
    run_tabular_demo,
    write_json,
    write_state_csvs,
    write_training_log,
)
from lipcert.lipvor import PositivityProblem, build_state
from lipcert.mlp import init_network, partials_batch
from _oracles import crank_nicolson_heat


# ---------------------------------------------------------------------------
# the closed-form heat solution


def test_heat_solution_agrees_with_finite_difference_solver():
    xs, ts, grid = crank_nicolson_heat(nx=201, nt=2000)
    xi = np.arange(0, 201, 8)
    ti = np.arange(0, 2001, 80)
    series = heat_solution(
        np.repeat(xs[xi], len(ti)), np.tile(ts[ti], len(xi))
    ).reshape(len(xi), len(ti))
    assert np.abs(series - grid[np.ix_(xi, ti)]).max() < 1e-4


def test_heat_solution_boundary_and_initial_conditions():
    ts = np.linspace(0.0, 1.0, 9)
    np.testing.assert_allclose(heat_solution(np.zeros(9), ts), ts, atol=1e-12)
    np.testing.assert_allclose(heat_solution(np.ones(9), ts), ts, atol=1e-12)
    xs = np.linspace(0.0, 1.0, 33)
    assert np.abs(heat_solution(xs, np.zeros(33))).max() < 1e-6


def test_heat_solution_is_increasing_in_time():
    xs = np.linspace(0.0, 1.0, 41)
    ts = np.linspace(0.0, 1.0, 41)
    xg = np.repeat(xs, len(ts))
    tg = np.tile(ts, len(xs))
    u = heat_solution(xg, tg).reshape(len(xs), len(ts))
    assert (np.diff(u, axis=1) >= -1e-9).all()


def test_heat_solution_validates_domain():
    with pytest.raises(OutOfDomain):
        heat_solution(1.5, 0.5)
    with pytest.raises(OutOfDomain):
        heat_solution(0.5, -0.1)


def test_heat_scenario_validation():
    with pytest.raises(ValueError):
        HeatScenario(rod_length=0.0)
    with pytest.raises(ValueError):
        HeatScenario(n_samples=3)
    with pytest.raises(ValueError):
        HeatScenario(noise_sigma=-0.1)
    dom = HeatScenario(rod_length=2.0).domain
    np.testing.assert_array_equal(dom.upper, [2.0, 1.0])


def test_heat_dataset_targets_are_solution_plus_noise():
    quiet = generate_heat_dataset(HeatScenario(n_samples=24, noise_sigma=0.0, seed=5))
    clean = heat_solution(quiet.inputs[:, 0], quiet.inputs[:, 1])
    np.testing.assert_allclose(quiet.targets, clean, atol=1e-12)
    noisy = generate_heat_dataset(HeatScenario(n_samples=24, noise_sigma=0.02, seed=5))
    np.testing.assert_array_equal(noisy.inputs, quiet.inputs)
    resid = noisy.targets - clean
    assert 0.0 < np.abs(resid).max() < 0.1
    n = 24
    assert len(noisy.test_idx) == round(0.2 * n)
    assert len(noisy.val_idx) == round(0.2 * (n - len(noisy.test_idx)))


# ---------------------------------------------------------------------------
# scaling and CSV ingestion


def test_minmax_scale_maps_extremes_to_unit_interval():
    scaled, lo, hi = minmax_scale(np.array([[0.0, 5.0], [10.0, 7.0]]))
    np.testing.assert_allclose(scaled, [[0.0, 0.0], [1.0, 1.0]])
    np.testing.assert_allclose(minmax_unscale(scaled, lo, hi), [[0.0, 5.0], [10.0, 7.0]], atol=1e-12)


def test_minmax_round_trip_is_tight():
    rng = np.random.default_rng(3)
    cols = rng.normal(size=(40, 3)) * np.array([1.0, 50.0, 1e-3])
    scaled, lo, hi = minmax_scale(cols)
    assert scaled.min() == 0.0 and scaled.max() == 1.0
    np.testing.assert_allclose(minmax_unscale(scaled, lo, hi), cols, atol=1e-12)


def test_minmax_rejects_constant_columns():
    with pytest.raises(ConstantColumn):
        minmax_scale(np.array([[1.0, 2.0], [1.0, 3.0]]))


def write_csv(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        csv.writer(fh).writerows(rows)


def test_load_tabular_scales_features_and_keeps_targets_raw(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(path, [["a", "b", "y"], [0, 1, 7], [10, 3, 9]])
    data = load_tabular(path)
    np.testing.assert_allclose(sorted(data.inputs[:, 0]), [0.0, 1.0])
    np.testing.assert_allclose(sorted(data.inputs[:, 1]), [0.0, 1.0])
    assert sorted(data.targets) == [7.0, 9.0]


def test_load_tabular_split_proportions(tmp_path):
    path = tmp_path / "t.csv"
    rows = [["a", "b", "y"]] + [[i, 2 * i + (i % 3), i] for i in range(100)]
    write_csv(path, rows)
    data = load_tabular(path, seed=4)
    assert len(data.test_idx) == 25
    assert len(data.val_idx) == round(0.25 * 75)
    assert len(data.train_idx) == 100 - 25 - 19


def test_load_tabular_rejects_malformed_files(tmp_path):
    short = tmp_path / "short.csv"
    write_csv(short, [["a", "y"], [1, 2]])
    with pytest.raises(MalformedCSV):
        load_tabular(short)

    ragged = tmp_path / "ragged.csv"
    write_csv(ragged, [["a", "y"], [1, 2], [3]])
    with pytest.raises(MalformedCSV):
        load_tabular(ragged)

    nonnum = tmp_path / "nonnum.csv"
    write_csv(nonnum, [["a", "y"], [1, 2], ["x", 4]])
    with pytest.raises(NonNumeric):
        load_tabular(nonnum)

    nonfinite = tmp_path / "inf.csv"
    write_csv(nonfinite, [["a", "y"], [1, 2], ["inf", 4]])
    with pytest.raises(NonNumeric):
        load_tabular(nonfinite)

    narrow = tmp_path / "narrow.csv"
    write_csv(narrow, [["y"], [1], [2]])
    with pytest.raises(MalformedCSV):
        load_tabular(narrow)

    ok = tmp_path / "ok.csv"
    write_csv(ok, [["a", "y"], [1, 2], [3, 4], [5, 6]])
    with pytest.raises(MalformedCSV):
        load_tabular(ok, monotone_features=(1,))
    with pytest.raises(MalformedCSV):
        load_tabular(ok, domain=BoxDomain([0.2], [0.8]))


def test_generate_tabular_csv_is_deterministic_and_monotone(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    generate_tabular_csv(a, n_rows=50, seed=9)
    generate_tabular_csv(b, n_rows=50, seed=9)
    assert a.read_bytes() == b.read_bytes()
    rows = list(csv.reader(a.open()))
    assert rows[0] == ["f1", "f2", "f3", "f4", "score"]
    assert len(rows) == 51
    for row in rows[1:]:
        feats = [int(c) for c in row[:4]]
        assert all(1 <= f <= 9 for f in feats)
        assert int(row[4]) == round(np.mean(feats))


# ---------------------------------------------------------------------------
# config files, canonical JSON, manifests


def test_parse_config_file(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("# comment\n\nalpha = 1\nbeta=two words\n")
    assert parse_config_file(path) == {"alpha": "1", "beta": "two words"}
    bad = tmp_path / "bad.cfg"
    bad.write_text("just a line\n")
    with pytest.raises(MalformedCSV):
        parse_config_file(bad)


def test_canonical_json_sorts_keys_and_ends_with_newline(tmp_path):
    text = canonical_json({"b": 1, "a": [1, 2]})
    assert text.index('"a"') < text.index('"b"')
    assert text.endswith("\n")
    path = tmp_path / "x.json"
    write_json(path, {"b": 1, "a": [1, 2]})
    assert path.read_text() == text


def test_config_hash_tracks_content_not_key_order():
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_build_manifest_carries_params_and_hash():
    m = build_manifest("heat", {"seed": 3})
    assert m["demo"] == "heat"
    assert m["params"] == {"seed": 3}
    assert m["config_hash"] == config_hash({"seed": 3})
    assert "lipcert" in m["versions"] and "numpy" in m["versions"]


# ---------------------------------------------------------------------------
# artifact dumps


def test_state_csvs_round_trip_exact_floats(tmp_path):
    dom = BoxDomain([0.0, 0.0], [1.0, 1.0])
    prob = PositivityProblem(lambda p: 0.3 + 0.1 * p[0], 1.0, 0.1, dom)
    state = build_state(prob, np.array([[1 / 3, 0.2], [0.8, 2 / 3]]))
    ppath, cpath = tmp_path / "points.csv", tmp_path / "cells.csv"
    write_state_csvs(state, ppath, cpath)

    rows = list(csv.reader(ppath.open()))
    assert rows[0] == ["index", "x0", "x1", "value", "radius", "violation"]
    assert len(rows) == 3
    for i, row in enumerate(rows[1:]):
        assert [float(c) for c in row[1:3]] == list(state.points[i])
        assert float(row[3]) == state.values[i]
        assert float(row[4]) == state.radii[i]

    cell_rows = list(csv.reader(cpath.open()))
    assert cell_rows[0] == ["generator_index", "x0", "x1"]
    assert len(cell_rows) == 1 + sum(len(c.vertices) for c in state.cells)


def test_training_log_layout(tmp_path):
    history = {
        "train_base": [1.0, 0.5],
        "train_penalty": [0.2, 0.0],
        "train_total": [1.02, 0.5],
        "val_base": [1.1, 0.6],
        "val_penalty": [0.0, 0.0],
        "val_total": [1.1, 0.6],
    }
    path = tmp_path / "log.csv"
    write_training_log(path, history)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["epoch", "base_loss", "penalty", "total", "val_total"]
    assert rows[1] == ["1", "1.0", "0.2", "1.02", "1.1"]
    assert rows[2] == ["2", "0.5", "0.0", "0.5", "0.6"]


def test_grid_min_partial_matches_brute_force():
    net = init_network(2, (4,), seed=8)
    dom = BoxDomain([0.0, 0.0], [1.0, 1.0])
    got = grid_min_partial(net, dom, 0, 31)
    brute = partials_batch(net, grid_points(dom, 31), 0).min()
    assert got == pytest.approx(float(brute), rel=1e-12)
    flipped = grid_min_partial(net, dom, 0, 31, sign=-1.0)
    brute_neg = (-partials_batch(net, grid_points(dom, 31), 0)).min()
    assert flipped == pytest.approx(float(brute_neg), rel=1e-12)


# ---------------------------------------------------------------------------
# demo runs and manifest reruns (scaled down for test speed)


FAST_HEAT = dict(
    n_samples=16,
    max_epochs=60,
    patience=60,
    budget=40,
    max_rounds=1,
    make_figures=False,
)

FAST_TABULAR = dict(
    n_rows=60,
    max_epochs=60,
    patience=60,
    budget=25,
    max_rounds=1,
    make_figures=False,
)


def run_quiet(fn, *args, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NoEligibleCheckpoint)
        return fn(*args, **kwargs)


def test_heat_demo_writes_all_artifacts(tmp_path):
    out = tmp_path / "heat"
    payload = run_quiet(run_heat_demo, out, seed=2, **FAST_HEAT)
    for name in (
        "manifest.json",
        "report.json",
        "model.json",
        "training_log.csv",
        "points.csv",
        "cells.csv",
    ):
        assert (out / name).exists(), name
    report = json.loads((out / "report.json").read_text())
    assert report == payload
    assert report["kind"] == "monotonicity"
    assert "grid_min_directed_partial" in report
    assert "test_mae" in report
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["demo"] == "heat"


def test_tabular_demo_writes_all_artifacts_and_figures(tmp_path):
    out = tmp_path / "tab"
    kwargs = dict(FAST_TABULAR, make_figures=True)
    payload = run_quiet(run_tabular_demo, out, seed=1, **kwargs)
    assert (out / "table.csv").exists()
    assert (out / "training.svg").exists()
    report = json.loads((out / "report.json").read_text())
    assert report == payload
    assert set(report["lipschitz_estimates"]) == {"0", "1", "2", "3"}


def test_manifest_rerun_reproduces_reports_byte_for_byte(tmp_path):
    first = tmp_path / "first"
    run_quiet(run_heat_demo, first, seed=2, **FAST_HEAT)
    second = tmp_path / "second"
    run_quiet(run_demo_from_manifest, first / "manifest.json", outdir=second)
    for name in ("report.json", "model.json", "training_log.csv", "points.csv", "cells.csv", "manifest.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes(), name


def test_manifest_rerun_reproduces_tabular_reports(tmp_path):
    first = tmp_path / "first"
    run_quiet(run_tabular_demo, first, seed=1, **FAST_TABULAR)
    second = tmp_path / "second"
    run_quiet(run_demo_from_manifest, first / "manifest.json", outdir=second)
    for name in ("report.json", "model.json", "table.csv", "points.csv", "cells.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes(), name


def test_manifest_with_unknown_demo_is_rejected(tmp_path):
    path = tmp_path / "m.json"
    write_json(path, {"demo": "tides", "params": {"seed": 1}})
    with pytest.raises(MalformedCSV):
        run_demo_from_manifest(path, tmp_path / "out")
