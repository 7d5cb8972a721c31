"""Benchmark harness checks: generators, coupling, scoring, report files."""

import csv
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from gchmm.bench import (BenchmarkConfig, default_configs, dorm_pattern,
                         contact_pattern, export_heatmap, run_benchmark,
                         score_gchmm, synthesize_series)
from gchmm.model import MISSING, ObservationMatrix
from gchmm.oracle import TinyInstance, enumerate_posterior
from gchmm.sis import EmissionParams, SISParams, flip_emission


def micro_config(**overrides):
    base = dict(name="micro", params=SISParams(alpha=0.05, beta=0.1, gamma=0.4),
                observation_error=0.05, num_series=3, num_nodes=12,
                series_length_days=10, mean_degree=3.0, chain_iterations=300,
                chain_burn_in=100, jump_replications=20)
    base.update(overrides)
    return BenchmarkConfig(**base)


def test_default_configs_pin_the_three_cells():
    desk = {c.name: c for c in default_configs("desk")}
    assert set(desk) == {"noisy", "clean", "contagious"}
    assert desk["noisy"].params.beta == 0.02
    assert desk["noisy"].observation_error == 0.01
    assert desk["clean"].observation_error == 0.001
    assert desk["contagious"].params.beta == 0.045
    assert desk["contagious"].params.alpha == 0.005
    assert all(c.num_series == 20 and c.chain_iterations == 2000 for c in desk.values())
    full = default_configs("full")
    assert all(c.num_series == 200 and c.chain_iterations == 10000 for c in full)
    with pytest.raises(ValueError):
        default_configs("laptop")


def test_dorm_pattern_degree_and_structure():
    rng = np.random.default_rng(6)
    md = 5.5
    g = dorm_pattern(84, 200, md, rng)
    assert abs(g.mean_degree() - md) < 0.15
    group = np.arange(84) // 6
    within = cross = 0
    for t in range(g.num_steps):
        for u, v in g.edges(t):
            if group[u] == group[v]:
                within += 1
            else:
                cross += 1
    share = within / (within + cross)
    assert 0.6 < share < 0.8  # the 0.70 default, loosely


def test_contact_pattern_hits_the_requested_degree():
    rng = np.random.default_rng(6)
    g = contact_pattern(80, 300, 6.0, rng)
    assert abs(g.mean_degree() - 6.0) < 0.5


def test_pattern_argument_validation():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        dorm_pattern(10, 5, -1.0, rng)
    with pytest.raises(ValueError):
        dorm_pattern(10, 5, 3.0, rng, group_size=1)
    with pytest.raises(ValueError):
        dorm_pattern(10, 5, 3.0, rng, within_weight=1.5)
    with pytest.raises(ValueError):
        contact_pattern(10, 5, -2.0, rng)


def test_holdout_masks_whole_nodes_at_the_ceiling_fraction():
    config = micro_config(num_nodes=84, series_length_days=8)
    series = synthesize_series(config, 0, master_seed=1)
    expected = math.ceil(0.10 * 84)
    assert int(series.holdout.sum()) == expected
    held = series.observed[series.holdout]
    assert np.all(held == MISSING)
    kept = series.observed[~series.holdout]
    assert np.all(kept != MISSING)


def test_flip_noise_rate_matches_the_channel():
    # Pool enough sites for a tight binomial check on the symmetric channel.
    config = micro_config(num_nodes=60, series_length_days=400,
                          observation_error=0.03)
    flips = sites = 0
    for i in range(5):
        series = synthesize_series(config, i, master_seed=9, holdout=False)
        flips += int(np.sum(series.observed != series.truth))
        sites += series.truth.size
    assert sites >= 100000
    rate = flips / sites
    se = math.sqrt(0.03 * 0.97 / sites)
    assert abs(rate - 0.03) < 3 * se


def test_configs_sharing_dynamics_share_truth_and_holdout():
    noisy = micro_config(observation_error=0.05)
    clean = micro_config(name="cleaner", observation_error=0.001)
    a = synthesize_series(noisy, 2, master_seed=4)
    b = synthesize_series(clean, 2, master_seed=4)
    np.testing.assert_array_equal(a.truth, b.truth)
    np.testing.assert_array_equal(a.holdout, b.holdout)
    observed_rows = ~a.holdout
    assert np.sum(a.observed[observed_rows] != a.truth[observed_rows]) >= \
        np.sum(b.observed[observed_rows] != b.truth[observed_rows])


def test_series_are_reproducible():
    config = micro_config()
    a = synthesize_series(config, 1, master_seed=7)
    b = synthesize_series(config, 1, master_seed=7)
    np.testing.assert_array_equal(a.truth, b.truth)
    np.testing.assert_array_equal(a.observed, b.observed)
    assert [a.graph.edges(t) for t in range(a.graph.num_steps)] == \
        [b.graph.edges(t) for t in range(b.graph.num_steps)]


def test_gchmm_scores_match_enumeration_on_a_tiny_series():
    # Fixed true parameters let the exact oracle check the production scoring
    # path end to end on an enumerable series.
    config = micro_config(num_nodes=3, series_length_days=4, mean_degree=1.5,
                          holdout_fraction=0.34, chain_iterations=4000,
                          chain_burn_in=500, observation_error=0.05)
    series = synthesize_series(config, 0, master_seed=13)
    scores = score_gchmm(series, config, master_seed=13, series_index=0,
                         infer_params=False)
    instance = TinyInstance(
        graph=series.graph, params=config.params,
        emission=flip_emission(config.observation_error),
        observations=ObservationMatrix(series.observed[:, :, None]))
    exact = enumerate_posterior(instance)
    assert np.max(np.abs(scores - exact.marginals)) < 0.02


def test_run_benchmark_writes_reports_and_is_deterministic(tmp_path):
    configs = [micro_config(), micro_config(name="micro2", observation_error=0.01)]
    out = tmp_path / "bm"
    rows = run_benchmark(configs, seed=5, out_dir=out)
    again = run_benchmark(configs, seed=5)
    assert [(r.config_id, r.method, r.auc) for r in rows] == \
        [(r.config_id, r.method, r.auc) for r in again]
    assert len(rows) == 8
    with open(out / "report.csv", newline="") as fh:
        records = list(csv.DictReader(fh))
    assert len(records) == 8
    assert {r["config_id"] for r in records} == {"micro", "micro2"}
    for r in records:
        if not math.isnan(float(r["auc"])):
            assert 0.0 <= float(r["auc"]) <= 1.0
            assert float(r["auc_ci_lo"]) <= float(r["auc_ci_hi"])
    curves = list(Path(out).glob("roc_*.csv"))
    assert len(curves) == 8


def test_run_benchmark_rejects_unknown_methods():
    with pytest.raises(ValueError):
        run_benchmark([micro_config()], seed=0, methods=("gchmm", "svm"))


def test_empty_holdout_reports_skipped_rows():
    config = micro_config(holdout_fraction=0.0)
    rows = run_benchmark([config], seed=0, methods=("ode-sis",))
    assert len(rows) == 1
    assert math.isnan(rows[0].auc)
    assert rows[0].n_series == 0


def test_threaded_scoring_matches_serial():
    config = micro_config()
    serial = run_benchmark([config], seed=2, methods=("gchmm",))
    threaded = run_benchmark([config], seed=2, methods=("gchmm",), threads=3)
    assert serial[0].auc == threaded[0].auc


def test_heatmap_aggregates_days(tmp_path):
    marginals = np.array([[0.2, 0.4, 0.6, 0.8, 1.0]])
    values = np.array([[[1], [MISSING], [MISSING], [MISSING], [0]]], dtype=np.int8)
    sink = tmp_path / "heat.csv"
    export_heatmap(marginals, ObservationMatrix(values), steps_per_day=2, sink=sink)
    with open(sink, newline="") as fh:
        records = list(csv.DictReader(fh))
    assert len(records) == 3  # ceil(5 / 2) days
    assert float(records[0]["p_infectious"]) == pytest.approx(0.3)
    assert records[0]["symptom_count"] == "1"
    assert records[0]["missing"] == "0"
    assert records[1]["missing"] == "1"
    assert float(records[2]["p_infectious"]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        export_heatmap(marginals, ObservationMatrix(values[:, :4]), 2, sink)
