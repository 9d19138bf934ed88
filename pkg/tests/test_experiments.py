import csv
import json
import math

import numpy as np
import pytest

from expanding_gf import experiments as ex
from expanding_gf.online import DivergenceError, OnlineLearnerConfig, run_replay, static_regret
from expanding_gf.baselines import ridge_solve

SMALL = dict(N=30, p=0.3, P=3, T=150, realizations=3, it1_sets=3, tuning_realizations=2,
             eta_grid=ex.log_grid(1e-3, 10), mu_grid=[1e-6, 1e-3], ridge_grid=[1e-4, 1e-2, 1.0])


def test_rnmse_examples():
    x = np.array([1.0, -2.0, 3.0])
    assert ex.rnmse(x, x) == 0.0
    assert ex.rnmse(np.zeros(3), x) == 1.0
    assert ex.rnmse([2.0], [1.0]) == 1.0
    with pytest.raises(ValueError):
        ex.rnmse([1.0], [0.0])
    with pytest.raises(ValueError):
        ex.rnmse([], [])
    with pytest.raises(ValueError):
        ex.rnmse([1.0, 2.0], [1.0])


def test_log_grid():
    g = ex.log_grid(1e-6, 10, 7)
    assert len(g) == 50 and g[0] == pytest.approx(1e-6) and g[-1] == pytest.approx(10)
    assert np.allclose(np.diff(np.log10(g)), 1 / 7)


def test_grid_search_examples():
    best, scores = ex.grid_search([{"eta": 0.1}], lambda c: 0.5)
    assert best == {"eta": 0.1} and scores == [0.5]

    def evaluate(c):
        if c["eta"] > 1:
            raise DivergenceError(3, "boom")
        return math.nan if c["eta"] == 1 else abs(c["eta"] - 0.01)

    cands = [{"eta": e} for e in (0.001, 0.01, 0.1, 1, 10)]
    best, scores = ex.grid_search(cands, evaluate)
    assert best == {"eta": 0.01}
    assert math.isnan(scores[-1]) and math.isnan(scores[-2])
    with pytest.raises(ex.ExperimentError):
        ex.grid_search(cands[-1:], evaluate)
    with pytest.raises(ValueError):
        ex.grid_search([], evaluate)


def test_grid_search_ties_prefer_small_eta_then_mu():
    cfg = ex.ExperimentConfig(eta_grid=[1.0, 0.1], mu_grid=[0.5, 0.01])
    cands = ex.candidates("prop", cfg)
    best, _ = ex.grid_search(cands, lambda c: 1.0)
    assert best == {"eta": 0.1, "mu": 0.01}


def test_config_validation_and_defaults():
    cfg = ex.ExperimentConfig(scenario="movielens")
    assert cfg.snapshot_interval == 2000 and "it2" in cfg.methods and cfg.okl_features == 6
    assert len(cfg.eta_grid) == 50 and len(cfg.ridge_grid) == 36
    assert ex.ExperimentConfig(scenario="wmean").snapshot_interval == 100
    for bad in (dict(scenario="x"), dict(methods=["nope"]), dict(realizations=0), dict(eta_grid=[])):
        with pytest.raises(ValueError):
            ex.ExperimentConfig(**bad)
    with pytest.raises(ValueError):
        ex.ExperimentConfig.from_mapping({"bogus": 1})


def test_config_from_file(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("scenario: kernel\nrealizations: 4\nmethods: prop,okl\neta_grid: [0.1, 1.0]\n")
    cfg = ex.ExperimentConfig.from_file(p)
    assert (cfg.scenario, cfg.realizations, cfg.methods) == ("kernel", 4, ("prop", "okl"))
    j = tmp_path / "c.json"
    j.write_text(json.dumps({"scenario": "filter", "seed": 9}))
    assert ex.ExperimentConfig.from_file(j).seed == 9
    (tmp_path / "bad.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(ValueError):
        ex.ExperimentConfig.from_file(tmp_path / "bad.yaml")


def test_it2_rejected_on_synthetic():
    with pytest.raises(ex.ExperimentError):
        ex.run_scenario(ex.ExperimentConfig(scenario="filter", methods=["it2"], **SMALL))


@pytest.fixture(scope="module")
def small_run():
    cfg = ex.ExperimentConfig(scenario="filter", seed=4, **SMALL)
    return cfg, ex.run_scenario(cfg)


def test_run_scenario_summary(small_run):
    cfg, res = small_run
    assert set(res.methods) == set(cfg.methods)
    for m, s in res.methods.items():
        assert len(s.per_realization) == 3
        assert s.rnmse == pytest.approx(np.mean(s.per_realization))
        assert s.sdev == pytest.approx(np.std(s.per_realization, ddof=1))
        assert s.sdev >= 0 and np.isfinite(s.rnmse)
    assert res.excluded == 0 and res.n_steps == 150
    assert [k for k, _ in res.snapshots] == [100]
    assert res.timing["total_s"] > 0


def test_stream_identity_across_methods(small_run):
    cfg, res = small_run
    for r in range(cfg.realizations):
        inst = ex.build_instance(cfg, cfg.seed + r)
        assert inst.digest == res.digests[r]
        rows = inst.replay.rows.copy()
        for m in cfg.methods:
            ex.run_method(m, inst, res.methods[m].params, cfg)
        np.testing.assert_array_equal(inst.replay.rows, rows)
        assert inst.digest == res.digests[r]


def test_regret_consistency(small_run):
    cfg, res = small_run
    p = res.methods["prop"].params
    inst = ex.build_instance(cfg, cfg.seed)
    st = run_replay(inst.replay, OnlineLearnerConfig(p["eta"], p["mu"], cfg.K))
    u = ridge_solve(inst.replay.rows, inst.replay.targets, 2 * inst.T * p["mu"])
    ref = static_regret(st.loss_history, u, inst.replay, p["mu"]).total_regret / inst.T
    assert res.regret_per_realization[0] == pytest.approx(ref, abs=1e-12)


def test_selected_config_is_grid_minimum():
    cfg = ex.ExperimentConfig(scenario="filter", seed=1, **SMALL)
    inst = [ex.build_instance(cfg, cfg.tuning_seed + i) for i in range(cfg.tuning_realizations)]
    chosen = ex.tune(cfg, inst)["prop"]

    def score(c):
        try:
            return np.mean([ex.run_method("prop", i, c, cfg).score for i in inst])
        except DivergenceError:
            return math.inf

    best = score(chosen)
    for c in ex.candidates("prop", cfg):
        assert best <= score(c) + 1e-9


def test_emit_results(small_run, tmp_path):
    cfg, res = small_run
    written = ex.emit_results(res, tmp_path)
    names = {p.name for p in written}
    for m in cfg.methods:
        assert f"trace_{m}.csv" in names
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert set(metrics["prop"]) == {"rnmse", "sdev", "ad_at_10", "normalized_regret"}
    back = ex.RunResult.from_dict(json.loads((tmp_path / "result.json").read_text()))
    assert back == res
    rows = list(csv.reader((tmp_path / "frequency_online.csv").open()))
    assert len(rows) - 1 == cfg.grid_size * len(res.snapshots)
    trace = list(csv.DictReader((tmp_path / "trace_bs.csv").open()))
    assert len(trace) == 150 and trace[0]["method"] == "bs"
    text = (tmp_path / "summary.txt").read_text().splitlines()
    assert text[0].split() == ex.SUMMARY_COLUMNS and len(text) == 1 + len(cfg.methods)


def test_emit_empty_method_set(tmp_path):
    res = ex.RunResult("filter", {}, None, [], [], None, [], 0, {}, {})
    ex.emit_results(res, tmp_path)
    lines = (tmp_path / "summary.csv").read_text().splitlines()
    assert lines == [",".join(ex.SUMMARY_COLUMNS)]


def test_emit_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        ex.emit_results(ex.RunResult("filter", {}, None, [], [], None, [], 0, {}, {}), blocker / "sub")


def test_failed_realizations_threshold(monkeypatch):
    cfg = ex.ExperimentConfig(scenario="wmean", methods=["wknn"], **{**SMALL, "realizations": 5})
    real = ex.run_realization

    def flaky(cfg_, params, seed, keep_traces=False, inst=None):
        if seed == 1:
            raise DivergenceError(1, "injected")
        return real(cfg_, params, seed, keep_traces)

    monkeypatch.setattr(ex, "run_realization", flaky)
    with pytest.raises(ex.ExperimentError, match="1/5"):
        ex.run_scenario(cfg)
    cfg10 = ex.ExperimentConfig(scenario="wmean", methods=["wknn"], **{**SMALL, "realizations": 10})
    res = ex.run_scenario(cfg10)
    assert res.excluded == 1 and len(res.methods["wknn"].per_realization) == 9


def test_acceptance_checks_logic():
    def summary(v):
        return ex.MethodSummary(v, 0.0, [v], {})

    res = ex.RunResult("wmean", {"wknn": summary(0.0), "prop": summary(0.1), "okl": summary(0.9)},
                       0.001, [0.001], [], None, [], 0, {}, {})
    assert all(p for _, p, _ in ex.acceptance_checks(res))
    res.methods["wknn"] = summary(1e-9)
    assert not all(p for _, p, _ in ex.acceptance_checks(res))
