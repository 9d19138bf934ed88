import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from expanding_gf.filtering import build_shifted_matrix, design_row
from expanding_gf.graph import GraphError
from expanding_gf.online import (DivergenceError, OnlineLearnerConfig, OnlineLearnerState, Replay,
                                 compute_replay, gradient, lipschitz_estimate, loss, ogd_step,
                                 predict, regret_bound, replay_grid_sse, reveal, run_online,
                                 run_replay, static_regret, write_trace_csv)
from expanding_gf.synthgen import SyntheticConfig, TrainingEvent, generate_stream

from conftest import random_attachment, random_graph


def instance(seed, n=8, K=4):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n)
    x = rng.standard_normal(n)
    a = random_attachment(rng, n)
    Ax = build_shifted_matrix(g, x, K)
    return rng, a, Ax


def test_loss_examples():
    rng, a, Ax = instance(0)
    h = rng.standard_normal(5)
    y = float(design_row(a, Ax) @ h)
    assert loss(h, a, Ax, y, 0.0) == 0.0
    assert loss(np.zeros(5), a, Ax, 3.0, 0.7) == pytest.approx(4.5)
    mu, xt = 0.3, 1.7
    ref = 0.5 * (a.dense() @ Ax @ h - xt) ** 2 + mu * np.sum(h ** 2)
    assert loss(h, a, Ax, xt, mu) == pytest.approx(ref, abs=1e-12)
    with pytest.raises(GraphError):
        loss(np.zeros(3), a, Ax, 1.0, 0.1)


def test_gradient_examples():
    rng, a, Ax = instance(1)
    g = design_row(a, Ax)
    np.testing.assert_allclose(gradient(np.zeros(5), a, Ax, 2.0, 0.0), -2.0 * g)
    h = rng.standard_normal(5)
    y = float(g @ h)
    np.testing.assert_allclose(gradient(h, a, Ax, y, 0.4), 0.8 * h, atol=1e-15)


@given(st.integers(0, 10_000), st.floats(0, 2))
def test_gradient_matches_finite_differences(seed, mu):
    rng, a, Ax = instance(seed)
    h = rng.standard_normal(5)
    xt = float(rng.standard_normal())
    an = gradient(h, a, Ax, xt, mu)
    eps = 1e-6
    fd = np.array([(loss(h + eps * e, a, Ax, xt, mu) - loss(h - eps * e, a, Ax, xt, mu)) / (2 * eps)
                   for e in np.eye(5)])
    assert np.linalg.norm(an - fd) <= 1e-6 * max(1.0, np.linalg.norm(an))


@given(st.integers(0, 10_000), st.floats(0, 1), st.floats(0, 1))
def test_loss_convexity_witness(seed, theta, mu):
    rng, a, Ax = instance(seed)
    h1, h2 = rng.standard_normal((2, 5)) * 3
    xt = float(rng.standard_normal())
    mix = loss(theta * h1 + (1 - theta) * h2, a, Ax, xt, mu)
    assert mix <= theta * loss(h1, a, Ax, xt, mu) + (1 - theta) * loss(h2, a, Ax, xt, mu) + 1e-12


def test_ogd_step_examples():
    rng, a, Ax = instance(2)
    g = design_row(a, Ax)
    cfg = OnlineLearnerConfig(eta=0.5, mu=0.0, K=4)
    st_ = ogd_step(OnlineLearnerState.initial(cfg), cfg, a, Ax, 2.0)
    np.testing.assert_allclose(st_.h, 0.5 * 2.0 * g)
    assert st_.step == 1 and len(st_.loss_history) == 1

    frozen = OnlineLearnerConfig(eta=0.0, mu=0.1, K=4)
    s = ogd_step(OnlineLearnerState.initial(frozen), frozen, a, Ax, 2.0)
    assert np.all(s.h == 0) and s.loss_history == [pytest.approx(2.0)]

    h0 = rng.standard_normal(5)
    cfg0 = OnlineLearnerConfig(eta=1.0, mu=0.0, K=4, h_init=h0)
    s = ogd_step(OnlineLearnerState.initial(cfg0), cfg0, a, Ax, float(g @ h0))
    np.testing.assert_array_equal(s.h, h0)


def test_predict_reveal_protocol():
    cfg = OnlineLearnerConfig(eta=0.1, mu=0.0, K=2)
    s = OnlineLearnerState.initial(cfg)
    with pytest.raises(RuntimeError):
        reveal(s, cfg, 1.0)
    predict(s, np.ones(3))
    with pytest.raises(RuntimeError):
        predict(s, np.ones(3))
    reveal(s, cfg, 1.0)
    assert s.prediction_history == [(0.0, 1.0)]


def test_config_validation():
    for bad in (dict(eta=-1, mu=0), dict(eta=1, mu=-1), dict(eta=1, mu=0, K=0),
                dict(eta=1, mu=0, projection_radius=0), dict(eta=1, mu=0, K=2, h_init=[1, 2])):
        with pytest.raises(ValueError):
            OnlineLearnerConfig(**bad)


def test_divergence_guard():
    rep = Replay(np.full((50, 3), 10.0), np.ones(50))
    with pytest.raises(DivergenceError) as exc:
        run_replay(rep, OnlineLearnerConfig(eta=10.0, mu=0.0, K=2))
    assert exc.value.step > 0


@given(st.integers(0, 10_000), st.floats(0.01, 5))
def test_projection_keeps_iterates_in_ball(seed, radius):
    rng = np.random.default_rng(seed)
    rep = Replay(rng.standard_normal((200, 4)), rng.standard_normal(200) * 5)
    s = run_replay(rep, OnlineLearnerConfig(eta=0.3, mu=0.01, K=3, projection_radius=radius))
    assert max(s.h_norms) <= radius + 1e-12


def small_stream(T=60, seed=0, mode="filter"):
    return generate_stream(SyntheticConfig(N=20, p=0.3, P=3, T=T, K=3, mode=mode, seed=seed))


def test_run_online_empty_stream():
    s = small_stream()
    cfg = OnlineLearnerConfig(eta=0.1, mu=0.0, K=3)
    st_, g, x = run_online(s.g0, s.x0, [], cfg)
    assert st_.step == 0 and g.n == s.g0.n and np.array_equal(x, s.x0)


def test_run_online_zero_residual_keeps_h():
    s = small_stream(T=20)
    h = np.array([0.0, 0.5, -0.2, 0.1])
    g, x = s.g0.copy(), s.x0.copy()
    events = []
    for ev in s.events:
        y = float(design_row(ev.attachment, build_shifted_matrix(g, x, 3)) @ h)
        events.append(TrainingEvent(ev.attachment, y))
        g.attach_node(ev.attachment)
        x = np.append(x, y)
    st_, _, _ = run_online(s.g0, s.x0, events, OnlineLearnerConfig(eta=0.5, mu=0.0, K=3, h_init=h))
    np.testing.assert_allclose(st_.h, h, atol=1e-14)


def test_run_online_matches_replay_and_leaves_inputs():
    s = small_stream(T=80)
    g_before, x_before = s.g0.dense(), s.x0.copy()
    cfg = OnlineLearnerConfig(eta=0.5, mu=1e-3, K=3)
    st_, g, x = run_online(s.g0, s.x0, s.events, cfg, snapshot_interval=20)
    assert g.n == s.g0.n + 80 and x.size == g.n
    np.testing.assert_array_equal(s.g0.dense(), g_before)
    np.testing.assert_array_equal(s.x0, x_before)
    rep, _ = compute_replay(s.g0, s.x0, s.events, 3)
    st2 = run_replay(rep, cfg, snapshot_interval=20)
    np.testing.assert_array_equal(st_.h, st2.h)
    np.testing.assert_array_equal(st_.loss_history, st2.loss_history)
    assert [k for k, _ in st_.snapshots] == [20, 40, 60, 80]
    np.testing.assert_array_equal(st_.replay().rows, rep.rows)


def test_replay_grid_matches_single_runs():
    s = small_stream(T=100)
    rep, _ = compute_replay(s.g0, s.x0, s.events, 3)
    etas, mus = [0.1, 1.0, 1e4], [0.0, 1e-2, 0.0]
    sse, div = replay_grid_sse(rep, etas, mus)
    for i, (e, m) in enumerate(zip(etas, mus)):
        try:
            st_ = run_replay(rep, OnlineLearnerConfig(e, m, 3))
        except DivergenceError:
            assert div[i] and np.isnan(sse[i])
            continue
        ref = np.sum((st_.predictions - rep.targets) ** 2)
        assert sse[i] == pytest.approx(ref, rel=1e-9)


def test_static_regret_examples():
    rng = np.random.default_rng(0)
    rep = Replay(rng.standard_normal((30, 3)), rng.standard_normal(30))
    u = rng.standard_normal(3)
    r = static_regret(rep.losses(u, 0.1), u, rep, 0.1)
    assert r.total_regret == pytest.approx(0.0, abs=1e-12)
    assert r.normalized_regret == r.total_regret / 30
    with pytest.raises(ValueError):
        static_regret([1.0], u, rep, 0.1)


def test_regret_bound_examples():
    assert regret_bound(1, 1, 1, 1) == 1.0
    u, L, T = 2.0, 3.0, 400
    eta = u / (L * np.sqrt(T))
    assert regret_bound(u, eta, L, T) == pytest.approx(u * L * np.sqrt(T))
    a, b = regret_bound(u, 0.1, L, T), regret_bound(u, 0.1, L, 2 * T)
    assert b - a == pytest.approx(0.5 * 0.1 * L ** 2 * T)


def test_lipschitz_examples():
    rep = Replay(np.ones((5, 3)), np.zeros(5))
    assert lipschitz_estimate(Replay(np.zeros((4, 3)), np.zeros(4)), 2.0, 0.3) == pytest.approx(1.2)
    one = Replay(np.array([[3.0, 4.0]]), np.array([2.0]))
    assert lipschitz_estimate(one, 0.0, 0.5) == pytest.approx(2.0 * 5.0)
    with pytest.raises(ValueError):
        lipschitz_estimate(Replay(np.zeros((0, 3)), np.zeros(0)), 1.0, 0.1)
    assert lipschitz_estimate(rep, 1.0, 0.0) > 0


@given(st.integers(0, 10_000))
def test_lipschitz_dominates_projected_gradients(seed):
    rng = np.random.default_rng(seed)
    rep = Replay(rng.standard_normal((100, 4)), rng.standard_normal(100))
    cfg = OnlineLearnerConfig(eta=0.2, mu=0.05, K=3, projection_radius=1.5)
    s = run_replay(rep, cfg)
    assert max(s.grad_norms) <= lipschitz_estimate(rep, 1.5, 0.05) + 1e-12


def test_trace_csv(tmp_path):
    rep = Replay(np.eye(3), np.ones(3))
    s = run_replay(rep, OnlineLearnerConfig(0.5, 0.0, 2))
    p = tmp_path / "t.csv"
    write_trace_csv(p, s, method="prop")
    rows = list(csv.reader(p.open()))
    assert rows[0] == ["step", "prediction", "truth", "loss", "h_norm", "method"]
    assert len(rows) == 4 and rows[-1][-1] == "prop"
