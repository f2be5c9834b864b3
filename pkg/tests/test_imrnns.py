import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from causaltwin.graph import CausalGraph, CouplingSet, ParamLayout, flatten, unflatten
from causaltwin.imrnns import (
    DivergenceError,
    NetworkConfig,
    NetworkState,
    backprop_update,
    bipolar_sigmoid,
    bipolar_sigmoid_grad,
    build_input,
    complex_step_jacobian,
    forward,
    init_state,
    sim_jacobian,
    sim_layer,
    train_online,
    update_context,
)
from causaltwin.svar import MultichannelSeries, NoiseSpec, generate_series, simulate_step

from conftest import random_system


def logistic_oracle(u):
    # scalar math.exp route, independent of numpy's tanh
    return [2.0 / (1.0 + math.exp(-v)) - 1.0 for v in u]


# -- activation -------------------------------------------------------------


def test_bipolar_sigmoid_at_zero():
    assert bipolar_sigmoid(0.0) == 0.0


@given(st.floats(-50, 50, allow_nan=False))
def test_bipolar_sigmoid_is_odd(u):
    assert bipolar_sigmoid(-u) == -bipolar_sigmoid(u)


def test_bipolar_sigmoid_matches_logistic_oracle():
    u = np.linspace(-30, 30, 2001)
    assert np.max(np.abs(bipolar_sigmoid(u) - logistic_oracle(u))) <= 1e-15


def test_bipolar_sigmoid_saturates():
    out = bipolar_sigmoid(np.array([-1e4, 1e4]))
    assert out.tolist() == [-1.0, 1.0]


def test_true_derivative_matches_finite_differences():
    u = np.linspace(-6, 6, 101)
    h = 1e-6
    fd = (bipolar_sigmoid(u + h) - bipolar_sigmoid(u - h)) / (2 * h)
    np.testing.assert_allclose(bipolar_sigmoid_grad(bipolar_sigmoid(u)), fd, atol=1e-9)


def test_logistic_derivative_form_is_not_the_derivative():
    # 2 x (1 - x) is the logistic derivative transplanted; it disagrees with rho'
    x = bipolar_sigmoid(np.array([0.5, -0.5]))
    assert not np.allclose(bipolar_sigmoid_grad(x, logistic_form=True), bipolar_sigmoid_grad(x))


# -- forward ----------------------------------------------------------------


def _state(w1, w2, context=0):
    from collections import deque

    return NetworkState(np.array(w1, float), np.array(w2, float),
                        deque([np.zeros(context)], maxlen=1), np.zeros(np.shape(w2)[0]))


def test_forward_zero_weights():
    x1, x2 = forward(_state(np.zeros((3, 4)), np.zeros((2, 3))), np.ones(4))
    assert not x1.any() and not x2.any()


def test_forward_scalar_chain():
    x1, x2 = forward(_state([[2.0]], [[3.0]]), [0.5])
    expected_x1 = 2.0 / (1.0 + math.exp(-1.0)) - 1.0
    assert x1[0] == pytest.approx(expected_x1, abs=1e-15)
    assert x2[0] == pytest.approx(3.0 * expected_x1, abs=1e-15)


def test_forward_matches_dense_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        w1, w2, x0 = rng.normal(size=(5, 7)), rng.normal(size=(3, 5)), rng.normal(size=7)
        x1, x2 = forward(_state(w1, w2), x0)
        h = [sum(w1[i, j] * x0[j] for j in range(7)) for i in range(5)]
        ox1 = np.array(logistic_oracle(h))
        ox2 = np.array([sum(w2[q, i] * ox1[i] for i in range(5)) for q in range(3)])
        assert np.max(np.abs(x1 - ox1)) <= 1e-14
        assert np.max(np.abs(x2 - ox2)) <= 1e-14


def test_forward_dimension_mismatch():
    with pytest.raises(ValueError):
        forward(_state(np.zeros((3, 4)), np.zeros((2, 3))), np.ones(5))


# -- simulation layer and Jacobian -------------------------------------------


def test_sim_layer_zero_output():
    g = CausalGraph(3, 1, {(0, 1)}, ({(2, 0)},))
    layout = ParamLayout.from_graph(g)
    assert not sim_layer(np.zeros(layout.size), ([1.0, 2.0, 3.0], [[4.0, 5.0, 6.0]]), layout).any()


def test_sim_layer_single_edge():
    layout = ParamLayout.from_graph(CausalGraph(2, 0, {(1, 0)}))
    out = sim_layer([0.5], ([7.0, 2.0], np.zeros((0, 2))), layout)
    assert out.tolist() == [1.0, 0.0]


def test_sim_layer_equals_simulate_step():
    rng = np.random.default_rng(1)
    for _ in range(30):
        graph, _ = random_system(rng, 4, 2, density=0.6)
        layout = ParamLayout.from_graph(graph)
        x2 = rng.normal(size=layout.size)
        y, lags = rng.normal(size=4), rng.normal(size=(2, 4))
        assert np.array_equal(sim_layer(x2, (y, lags), layout), simulate_step(unflatten(x2, layout), y, lags))


def _analytic_jacobian(layout, y, lags):
    inputs = np.vstack([y, lags])
    jac = np.zeros((layout.node_count, layout.size))
    for j, (m, e, c) in enumerate(layout.triples):
        jac[e, j] = inputs[m, c]
    return jac


def test_complex_step_jacobian_is_exact_for_linear_map():
    rng = np.random.default_rng(2)
    for _ in range(30):
        graph, _ = random_system(rng, 4, 1, density=0.7)
        layout = ParamLayout.from_graph(graph)
        x2 = rng.normal(size=layout.size)
        y, lags = rng.normal(size=4), rng.normal(size=(1, 4))
        jac = sim_jacobian(x2, (y, lags), layout, 1e-20)
        assert np.max(np.abs(jac - _analytic_jacobian(layout, y, lags))) <= 1e-12


def test_jacobian_matches_central_differences():
    rng = np.random.default_rng(3)
    for _ in range(30):
        graph, _ = random_system(rng, 4, 2, density=0.6)
        layout = ParamLayout.from_graph(graph)
        x2 = rng.normal(size=layout.size)
        inputs = (rng.normal(size=4), rng.normal(size=(2, 4)))
        jac = sim_jacobian(x2, inputs, layout, 1e-20)
        h = 1e-6
        fd = np.empty_like(jac)
        for j in range(layout.size):
            step = np.zeros(layout.size)
            step[j] = h
            fd[:, j] = (sim_layer(x2 + step, inputs, layout) - sim_layer(x2 - step, inputs, layout)) / (2 * h)
        assert np.linalg.norm(jac - fd) <= 1e-8 * np.linalg.norm(fd)


def test_jacobian_contraction_is_jt_e():
    rng = np.random.default_rng(4)
    graph, _ = random_system(rng, 4, 1, density=0.7)
    layout = ParamLayout.from_graph(graph)
    e = rng.normal(size=4)
    jac, jte = sim_jacobian(rng.normal(size=layout.size), (rng.normal(size=4), rng.normal(size=(1, 4))),
                            layout, 1e-20, e)
    np.testing.assert_allclose(jte, [sum(jac[i, j] * e[i] for i in range(4)) for j in range(layout.size)])


def test_complex_step_beats_central_differences_on_exp():
    h = 1e-20
    cs = complex_step_jacobian(np.exp, 1.0, h)[0, 0]
    assert abs(cs - math.e) <= 1e-15
    central = (math.exp(1.0 + h) - math.exp(1.0 - h)) / (2 * h)
    assert abs(central - math.e) > 1.0  # 1 + 1e-20 == 1 in floating point


# -- weight updates ---------------------------------------------------------


def _error_norm(w1, w2, x0, y, lags, layout):
    x2 = w2 @ bipolar_sigmoid(w1 @ x0)
    e = y - sim_layer(x2, (y, lags), layout)
    return float(e @ e)


def _gradient_check(rng, eta=0.01):
    graph, _ = random_system(rng, 3, 1, density=0.5)
    while not 1 <= graph.edge_count <= 6:
        graph, _ = random_system(rng, 3, 1, density=0.5)
    layout = ParamLayout.from_graph(graph)
    w1 = rng.normal(size=(4, 6))
    w2 = rng.normal(size=(layout.size, 4))
    x0 = rng.normal(size=6)
    y, lags = rng.normal(size=3), rng.normal(size=(1, 3))
    state = _state(w1, w2)
    x1, x2 = forward(state, x0)
    e = y - sim_layer(x2, (y, lags), layout)
    _, jte = sim_jacobian(x2, (y, lags), layout, 1e-20, e)
    new = backprop_update(state, x0, x1, jte, eta)
    implied = [-2.0 * (new.w1 - w1) / eta, -2.0 * (new.w2 - w2) / eta]
    h = 1e-6
    worst = 0.0
    for which, w in ((0, w1), (1, w2)):
        fd = np.empty_like(w)
        for idx in np.ndindex(w.shape):
            wp, wm = w.copy(), w.copy()
            wp[idx] += h
            wm[idx] -= h
            args_p = (wp, w2) if which == 0 else (w1, wp)
            args_m = (wm, w2) if which == 0 else (w1, wm)
            fd[idx] = (_error_norm(*args_p, x0, y, lags, layout) - _error_norm(*args_m, x0, y, lags, layout)) / (2 * h)
        worst = max(worst, np.linalg.norm(implied[which] - fd) / np.linalg.norm(fd))
    return worst


def test_implied_gradients_match_finite_differences():
    rng = np.random.default_rng(5)
    for _ in range(10):
        assert _gradient_check(rng) <= 1e-6


def test_zero_error_leaves_weights_unchanged():
    rng = np.random.default_rng(6)
    state = _state(rng.normal(size=(4, 5)), rng.normal(size=(3, 4)))
    x1, _ = forward(state, np.ones(5))
    new = backprop_update(state, np.ones(5), x1, np.zeros(3), 0.1)
    assert np.array_equal(new.w1, state.w1) and np.array_equal(new.w2, state.w2)


def test_zero_learning_rate_leaves_weights_unchanged():
    rng = np.random.default_rng(7)
    state = _state(rng.normal(size=(4, 5)), rng.normal(size=(3, 4)))
    x1, _ = forward(state, np.ones(5))
    new = backprop_update(state, np.ones(5), x1, np.ones(3), 0.0)
    assert np.array_equal(new.w1, state.w1) and np.array_equal(new.w2, state.w2)


def test_non_finite_update_raises_divergence():
    state = _state(np.ones((2, 2)), np.full((1, 2), 1e308))
    state.step = 41
    with pytest.raises(DivergenceError) as info:
        backprop_update(state, np.ones(2), np.ones(2), np.array([1e308]), 10.0)
    assert info.value.step == 41


# -- context ----------------------------------------------------------------


def test_no_context_means_raw_input():
    cfg = NetworkConfig(hidden_size=4, context_size=0, bias=False)
    state = init_state(cfg, cfg.input_size(3, 1), 2)
    y = np.array([1.0, 2.0, 3.0])
    assert np.array_equal(build_input(state, y, cfg), y)


def test_constant_hidden_stream_fills_context():
    cfg = NetworkConfig(hidden_size=3, context_size=3, context_delay=4)
    state = init_state(cfg, cfg.input_size(2, 0), 1)
    for _ in range(10):
        state = update_context(state, np.array([0.2, -0.1, 0.3]))
    for c in state.context:
        assert c.tolist() == [0.2, -0.1, 0.3]


@pytest.mark.parametrize("delay", [1, 2, 5])
def test_context_replays_hidden_output_after_delay(delay, bearing_graph, bearing_truth, bearing_noise):
    s = generate_series(bearing_graph, bearing_truth, bearing_noise, 60)
    cfg = NetworkConfig(hidden_size=6, context_size=4, context_delay=delay, normalize=False)
    res = train_online(s, bearing_graph, cfg, keep_traces=True)
    g = 4
    for i, tr in enumerate(res.traces):
        ctx = tr.x0[g:g + 4]
        if i < delay:
            assert not ctx.any()
        else:
            assert np.array_equal(ctx, res.traces[i - delay].x1[:4])


# -- online training --------------------------------------------------------


def test_zero_system_stays_near_zero():
    graph = CausalGraph(3, 1, {(0, 1)}, ({(2, 0), (1, 2)},))
    s = generate_series(graph, CouplingSet.zeros(3, 1), NoiseSpec("laplace", 1.0, seed=2), 3000)
    res = train_online(s, graph, NetworkConfig(normalize=False))
    assert np.abs(res.trajectory[-1]).max() < 0.1


def test_training_is_deterministic(bearing_graph, bearing_truth, bearing_noise):
    s = generate_series(bearing_graph, bearing_truth, bearing_noise, 500)
    a = train_online(s, bearing_graph, NetworkConfig(seed=3))
    b = train_online(s, bearing_graph, NetworkConfig(seed=3))
    assert a.trajectory.tobytes() == b.trajectory.tobytes()
    assert a.errors.tobytes() == b.errors.tobytes()


def test_masked_positions_stay_zero_every_step(bearing_graph, bearing_truth, bearing_noise):
    s = generate_series(bearing_graph, bearing_truth, bearing_noise, 400)
    res = train_online(s, bearing_graph, NetworkConfig())
    masks = bearing_graph.masks()
    for row in res.trajectory:
        k = unflatten(row, res.layout)
        assert not k.matrices[~masks].any()
        assert not np.einsum("mii->mi", k.matrices).any()


def test_error_norm_non_negative(bearing_graph, bearing_truth, bearing_noise):
    s = generate_series(bearing_graph, bearing_truth, bearing_noise, 300)
    assert (train_online(s, bearing_graph).errors >= 0).all()


def test_epoch_error_decreases_on_noise_free_data(bearing_graph, bearing_truth):
    # only the exogenous nodes are excited, so the effects are exactly realizable
    s = generate_series(bearing_graph, bearing_truth, NoiseSpec("laplace", (0, 0, 1, 1), seed=9), 2000)
    cfg = NetworkConfig(normalize=False, learning_rate=1e-3)
    state, means = None, []
    for _ in range(4):
        res = train_online(s, bearing_graph, cfg, state=state)
        state = res.state
        means.append(res.errors.mean())
    assert all(b <= a for a, b in zip(means, means[1:]))


def test_series_too_short(bearing_graph):
    with pytest.raises(ValueError):
        train_online(MultichannelSeries(np.ones((1, 4))), bearing_graph)


def test_normalized_estimates_are_in_standardized_units(bearing_graph, bearing_truth, bearing_noise):
    s = generate_series(bearing_graph, bearing_truth, bearing_noise, 20000)
    res = train_online(s, bearing_graph, NetworkConfig(learning_rate=3e-3))
    sd = s.data.std(axis=0, ddof=1)
    expected = bearing_truth.matrices * sd[None, None, :] / sd[None, :, None]
    layout = res.layout
    err = np.abs(flatten(res.couplings, layout) - flatten(CouplingSet(expected), layout))
    assert err.mean() < 0.1


def test_config_validation():
    with pytest.raises(ValueError):
        NetworkConfig(learning_rate=0)
    with pytest.raises(ValueError):
        NetworkConfig(smoothing=1.0)
    with pytest.raises(ValueError):
        NetworkConfig(hidden_size=4, context_size=5)
