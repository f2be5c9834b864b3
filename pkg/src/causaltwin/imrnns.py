"""Identity-mapping recurrent network with a simulation layer.

The network reads the measurement vector ``y[n]`` (plus Elman context)
and emits the free couplings ``X2``. A fixed simulation layer turns the
couplings into a one-step prediction ``X3 = Psi(X2; y[n], lags)`` and the
error ``e = y[n] - X3`` is backpropagated through ``Psi`` using a
complex-step Jacobian.

    X1 = rho(W1 x0)        rho(u) = 2 / (1 + exp(-u)) - 1
    X2 = W2 X1             (linear output: couplings are unbounded)
    X3 = Psi(X2)
    W2 += eta * (J^T e) X1^T
    W1 += eta * ((W2^T J^T e) * drho) x0^T
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .graph import CausalGraph, CouplingSet, ParamLayout, unflatten, unflatten_array, validate_graph, GraphError
from .svar import MultichannelSeries

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    def __init__(self, step: int, message: str = "non-finite weights"):
        super().__init__(f"{message} at step {step}")
        self.step = step


@dataclass(frozen=True)
class NetworkConfig:
    hidden_size: int = 16
    context_size: int = 16
    context_delay: int = 1
    learning_rate: float = 1e-3
    complex_step: float = 1e-20
    weight_init_scale: float = 1.0
    seed: int = 0
    smoothing: float = 0.999
    normalize: bool = True
    bias: bool = True
    append_lags: bool = False
    logistic_drho: bool = False

    def __post_init__(self):
        if self.hidden_size < 1:
            raise ValueError("hidden_size must be positive")
        if not 0 <= self.context_size <= self.hidden_size:
            raise ValueError("context_size must lie in 0..hidden_size")
        if self.context_delay < 1:
            raise ValueError("context_delay must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not self.complex_step > 0:
            raise ValueError("complex_step must be positive")
        if not 0 <= self.smoothing < 1:
            raise ValueError("smoothing must lie in [0, 1)")

    def input_size(self, n_channels: int, lag_order: int) -> int:
        size = n_channels + self.context_size + int(self.bias)
        if self.append_lags:
            size += n_channels * lag_order
        return size


@dataclass
class NetworkState:
    w1: np.ndarray
    w2: np.ndarray
    context: deque
    k_smoothed: np.ndarray
    step: int = 0

    def copy(self) -> "NetworkState":
        return NetworkState(
            self.w1.copy(),
            self.w2.copy(),
            deque((c.copy() for c in self.context), maxlen=self.context.maxlen),
            self.k_smoothed.copy(),
            self.step,
        )


@dataclass
class StepTrace:
    x0: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray
    e: np.ndarray
    E: float


def bipolar_sigmoid(u):
    # 2*expit(u) - 1 loses precision near 0; tanh(u/2) is the same function
    return np.tanh(np.asarray(u) / 2.0)


def bipolar_sigmoid_grad(x1, logistic_form: bool = False):
    """Derivative of :func:`bipolar_sigmoid` expressed through its output."""
    x1 = np.asarray(x1)
    if logistic_form:
        return 2.0 * x1 * (1.0 - x1)
    return 0.5 * (1.0 + x1) * (1.0 - x1)


def init_state(config: NetworkConfig, input_size: int, output_size: int) -> NetworkState:
    rng = np.random.default_rng(config.seed)
    s1 = config.weight_init_scale / np.sqrt(input_size)
    s2 = config.weight_init_scale / np.sqrt(config.hidden_size)
    w1 = rng.uniform(-s1, s1, (config.hidden_size, input_size))
    w2 = rng.uniform(-s2, s2, (output_size, config.hidden_size))
    ctx = deque(
        [np.zeros(config.context_size) for _ in range(config.context_delay)],
        maxlen=config.context_delay,
    )
    return NetworkState(w1, w2, ctx, np.zeros(output_size), 0)


def forward(state: NetworkState, x0) -> tuple[np.ndarray, np.ndarray]:
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (state.w1.shape[1],):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({state.w1.shape[1]},)")
    x1 = bipolar_sigmoid(state.w1 @ x0)
    x2 = state.w2 @ x1
    return x1, x2


def _stack_inputs(y_now, lags, n_lags: int) -> np.ndarray:
    y_now = np.asarray(y_now, dtype=float)
    lags = np.asarray(lags, dtype=float).reshape(n_lags, y_now.size)
    return np.concatenate([y_now[None, :], lags], axis=0)


def sim_layer(x2, sim_inputs, layout: ParamLayout) -> np.ndarray:
    """``Psi``: one-step simulation driven by the network's coupling outputs."""
    y_now, lags = sim_inputs
    a = unflatten_array(x2, layout)
    stacked = _stack_inputs(y_now, lags, layout.lag_order)
    return np.einsum("...mec,mc->...e", a, stacked)


def complex_step_jacobian(f, x, h: float = 1e-20) -> np.ndarray:
    """Jacobian of a real-analytic ``f`` by complex steps: ``Im f(x + i h e_j) / h``.

    ``f`` must accept a batch of inputs stacked along a leading axis and
    return one output row per input. No subtraction is involved, so ``h``
    can be tiny without cancellation error.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    perturbed = x[None, :] + 1j * h * np.eye(x.size)
    return (np.asarray(f(perturbed)).imag / h).reshape(x.size, -1).T


def sim_jacobian(x2, sim_inputs, layout: ParamLayout, h_cs: float, e=None):
    """Complex-step Jacobian ``dX3/dX2`` (``G x Q``) and, if ``e`` is given, ``J^T e``.

    All ``Q`` perturbed evaluations run as one batch.
    """
    jac = complex_step_jacobian(lambda p: sim_layer(p, sim_inputs, layout), x2, h_cs)
    if e is None:
        return jac
    return jac, jac.T @ np.asarray(e)


def backprop_update(
    state: NetworkState,
    x0,
    x1,
    jte,
    learning_rate: float,
    logistic_drho: bool = False,
) -> NetworkState:
    """Apply one weight update; ``jte`` is ``J^T e`` from :func:`sim_jacobian`."""
    x0 = np.asarray(x0)
    x1 = np.asarray(x1)
    jte = np.asarray(jte)
    drho = bipolar_sigmoid_grad(x1, logistic_drho)
    with np.errstate(over="ignore", invalid="ignore"):
        delta_hidden = (state.w2.T @ jte) * drho
        w2 = state.w2 + learning_rate * np.outer(jte, x1)
        w1 = state.w1 + learning_rate * np.outer(delta_hidden, x0)
    if not (np.all(np.isfinite(w1)) and np.all(np.isfinite(w2))):
        raise DivergenceError(state.step)
    return NetworkState(w1, w2, state.context, state.k_smoothed, state.step)


def update_context(state: NetworkState, x1) -> NetworkState:
    """Push the first ``context_size`` hidden outputs into the delay line."""
    size = state.context[0].size if state.context else 0
    if state.context.maxlen:
        state.context.append(np.array(x1[:size], dtype=float))
    return state


def current_context(state: NetworkState) -> np.ndarray:
    # deque is oldest-first; with maxlen d, the head is X1 from d steps ago
    return state.context[0]


def build_input(state: NetworkState, y_now, config: NetworkConfig, lags=None) -> np.ndarray:
    parts = [np.asarray(y_now, dtype=float), current_context(state)]
    if config.append_lags and lags is not None:
        parts.append(np.asarray(lags, dtype=float).ravel())
    if config.bias:
        parts.append(np.ones(1))
    return np.concatenate(parts)


class RunningScaler:
    """Per-channel running z-score (Welford)."""

    def __init__(self, n_channels: int):
        self.count = 0
        self.mean = np.zeros(n_channels)
        self.m2 = np.zeros(n_channels)

    def update(self, y) -> None:
        self.count += 1
        delta = y - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (y - self.mean)

    @property
    def std(self) -> np.ndarray:
        if self.count < 2:
            return np.ones_like(self.mean)
        sd = np.sqrt(self.m2 / (self.count - 1))
        return np.where(sd > 0, sd, 1.0)

    def transform(self, y) -> np.ndarray:
        return (y - self.mean) / self.std


@dataclass
class TrainResult:
    couplings: CouplingSet
    layout: ParamLayout
    trajectory: np.ndarray
    errors: np.ndarray
    state: NetworkState
    config: NetworkConfig
    scale: np.ndarray | None = None
    traces: list[StepTrace] = field(default_factory=list)

    @property
    def steps(self) -> np.ndarray:
        return np.arange(self.trajectory.shape[0]) + self.layout.lag_order


def train_online(
    series: MultichannelSeries,
    graph: CausalGraph,
    config: NetworkConfig = NetworkConfig(),
    state: NetworkState | None = None,
    warmup: int = 0,
    keep_traces: bool = False,
) -> TrainResult:
    """Single pass of per-sample learning over ``series``.

    Returns the smoothed coupling estimate, its full trajectory (one row
    per processed sample) and the error norm ``E`` per sample. Pass a
    previous ``state`` to continue training across blocks.

    With ``config.normalize`` the channels are z-scored on the fly from
    running statistics (the first ``warmup`` samples only feed the
    statistics) and the couplings refer to normalized channels.
    """
    report = validate_graph(graph)
    if not report.ok:
        raise GraphError("; ".join(report.violations))
    layout = ParamLayout.from_graph(graph)
    g, m_ord = graph.node_count, graph.lag_order
    if series.n_channels != g:
        raise ValueError(f"series has {series.n_channels} channels, graph has {g}")
    if series.n_samples <= m_ord + warmup:
        raise ValueError(f"series too short: {series.n_samples} samples for lag order {m_ord} and warmup {warmup}")
    if layout.size == 0:
        raise GraphError("graph has no edges to learn")
    m_in = config.input_size(g, m_ord)
    if state is None:
        state = init_state(config, m_in, layout.size)
    else:
        state = state.copy()
        if state.w1.shape != (config.hidden_size, m_in) or state.w2.shape[0] != layout.size:
            raise ValueError("carried-over state does not match config/graph")

    raw = series.data
    if config.normalize:
        scaler = RunningScaler(g)
        data = np.empty_like(raw)
        for n in range(raw.shape[0]):
            scaler.update(raw[n])
            data[n] = scaler.transform(raw[n])
        scale = scaler.std
    else:
        data = raw
        scale = None

    eta = config.learning_rate
    beta = config.smoothing
    start = m_ord + warmup
    n_steps = raw.shape[0] - start
    trajectory = np.empty((n_steps, layout.size))
    errors = np.empty(n_steps)
    traces = []
    k = state.k_smoothed
    for i, n in enumerate(range(start, raw.shape[0])):
        y_now = data[n]
        lags = data[n - m_ord:n][::-1]
        x0 = build_input(state, y_now, config, lags)
        x1, x2 = forward(state, x0)
        x3 = sim_layer(x2, (y_now, lags), layout)
        e = y_now - x3
        _, jte = sim_jacobian(x2, (y_now, lags), layout, config.complex_step, e)
        try:
            state = backprop_update(state, x0, x1, jte, eta, config.logistic_drho)
        except DivergenceError:
            raise DivergenceError(n) from None
        state = update_context(state, x1)
        k = beta * k + (1.0 - beta) * x2
        state.k_smoothed = k
        state.step += 1
        trajectory[i] = k
        errors[i] = float(e @ e)
        if keep_traces:
            traces.append(StepTrace(x0, x1, x2, x3, e, errors[i]))
    return TrainResult(unflatten(k, layout), layout, trajectory, errors, state, config, scale, traces)
