"""Linear SVAR simulation.

    y[n] = A0 y[n] + sum_m Am y[n-m] + e[n]

All routines are pure functions. ``simulate_step`` also accepts complex
coupling arrays so the learner can push a complex-step perturbation
through it.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .graph import CausalGraph, CouplingSet, GraphError, _topological_order

log = logging.getLogger(__name__)

STABILITY_LIMIT = 0.999


class UnstableSystemError(ValueError):
    """Reduced-form VAR has companion spectral radius at or above the limit."""


@dataclass(frozen=True)
class MultichannelSeries:
    data: np.ndarray
    sample_rate: float | None = None
    channel_labels: tuple[str, ...] = ()

    def __post_init__(self):
        # C order keeps BLAS reductions, and so results, independent of input layout
        d = np.array(self.data, dtype=float, order="C")
        if d.ndim == 1:
            d = d[:, None]
        if d.ndim != 2 or d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError(f"series data must be a non-empty N x G matrix, got shape {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValueError("series contains non-finite values")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)
        labels = tuple(self.channel_labels) or tuple(f"B{i + 1}" for i in range(d.shape[1]))
        if len(labels) != d.shape[1]:
            raise ValueError("channel_labels length does not match column count")
        object.__setattr__(self, "channel_labels", labels)

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    def channel(self, idx: int) -> np.ndarray:
        return self.data[:, idx]

    def replace(self, data: np.ndarray) -> "MultichannelSeries":
        return MultichannelSeries(data, self.sample_rate, self.channel_labels)


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "laplace"
    scale: tuple[float, ...] | float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("gaussian", "laplace", "uniform"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        scale = np.atleast_1d(np.asarray(self.scale, dtype=float))
        # zero is allowed so single channels can be silenced
        if np.any(scale < 0) or not np.all(np.isfinite(scale)):
            raise ValueError("noise scales must be finite and non-negative")
        object.__setattr__(self, "scale", tuple(float(s) for s in scale))

    def realize(self, n_samples: int, n_channels: int) -> np.ndarray:
        """Unit-variance draws times the per-channel scale (scale = std dev)."""
        scale = np.asarray(self.scale)
        if scale.size == 1:
            scale = np.full(n_channels, scale[0])
        if scale.size != n_channels:
            raise ValueError(f"{scale.size} noise scales for {n_channels} channels")
        rng = np.random.default_rng(self.seed)
        shape = (n_samples, n_channels)
        if self.kind == "gaussian":
            z = rng.standard_normal(shape)
        elif self.kind == "laplace":
            z = rng.laplace(0.0, 1.0 / np.sqrt(2.0), shape)
        else:
            z = rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), shape)
        return z * scale


def _as_lag_array(lags, lag_order: int, n_channels: int) -> np.ndarray:
    arr = np.asarray(lags)
    if lag_order == 0 and arr.size == 0:
        return np.zeros((0, n_channels), dtype=arr.dtype if arr.dtype != object else float)
    if arr.shape != (lag_order, n_channels):
        raise ValueError(f"lag window shape {arr.shape}, expected {(lag_order, n_channels)}")
    return arr


def simulate_step(couplings, y_now, lags) -> np.ndarray:
    """One-step causal-graph simulation ``A0 y_now + sum_m Am lags[m-1]``.

    ``couplings`` is a :class:`CouplingSet` or a raw ``(M+1, G, G)``
    array (possibly complex). ``lags`` holds ``[y[n-1], ..., y[n-M]]``.
    """
    a = couplings.matrices if isinstance(couplings, CouplingSet) else np.asarray(couplings)
    n_lags, g = a.shape[0] - 1, a.shape[1]
    y_now = np.asarray(y_now)
    if y_now.shape != (g,):
        raise ValueError(f"y_now has shape {y_now.shape}, expected ({g},)")
    window = _as_lag_array(lags, n_lags, g)
    stacked = np.concatenate([y_now[None, :], window], axis=0)
    return np.einsum("mec,mc->e", a, stacked)


def _structural_solve(a0: np.ndarray, rhs: np.ndarray, order: Sequence[int]) -> np.ndarray:
    """Solve ``(I - A0) y = rhs`` by forward substitution in topological order."""
    y = np.zeros_like(rhs)
    for e in order:
        y[..., e] = rhs[..., e] + y @ a0[e]
    return y


def _support_order(a0: np.ndarray) -> list[int]:
    g = a0.shape[0]
    edges = [(c, e) for e in range(g) for c in range(g) if a0[e, c] != 0.0]
    order = _topological_order(g, edges)
    if order is None:
        raise GraphError("instantaneous couplings contain a cycle")
    return order


def reduced_form(couplings: CouplingSet) -> np.ndarray:
    """``B^m = (I - A0)^-1 A^m`` for ``m = 1..M``, shape ``(M, G, G)``."""
    a = couplings.matrices
    order = _support_order(a[0])
    # column-wise: solve (I - A0) X = Am for each column
    return np.stack([_structural_solve(a[0], a[m].T, order).T for m in range(1, a.shape[0])]) \
        if a.shape[0] > 1 else np.zeros((0,) + a.shape[1:])


def companion_matrix(couplings: CouplingSet) -> np.ndarray:
    b = reduced_form(couplings)
    m, g = b.shape[0], couplings.node_count
    if m == 0:
        return np.zeros((0, 0))
    comp = np.zeros((m * g, m * g))
    comp[:g, :] = np.concatenate(list(b), axis=1)
    comp[g:, :-g] = np.eye((m - 1) * g)
    return comp


def companion_spectral_radius(couplings: CouplingSet, max_iter: int = 64) -> float:
    """Spectral radius of the reduced-form companion matrix.

    Runs the power method on the matrix itself by repeated normalized
    squaring, starting from the companion matrix. After ``j`` squarings
    the estimate is ``||C^(2^j)||^(2^-j)``, which converges to the spectral
    radius for any matrix, including complex-conjugate dominant pairs and
    nilpotent ones (which collapse to exactly zero).
    """
    c = companion_matrix(couplings)
    if c.size == 0:
        return 0.0
    nrm = np.linalg.norm(c, 2)
    if nrm == 0.0:
        return 0.0
    n = c / nrm
    log_rho = np.log(nrm)
    weight = 1.0
    # tiny entries of the normalized powers may underflow; that is harmless
    with np.errstate(under="ignore"):
        for _ in range(max_iter):
            sq = n @ n
            s = np.linalg.norm(sq, 2)
            if s == 0.0:
                return 0.0
            n = sq / s
            weight *= 0.5
            # C^(2^j) = N_j * exp(2^j * log_rho)
            log_rho = log_rho + weight * np.log(s)
        return float(np.exp(log_rho))


def generate_series(
    graph: CausalGraph,
    couplings: CouplingSet,
    noise: NoiseSpec,
    n_samples: int,
    burn_in: int | None = None,
    sample_rate: float | None = None,
) -> MultichannelSeries:
    """Draw a realization of the structural model.

    Each sample is solved for ``y[n]`` by forward substitution through the
    instantaneous DAG. The first ``burn_in`` samples (default ``10*M*G``)
    are discarded; the noise realization is drawn for the full length.
    """
    if not couplings.respects(graph):
        raise GraphError("couplings do not respect the graph mask")
    order = graph.topological_order()
    g, m_ord = graph.node_count, graph.lag_order
    radius = companion_spectral_radius(couplings)
    if radius >= STABILITY_LIMIT:
        raise UnstableSystemError(f"companion spectral radius {radius:.6f} >= {STABILITY_LIMIT}")
    if burn_in is None:
        burn_in = 10 * m_ord * g
    total = n_samples + burn_in
    e = noise.realize(total, g)
    a = couplings.matrices
    y = np.zeros((total + m_ord, g))
    for n in range(total):
        t = n + m_ord
        rhs = e[n].copy()
        for m in range(1, m_ord + 1):
            rhs += a[m] @ y[t - m]
        y[t] = _structural_solve(a[0], rhs, order)
    return MultichannelSeries(y[m_ord + burn_in:], sample_rate, graph.node_labels)


def _target_order(a0: np.ndarray, targets: Sequence[int]) -> list[int]:
    tset = set(targets)
    edges = [
        (c, e) for e in tset for c in tset if c != e and a0[e, c] != 0.0
    ]
    order = _topological_order(a0.shape[0], edges)
    if order is None:
        raise GraphError("targets have cyclic instantaneous dependencies")
    return [i for i in order if i in tset]


def whatif_run(
    couplings: CouplingSet,
    driver: MultichannelSeries,
    target_nodes: Iterable[int],
    closed_loop: bool = False,
) -> MultichannelSeries:
    """Re-simulate ``target_nodes`` from measured non-target channels.

    Returns ``N - M`` samples aligned with ``driver.data[M:]``: non-target
    channels are copied from the driver, targets are the one-step
    simulation output. Targets that depend instantaneously on other
    targets see the freshly simulated values. Lagged inputs come from the
    driver unless ``closed_loop`` is set, in which case targets read their
    own simulated past.
    """
    a = couplings.matrices
    m_ord, g = couplings.lag_order, couplings.node_count
    if driver.n_channels != g:
        raise ValueError(f"driver has {driver.n_channels} channels, couplings have {g}")
    targets = sorted(set(int(t) for t in target_nodes))
    if any(not 0 <= t < g for t in targets):
        raise GraphError(f"target nodes {targets} out of range")
    if driver.n_samples <= m_ord:
        raise ValueError("driver shorter than the lag order")
    order = _target_order(a[0], targets)
    y = np.array(driver.data, dtype=float)
    src = y if closed_loop else np.array(driver.data, dtype=float)
    for n in range(m_ord, driver.n_samples):
        for e in order:
            val = a[0, e] @ y[n]
            for m in range(1, m_ord + 1):
                val += a[m, e] @ src[n - m]
            y[n, e] = val
    return driver.replace(y[m_ord:])


def one_step_prediction(couplings: CouplingSet, series: MultichannelSeries) -> np.ndarray:
    """``yhat[n]`` for ``n = M..N-1`` using measured values everywhere."""
    a = couplings.matrices
    m_ord = couplings.lag_order
    data = series.data
    n = data.shape[0]
    out = data[m_ord:] @ a[0].T
    for m in range(1, m_ord + 1):
        out = out + data[m_ord - m:n - m] @ a[m].T
    return out


def counterfactual_remove(
    couplings: CouplingSet,
    edges: Iterable[tuple] = (),
    node: int | None = None,
    effect: int | None = None,
    graph: CausalGraph | None = None,
) -> CouplingSet:
    """Zero selected couplings at every lag, returning a new set.

    ``edges`` holds ``(cause, effect)`` pairs (all lags) or
    ``(cause, effect, lag)`` triples. ``node`` removes that node's
    influence on ``effect``, or on every other node if ``effect`` is None.
    Indices are 0-based. With ``graph`` given, each removed edge must exist
    in it at some lag.
    """
    a = np.array(couplings.matrices)
    g, n_lags = couplings.node_count, couplings.lag_order + 1
    selected: list[tuple[int, int, int | None]] = []
    for item in edges:
        if len(item) == 2:
            selected.append((int(item[0]), int(item[1]), None))
        elif len(item) == 3:
            selected.append((int(item[0]), int(item[1]), int(item[2])))
        else:
            raise GraphError(f"cannot interpret edge {item!r}")
    if node is not None:
        effects = [effect] if effect is not None else [e for e in range(g) if e != node]
        selected.extend((int(node), int(e), None) for e in effects)
    for c, e, m in selected:
        if not (0 <= c < g and 0 <= e < g) or c == e:
            raise GraphError(f"unknown edge {c + 1}->{e + 1}")
        if m is not None and not 0 <= m < n_lags:
            raise GraphError(f"lag {m} outside 0..{n_lags - 1}")
        if graph is not None:
            lags = range(n_lags) if m is None else [m]
            if not any((c, e) in graph.edges(k) for k in lags):
                raise GraphError(f"edge {c + 1}->{e + 1} not in graph")
        if m is None:
            a[:, e, c] = 0.0
        else:
            a[m, e, c] = 0.0
    return CouplingSet(a)
