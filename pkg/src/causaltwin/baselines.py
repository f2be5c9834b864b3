"""Closed-form reference estimators.

``ols_svar_fit`` is the independent oracle for the online learner. The
direction test and variance ratios reproduce simple side analyses on
pairs of channels.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .graph import CausalGraph, CouplingSet, GraphError
from .svar import MultichannelSeries

RANK_TOL = 1e-10


class RankDeficientError(np.linalg.LinAlgError):
    def __init__(self, nodes: list[int]):
        super().__init__("rank-deficient regressors for node(s) " + ", ".join(str(n + 1) for n in nodes))
        self.nodes = nodes


@dataclass
class FitReport:
    couplings: CouplingSet
    residual_variance: np.ndarray
    std_errors: CouplingSet | None = None
    n_obs: int = 0
    rank_deficient: list[int] = field(default_factory=list)


def _regressors(data: np.ndarray, graph: CausalGraph, effect: int):
    """Design matrix for ``effect`` and the ``(lag, cause)`` column keys."""
    m_ord = graph.lag_order
    n = data.shape[0]
    keys, cols = [], []
    for m in range(m_ord + 1):
        for c in sorted(c for c, e in graph.edges(m) if e == effect):
            keys.append((m, c))
            cols.append(data[m_ord - m:n - m, c])
    x = np.column_stack(cols) if cols else np.zeros((n - m_ord, 0))
    return x, keys


def _spd_solve(xtx: np.ndarray, xty: np.ndarray):
    # relative eigenvalue rank check before the Cholesky solve
    diag = np.sqrt(np.diag(xtx))
    if np.any(diag == 0):
        return None
    corr = xtx / np.outer(diag, diag)
    eig = np.linalg.eigvalsh(corr)
    if eig[0] <= RANK_TOL * eig[-1]:
        return None
    factor = cho_factor(xtx)
    return cho_solve(factor, xty), cho_solve(factor, np.eye(xtx.shape[0]))


def ols_svar_fit(series: MultichannelSeries, graph: CausalGraph, strict: bool = True) -> FitReport:
    """Per-node least squares of ``y_e[n]`` on its masked parents.

    No intercept is fitted, matching the model. Rank-deficient nodes raise
    :class:`RankDeficientError` unless ``strict`` is false, in which case
    their couplings stay zero and they are listed in the report.
    """
    g, m_ord = graph.node_count, graph.lag_order
    if series.n_channels != g:
        raise ValueError(f"series has {series.n_channels} channels, graph has {g}")
    data = series.data
    n_obs = data.shape[0] - m_ord
    a = np.zeros((m_ord + 1, g, g))
    se = np.zeros_like(a)
    resid_var = np.zeros(g)
    bad = []
    for e in range(g):
        x, keys = _regressors(data, graph, e)
        y = data[m_ord:, e]
        if not keys:
            resid_var[e] = float(y @ y) / max(n_obs, 1)
            continue
        if n_obs <= len(keys):
            bad.append(e)
            continue
        solved = _spd_solve(x.T @ x, x.T @ y)
        if solved is None:
            bad.append(e)
            continue
        beta, inv = solved
        r = y - x @ beta
        dof = n_obs - len(keys)
        s2 = float(r @ r) / dof
        resid_var[e] = s2
        for (m, c), b, v in zip(keys, beta, np.diag(inv)):
            a[m, e, c] = b
            se[m, e, c] = np.sqrt(s2 * v)
    if bad and strict:
        raise RankDeficientError(bad)
    return FitReport(CouplingSet(a), resid_var, CouplingSet(se), n_obs, bad)


@dataclass(frozen=True)
class DirectionVerdict:
    pair: tuple[str, str]
    statistic_forward: float
    statistic_reverse: float
    verdict: str
    threshold: float


def _residual_dependence(regressor: np.ndarray, target: np.ndarray) -> float:
    x = regressor - regressor.mean()
    y = target - target.mean()
    b = (x @ y) / (x @ x)
    r = y - b * x
    return float(abs(np.corrcoef(r * r, x * x)[0, 1]))


def direction_test(x, y, threshold: float = 0.1, names: tuple[str, str] = ("X", "Y")) -> DirectionVerdict:
    """Pick a causal direction between two channels from residual dependence.

    Regressing the effect on the true cause leaves a residual independent
    of the regressor; the wrong direction leaves one that is uncorrelated
    but still dependent when the noise is non-Gaussian. Dependence is
    measured as ``|corr(r^2, x^2)|``, a second-moment proxy.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("channels must be 1-D and equal length")
    if x.size < 100:
        raise ValueError("direction test needs at least 100 samples")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ValueError("constant channel")
    fwd = _residual_dependence(x, y)
    rev = _residual_dependence(y, x)
    a, b = names
    if rev - fwd > threshold:
        verdict = f"{a}->{b}"
    elif fwd - rev > threshold:
        verdict = f"{b}->{a}"
    else:
        verdict = "inconclusive"
    return DirectionVerdict((a, b), fwd, rev, verdict, threshold)


def variance_ratios(series: MultichannelSeries) -> np.ndarray:
    var = np.var(series.data, axis=0)
    if np.any(var == 0):
        raise ValueError("zero-variance channel")
    out = var[:, None] / var[None, :]
    np.fill_diagonal(out, 1.0)
    return out
