import numpy as np
import pytest
from hypothesis import strategies as st

from causaltwin.graph import CausalGraph, CouplingSet
from causaltwin.svar import NoiseSpec

# Four bearings on one shaft: B3 and B4 are exogenous, B1 is the outcome
# node, B2 sits in between and feeds back from B1 through a lag.
BEARING_TRUTH = {
    (1, 0, 0): 0.6,
    (2, 0, 0): -0.4,
    (3, 0, 0): 0.3,
    (2, 0, 1): 0.5,
    (3, 0, 1): 0.4,
    (2, 1, 0): 0.5,
    (3, 1, 1): -0.3,
    (0, 1, 1): 0.3,
}
# roots at unit scale; effect scales chosen for roughly 10 dB explained/noise power
BEARING_NOISE_SCALE = (0.2, 0.18, 1.0, 1.0)


def graph_from_values(values, node_count=4, lag_order=1):
    inst = {(c, e) for c, e, m in values if m == 0}
    lagged = tuple({(c, e) for c, e, m in values if m == k} for k in range(1, lag_order + 1))
    return CausalGraph(node_count, lag_order, frozenset(inst), lagged)


@pytest.fixture
def bearing_graph():
    return graph_from_values(BEARING_TRUTH)


@pytest.fixture
def bearing_truth(bearing_graph):
    return CouplingSet.from_edges(bearing_graph, BEARING_TRUTH)


@pytest.fixture
def bearing_noise():
    return NoiseSpec("laplace", BEARING_NOISE_SCALE, seed=7)


def random_system(rng, node_count=4, lag_order=1, density=0.5, scale=0.4):
    """Random DAG-constrained graph with couplings small enough to be stable."""
    perm = rng.permutation(node_count)
    rank = np.empty(node_count, dtype=int)
    rank[perm] = np.arange(node_count)
    values = {}
    for m in range(lag_order + 1):
        for e in range(node_count):
            for c in range(node_count):
                if c == e or rng.random() > density:
                    continue
                if m == 0 and rank[c] >= rank[e]:
                    continue
                values[(c, e, m)] = float(rng.uniform(-scale, scale))
    graph = graph_from_values(values, node_count, lag_order)
    return graph, CouplingSet.from_edges(graph, values)


@st.composite
def graphs(draw, max_nodes=5, max_lag=2):
    """Valid graphs: instantaneous edges follow a random node ordering."""
    n = draw(st.integers(1, max_nodes))
    m_ord = draw(st.integers(0, max_lag))
    order = draw(st.permutations(range(n)))
    rank = {node: i for i, node in enumerate(order)}
    pairs = [(c, e) for c in range(n) for e in range(n) if c != e]
    inst = draw(st.sets(st.sampled_from(pairs), max_size=len(pairs))) if pairs else set()
    inst = {(c, e) for c, e in inst if rank[c] < rank[e]}
    lagged = tuple(
        draw(st.sets(st.sampled_from(pairs), max_size=len(pairs))) if pairs else set()
        for _ in range(m_ord)
    )
    return CausalGraph(n, m_ord, frozenset(inst), lagged)
