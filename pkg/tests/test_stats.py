import io
import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kronequilt.graph import EdgeList
from kronequilt.kronecker import THETA1
from kronequilt.magm import MagmModel
from kronequilt.stats import (
    PARTITION_FIELDS,
    degree_distribution,
    largest_scc_fraction,
    log_partition_bound,
    measure_partition_size,
    oversized_partition_bound,
    partition_bound,
    poisson_chernoff,
    write_csv,
)


def test_scc_examples():
    assert largest_scc_fraction(EdgeList.empty(4)) == 0.25
    cycle = EdgeList.from_pairs(5, [(i, i % 5 + 1) for i in range(1, 6)])
    assert largest_scc_fraction(cycle) == 1.0
    two = EdgeList.from_pairs(8, [(1, 2), (2, 3), (3, 1), (4, 5), (5, 6), (6, 4)])
    assert largest_scc_fraction(two) == 0.375
    assert largest_scc_fraction(EdgeList.empty(0)) == 0.0


graphs = st.integers(1, 15).flatmap(
    lambda n: st.tuples(st.just(n), st.sets(st.tuples(st.integers(1, n), st.integers(1, n)), max_size=60))
)


@settings(max_examples=100, deadline=None)
@given(graphs, st.randoms(use_true_random=False))
def test_scc_matches_networkx_and_is_relabelling_invariant(case, rnd):
    n, pairs = case
    pairs = sorted(pairs)
    g = EdgeList.from_pairs(n, pairs)
    ref = nx.DiGraph()
    ref.add_nodes_from(range(1, n + 1))
    ref.add_edges_from(pairs)
    expect = max(len(c) for c in nx.strongly_connected_components(ref)) / n
    assert largest_scc_fraction(g) == pytest.approx(expect)
    perm = list(range(1, n + 1))
    rnd.shuffle(perm)
    shuffled = [(perm[s - 1], perm[t - 1]) for s, t in pairs]
    rnd.shuffle(shuffled)
    assert largest_scc_fraction(EdgeList.from_pairs(n, shuffled)) == pytest.approx(expect)


def test_degree_distribution_examples():
    empty = degree_distribution(EdgeList.empty(3))
    assert empty.out_degrees.tolist() == [0, 0, 0] and empty.out_histogram.tolist() == [3]
    complete = degree_distribution(EdgeList.from_pairs(3, [(i, j) for i in (1, 2, 3) for j in (1, 2, 3)]))
    assert complete.out_degrees.tolist() == [3, 3, 3] and complete.in_degrees.tolist() == [3, 3, 3]
    g = degree_distribution(EdgeList.from_pairs(4, [(1, 2), (1, 3), (1, 4), (2, 3), (4, 4)]))
    assert g.out_degrees.tolist() == [3, 1, 0, 1]
    assert g.in_degrees.tolist() == [0, 1, 2, 2]
    assert g.out_histogram.tolist() == [1, 2, 0, 1]
    assert g.in_histogram.tolist() == [1, 1, 2]


def test_partition_size_degenerate_mu():
    model = MagmModel.uniform(THETA1, 0.0, 37, 5)
    assert measure_partition_size(model, np.random.default_rng(0), 4).tolist() == [37] * 4
    with pytest.raises(ValueError):
        measure_partition_size(model, np.random.default_rng(0), 0)


def test_partition_bound_values():
    assert partition_bound(4) == pytest.approx(16 / (4 * math.e), rel=1e-12)
    for k in range(2, 11):
        n = 2**k
        direct = n**2 / (math.e * math.log2(n) ** math.log2(n))
        assert partition_bound(n) == pytest.approx(direct, rel=1e-9)
    values = [log_partition_bound(2**k) for k in range(6, 200)]
    assert all(b < a for a, b in zip(values, values[1:]))
    assert partition_bound(2**64) < 1
    with pytest.raises(ValueError):
        partition_bound(2)


def test_chernoff_values():
    assert poisson_chernoff(1, 1) == pytest.approx(1.0)
    assert poisson_chernoff(3.0, 0) == pytest.approx(math.exp(-3))
    assert poisson_chernoff(0.5, 6) == pytest.approx(math.exp(-0.5) * (math.e * 0.5) ** 6 / 6**6)
    with pytest.raises(ValueError):
        poisson_chernoff(-1, 1)


def test_oversized_bound_matches_direct_expression():
    n, d, t = 2**12, 10, 1
    lam, x = n / 2**d, 2 ** (t + 1) * math.log2(n)
    direct = n * math.exp(-lam) * (math.e * lam) ** x / x**x
    assert oversized_partition_bound(n, d, t) == pytest.approx(direct, rel=1e-9)


def test_csv_header():
    buf = io.StringIO()
    write_csv([{"n": 4, "d": 2, "mu": 0.5, "trial": 0, "B": 2}], PARTITION_FIELDS, buf)
    assert buf.getvalue() == "n,d,mu,trial,B\n4,2,0.5,0,2\n"
