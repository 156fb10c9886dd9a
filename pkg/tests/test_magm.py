import io
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import binomial_pvalues, bonferroni_ok, cell_counts, two_sample_pvalues
from kronequilt.errors import ResourceGuardError
from kronequilt.kronecker import THETA1, THETA2, InitiatorChain, InitiatorMatrix, kpgm_edge_probability, kpgm_sample
from kronequilt.magm import (
    AttributeAssignment,
    MagmModel,
    _BlockIndex,
    build_partition,
    edge_probability_matrix,
    expected_magm_edges,
    format_model_config,
    magm_edge_probability,
    max_multiplicity,
    naive_magm_sample,
    parse_model_config,
    quilt_sample,
    read_attributes,
    sample_attributes,
    write_attributes,
)

ONES = InitiatorMatrix(1.0, 1.0, 1.0, 1.0)
ZERO_ISH = InitiatorMatrix(0.0, 0.0, 0.0, 1e-300)


def check_partition(attrs, part):
    lam = attrs.lambdas
    members = np.concatenate(part.sets) if part.sets else np.empty(0, dtype=np.int64)
    assert np.array_equal(np.sort(members), np.arange(1, attrs.n + 1))
    for c, nodes in enumerate(part.sets, 1):
        assert np.all(np.diff(nodes) > 0)
        assert np.unique(lam[nodes - 1]).size == nodes.size
        assert np.all(part.multiplicity[nodes - 1] == c)
    assert part.B == max_multiplicity(lam)
    # |Z_i| counts earlier-or-equal nodes with the same configuration.
    seen = Counter()
    for i, x in enumerate(lam.tolist()):
        seen[x] += 1
        assert part.multiplicity[i] == seen[x]


def test_partition_examples():
    part = build_partition(AttributeAssignment(4, 2, [3, 1, 3, 0]))
    assert part.multiplicity.tolist() == [1, 1, 2, 1]
    assert part.B == 2
    assert part.sets[0].tolist() == [1, 2, 4] and part.sets[1].tolist() == [3]
    part = build_partition(AttributeAssignment(5, 3, [4, 0, 7, 2, 1]))
    assert part.B == 1 and part.sets[0].tolist() == [1, 2, 3, 4, 5]
    part = build_partition(AttributeAssignment(4, 1, [1, 1, 1, 1]))
    assert part.B == 4 and [s.tolist() for s in part.sets] == [[1], [2], [3], [4]]


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 6).flatmap(lambda d: st.tuples(st.just(d), st.lists(st.integers(0, 2**d - 1), min_size=1, max_size=300))))
def test_partition_invariants(case):
    d, lam = case
    attrs = AttributeAssignment(len(lam), d, lam)
    check_partition(attrs, build_partition(attrs))


def test_attribute_validation():
    with pytest.raises(ValueError):
        AttributeAssignment(2, 2, [0, 4])
    with pytest.raises(ValueError):
        AttributeAssignment(3, 2, [0, 1])
    with pytest.raises(ValueError):
        MagmModel(InitiatorChain.repeated(THETA1, 2), (0.5,), 4)
    with pytest.raises(ValueError):
        MagmModel(InitiatorChain.repeated(THETA1, 1), (1.5,), 4)


def test_sample_attributes_extremes_and_balance():
    rng = np.random.default_rng(0)
    assert np.all(sample_attributes(MagmModel.uniform(THETA1, 0.0, 50, 4), rng).lambdas == 0)
    assert np.all(sample_attributes(MagmModel.uniform(THETA1, 1.0, 50, 4), rng).lambdas == 15)
    attrs = sample_attributes(MagmModel.uniform(THETA1, 0.5, 1024, 10), rng)
    freq = attrs.bits().mean(axis=0)
    assert np.all(np.abs(freq - 0.5) < 4 * np.sqrt(0.25 / 1024))


def test_bits_msb_is_first_attribute():
    attrs = AttributeAssignment(2, 3, [4, 1])
    assert attrs.bits().tolist() == [[1, 0, 0], [0, 0, 1]]


def test_edge_probability_examples():
    model = MagmModel.uniform(THETA1, 0.5, 2, 2)
    attrs = AttributeAssignment(2, 2, [1, 2])
    assert magm_edge_probability(model, attrs, 1, 2) == pytest.approx(0.49)
    attrs0 = AttributeAssignment(2, 2, [0, 0])
    assert magm_edge_probability(model, attrs0, 1, 2) == pytest.approx(0.15**2)
    with pytest.raises(IndexError):
        magm_edge_probability(model, attrs, 3, 1)


def test_edge_probability_agrees_with_kronecker_under_lambda_map():
    rng = np.random.default_rng(2)
    chain = InitiatorChain([THETA1, THETA2, InitiatorMatrix(0.3, 0.9, 0.2, 0.6), THETA2, THETA1])
    model = MagmModel(chain, (0.3, 0.5, 0.7, 0.5, 0.1), 200)
    attrs = sample_attributes(model, rng)
    for i, j in rng.integers(1, 201, size=(1000, 2)):
        expect = kpgm_edge_probability(chain, int(attrs.lambdas[i - 1]) + 1, int(attrs.lambdas[j - 1]) + 1)
        assert magm_edge_probability(model, attrs, int(i), int(j)) == pytest.approx(expect, rel=1e-12)


def test_identity_assignment_reduces_to_kronecker_matrix():
    chain = InitiatorChain.repeated(THETA2, 3)
    model = MagmModel(chain, (0.5,) * 3, 8)
    attrs = AttributeAssignment(8, 3, np.arange(8))
    assert np.allclose(edge_probability_matrix(model, attrs), chain.dense(), rtol=1e-12)


def test_expected_edges_matches_monte_carlo_of_q():
    model = MagmModel.uniform(THETA2, 0.3, 30, 4)
    rng = np.random.default_rng(0)
    sums = [edge_probability_matrix(model, sample_attributes(model, rng)).sum() for _ in range(4000)]
    assert np.mean(sums) == pytest.approx(expected_magm_edges(model), rel=0.02)


def test_block_index_dense_and_sparse_agree():
    lam = np.array([5, 9, 2, 700, 9])
    nodes = np.array([1, 3, 4])
    queries = np.array([5, 2, 700, 9, 0, 1023])
    dense = _BlockIndex(nodes, lam, 3)
    dense.size = 1024
    sparse = _BlockIndex(nodes, lam, 10)
    assert dense.dense and not sparse.dense
    for idx in (dense, sparse):
        found, node = idx.lookup(queries)
        assert found.tolist() == [True, True, True, False, False, False]
        assert node[found].tolist() == [1, 3, 4]


def test_naive_trivial_chains():
    rng = np.random.default_rng(0)
    model = MagmModel.uniform(ONES, 0.5, 6, 3)
    attrs = sample_attributes(model, rng)
    assert len(naive_magm_sample(model, attrs, rng)) == 36
    assert len(quilt_sample(model, attrs, rng)) == 36
    model0 = MagmModel.uniform(ZERO_ISH, 0.5, 6, 3)
    assert len(naive_magm_sample(model0, sample_attributes(model0, rng), rng)) == 0


def test_naive_guard():
    model = MagmModel.uniform(THETA1, 0.5, 64, 6)
    attrs = sample_attributes(model, np.random.default_rng(0))
    with pytest.raises(ResourceGuardError):
        naive_magm_sample(model, attrs, np.random.default_rng(0), max_nodes=32)


def test_incompatible_assignment():
    model = MagmModel.uniform(THETA1, 0.5, 4, 2)
    with pytest.raises(ValueError):
        quilt_sample(model, AttributeAssignment(4, 3, [0, 1, 2, 3]), np.random.default_rng(0))
    with pytest.raises(ValueError):
        quilt_sample(model, AttributeAssignment(4, 2, [0, 1, 2, 3]), np.random.default_rng(0), kpgm="bogus")


def test_single_node_is_one_bernoulli_trial():
    model = MagmModel.uniform(THETA1, 0.5, 1, 3)
    attrs = AttributeAssignment(1, 3, [5])
    q = magm_edge_probability(model, attrs, 1, 1)
    rng = np.random.default_rng(9)
    s = 100_000
    hits = sum(len(quilt_sample(model, attrs, rng)) for _ in range(s))
    assert bonferroni_ok(binomial_pvalues([hits], s, [q]))


def test_all_distinct_identity_matches_kronecker():
    chain = InitiatorChain.repeated(THETA1, 3)
    model = MagmModel(chain, (0.5,) * 3, 8)
    attrs = AttributeAssignment(8, 3, np.arange(8))
    s = 20_000
    rng_q, rng_k = np.random.default_rng(1), np.random.default_rng(2)
    quilt = cell_counts(lambda: quilt_sample(model, attrs, rng_q, kpgm="rejection"), 8, s)
    kron = cell_counts(lambda: kpgm_sample(chain, rng_k), 8, s)
    assert bonferroni_ok(two_sample_pvalues(quilt, kron, s, s))


def test_quilt_matches_q_with_repeated_configurations():
    model = MagmModel.uniform(THETA2, 0.5, 6, 2)
    attrs = AttributeAssignment(6, 2, [3, 3, 0, 3, 1, 0])
    s = 10_000
    rng = np.random.default_rng(4)
    counts = cell_counts(lambda: quilt_sample(model, attrs, rng), 6, s)
    assert bonferroni_ok(binomial_pvalues(counts, s, edge_probability_matrix(model, attrs)))


def test_pairwise_independence_n4():
    model = MagmModel.uniform(THETA1, 0.5, 4, 2)
    attrs = AttributeAssignment(4, 2, [2, 2, 1, 2])
    q = edge_probability_matrix(model, attrs).ravel()
    s = 20_000
    rng = np.random.default_rng(8)
    ind = np.zeros((s, 16), dtype=np.int8)
    for t in range(s):
        g = quilt_sample(model, attrs, rng)
        ind[t, (g.sources - 1) * 4 + g.targets - 1] = 1
    pair_rng = np.random.default_rng(0)
    live = np.flatnonzero((q > 0) & (q < 1))
    for _ in range(20):
        a, b = pair_rng.choice(live, size=2, replace=False)
        cov = np.mean(ind[:, a] * ind[:, b]) - ind[:, a].mean() * ind[:, b].mean()
        # Under independence the product indicator has variance q_a q_b (1 - q_a q_b).
        sd = np.sqrt(q[a] * q[b] * (1 - q[a] * q[b]) / s)
        assert abs(cov) < 4 * sd


@pytest.mark.parametrize("kpgm", ["exact", "rejection"])
def test_worker_count_does_not_change_output(kpgm):
    model = MagmModel.uniform(THETA1, 0.7, 300, 8)
    attrs = sample_attributes(model, np.random.default_rng(0))
    serial = quilt_sample(model, attrs, np.random.default_rng(5), kpgm=kpgm)
    threaded = quilt_sample(model, attrs, np.random.default_rng(5), workers=4, kpgm=kpgm)
    serial.validate()
    assert build_partition(attrs).B > 1
    assert serial.to_text() == threaded.to_text()


def test_n_not_power_of_two_both_directions():
    rng = np.random.default_rng(3)
    for n, d in ((100, 5), (20, 7)):
        model = MagmModel.uniform(THETA2, 0.5, n, d)
        attrs = sample_attributes(model, rng)
        g = quilt_sample(model, attrs, rng)
        g.validate()
        assert g.n == n


def test_attribute_file_round_trip(tmp_path):
    attrs = AttributeAssignment(4, 3, [7, 0, 3, 3])
    write_attributes(attrs, tmp_path / "a.txt")
    assert (tmp_path / "a.txt").read_text() == "# n=4 d=3\n7\n0\n3\n3\n"
    back = read_attributes(tmp_path / "a.txt")
    assert (back.n, back.d) == (4, 3) and back.lambdas.tolist() == [7, 0, 3, 3]
    with pytest.raises(ValueError):
        read_attributes(io.StringIO("# n=2 d=1\n0\n"))


def test_model_config_parsing():
    text = """
    # shared values, level 2 overridden
    d = 2
    n = 10
    theta.00 = 0.15
    theta.01 = 0.7
    theta.10 = 0.7
    theta.11 = 0.85
    theta.2.00 = 0.35
    mu = 0.5
    mu.2 = 0.9
    """
    model = parse_model_config(text)
    assert model.n == 10 and model.d == 2 and model.mus == (0.5, 0.9)
    assert model.chain.thetas[0].tolist() == [[0.15, 0.7], [0.7, 0.85]]
    assert model.chain.thetas[1][0, 0] == 0.35
    again = parse_model_config(format_model_config(model))
    assert again == model
    for bad in ("d = 1\nn = 2\nmu = 0.5\n", "d = 1\nn = 2\ntheta.00=1\ntheta.01=1\ntheta.10=1\ntheta.11=1\nmu=0.5\nextra=1\n", "n = 2\n", "d 1\n"):
        with pytest.raises(ValueError):
            parse_model_config(bad)
