import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gdrkit.dcr import DomainClassCounts, build_table, dcr_weights, occurrence_probs, sample_weight
from gdrkit.rng import make_rng


def oracle_weights(counts, beta):
    """Independent loop evaluation: sum of q^beta over observed pairs over q^beta."""
    total = sum(sum(row) for row in counts)
    num = 0.0
    for row in counts:
        for n in row:
            if n > 0:
                num += (n / total) ** beta
    return [[num / (n / total) ** beta if n > 0 else 0.0 for n in row] for row in counts]


def counts(table, domains=None):
    table = np.asarray(table)
    domains = domains or [f"d{k}" for k in range(table.shape[0])]
    return DomainClassCounts(domains, table.shape[1], table)


def test_uniform_probabilities():
    q = occurrence_probs(counts([[25, 25], [25, 25]]))
    assert np.all(q == 0.25)


def test_single_domain_beta_one():
    table = build_table(counts([[3, 1]], ["d1"]), beta=1.0)
    assert np.allclose(table.q, [[0.75, 0.25]])
    assert table.w[0, 0] == pytest.approx(4 / 3, abs=1e-12)
    assert table.w[0, 1] == pytest.approx(4.0, abs=1e-12)
    assert sample_weight(table, "d1", 1) == pytest.approx(4.0, abs=1e-12)
    assert sample_weight(table, 0, 1) == sample_weight(table, "d1", 1)


def test_beta_zero_gives_pair_count():
    table = build_table(counts([[5, 1, 9], [2, 7, 3]]), beta=0.0)
    assert np.all(table.w == 6.0)


def test_zero_count_pairs():
    table = build_table(counts([[4, 0], [2, 2]]), beta=0.5)
    assert table.w[0, 1] == 0.0
    assert np.allclose(table.w, oracle_weights([[4, 0], [2, 2]], 0.5), atol=1e-12)


def test_errors():
    with pytest.raises(ValueError):
        occurrence_probs(counts([[0, 0]]))
    with pytest.raises(ValueError):
        dcr_weights([[0.5, 0.5]], 1.5)
    table = build_table(counts([[1, 2]]), 0.5)
    with pytest.raises(IndexError):
        sample_weight(table, 0, 2)
    with pytest.raises(KeyError):
        sample_weight(table, "nope", 0)
    with pytest.raises(KeyError):
        sample_weight(table, 3, 0)


def test_conditional_option():
    q = occurrence_probs(counts([[3, 1], [1, 1]]), conditional=True)
    assert np.allclose(q, [[0.75, 0.25], [0.5, 0.5]])


def test_from_labels():
    c = DomainClassCounts.from_labels(["a", "b", "a", "a"], [0, 1, 1, 0], 3, ["a", "b"])
    assert c.counts.tolist() == [[2, 1, 0], [0, 1, 0]]
    assert c.total == 4


@pytest.mark.parametrize("seed", range(100))
def test_oracle_random_tables(seed):
    rng = make_rng(seed, "dcr")
    d, n = int(rng.integers(1, 6)), int(rng.integers(1, 6))
    table = rng.integers(0, 50, (d, n))
    table[0, 0] += 1
    beta = float(rng.uniform())
    got = build_table(counts(table), beta).w
    assert np.abs(got - np.array(oracle_weights(table.tolist(), beta))).max() <= 1e-12 * max(1.0, got.max())


count_tables = arrays(np.int64, st.tuples(st.integers(1, 4), st.integers(2, 5)), elements=st.integers(1, 60))


@settings(max_examples=60, deadline=None)
@given(table=count_tables)
def test_dispersion_nondecreasing_in_beta(table):
    prev = 0.0
    for beta in np.linspace(0, 1, 11):
        w = build_table(counts(table), beta).w
        disp = w.max() / w.min()
        assert disp >= prev - 1e-12
        prev = disp


@settings(max_examples=60, deadline=None)
@given(table=count_tables, beta=st.floats(0.05, 1.0), k=st.integers(2, 7))
def test_monotone_and_scale_free(table, beta, k):
    t = build_table(counts(table), beta)
    q, w = t.q.ravel(), t.w.ravel()
    for a in range(len(q)):
        for b in range(len(q)):
            if q[a] < q[b]:
                assert w[a] > w[b]
    scaled = build_table(counts(table * k), beta)
    assert np.allclose(scaled.w, t.w, rtol=1e-12)
    assert abs(t.q.sum() - 1.0) <= 1e-12
