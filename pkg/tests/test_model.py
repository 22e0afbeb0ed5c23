import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from plnde.model import (
    ChainState,
    CountMatrix,
    CountMatrixError,
    FilterPolicy,
    SamplingDepths,
    estimate_depths,
    filter_low_counts,
    load_counts,
    read_depths,
    write_counts,
    write_depths,
    write_labels,
)


def _write(tmp_path, text, name="c.tsv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _cm(counts, cond=None):
    counts = np.asarray(counts)
    n = counts.shape[1]
    cond = cond or ["A"] * (n // 2) + ["B"] * (n - n // 2)
    return CountMatrix(counts, [f"g{j}" for j in range(counts.shape[0])], cond)


def test_load_two_by_four(tmp_path):
    p = _write(tmp_path, "gene\ts1\ts2\ts3\ts4\ng1\t1\t2\t3\t4\ng2\t0\t0\t5\t6\n")
    cm = load_counts(p, "A,A,B,B")
    assert cm.m == 2 and cm.n_a == 2 and cm.n_b == 2
    assert cm.gene_ids == ("g1", "g2")
    np.testing.assert_array_equal(cm.counts, [[1, 2, 3, 4], [0, 0, 5, 6]])


def test_negative_count_names_cell(tmp_path):
    p = _write(tmp_path, "gene\ts1\ts2\ng1\t1\t2\ng2\t-1\t3\n")
    with pytest.raises(CountMatrixError, match=r":3: column 2: negative count -1"):
        load_counts(p, "A,B")


def test_non_integer_count_names_cell(tmp_path):
    p = _write(tmp_path, "gene\ts1\ts2\ng1\t1\t2.5\n")
    with pytest.raises(CountMatrixError, match=r":2: column 3"):
        load_counts(p, "A,B")


def test_duplicate_gene_id(tmp_path):
    p = _write(tmp_path, "gene\ts1\ts2\ng1\t1\t2\ng1\t3\t4\n")
    with pytest.raises(CountMatrixError, match="duplicate"):
        load_counts(p, "A,B")


def test_label_count_mismatch(tmp_path):
    p = _write(tmp_path, "gene\ts1\ts2\ts3\ng1\t1\t2\t3\n")
    with pytest.raises(CountMatrixError, match="3 count columns"):
        load_counts(p, "A,B")


def test_ragged_row(tmp_path):
    p = _write(tmp_path, "gene\ts1\ts2\ng1\t1\n")
    with pytest.raises(CountMatrixError, match=r":2: expected 3 fields"):
        load_counts(p, "A,B")


def test_labels_file(tmp_path):
    p = _write(tmp_path, "gene\tx\ty\tz\ng1\t1\t2\t3\n")
    lab = _write(tmp_path, "sample\tcondition\nz\tB\nx\tA\ny\tB\n", "l.tsv")
    assert load_counts(p, lab).condition == ("A", "B", "B")


def test_each_condition_needs_a_sample():
    with pytest.raises(CountMatrixError, match="condition B"):
        CountMatrix(np.ones((2, 2), int), ["a", "b"], ["A", "A"])


def test_bad_label():
    with pytest.raises(CountMatrixError, match="A or B"):
        CountMatrix(np.ones((1, 2), int), ["a"], ["A", "C"])


def test_counts_are_int64_and_read_only():
    cm = _cm(np.array([[1, 2]], dtype=np.int32))
    assert cm.counts.dtype == np.int64
    with pytest.raises(ValueError):
        cm.counts[0, 0] = 5


def test_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    cm = CountMatrix(rng.integers(0, 2**40, (7, 5)), [f"gene{j}" for j in range(7)], list("AABBB"))
    write_counts(cm, tmp_path / "c.tsv")
    write_labels(cm, tmp_path / "l.tsv")
    back = load_counts(tmp_path / "c.tsv", tmp_path / "l.tsv")
    np.testing.assert_array_equal(back.counts, cm.counts)
    assert back.counts.dtype == np.int64 and back.gene_ids == cm.gene_ids
    assert back.condition == cm.condition and back.sample_ids == cm.sample_ids


def test_filter_threshold_arithmetic():
    cm = _cm([[1, 1, 1, 1], [3, 3, 0, 0], [9, 0, 0, 0]])
    kept, removed = filter_low_counts(cm, FilterPolicy(5))
    assert removed == ["g0"]
    assert kept.gene_ids == ("g1", "g2")


def test_filter_zero_threshold_keeps_positive():
    cm = _cm([[1, 1], [2, 3]])
    kept, removed = filter_low_counts(cm, FilterPolicy(0))
    assert removed == [] and kept.m == 2


def test_filter_everything_is_an_error():
    with pytest.raises(CountMatrixError, match="nothing left"):
        filter_low_counts(_cm([[1, 1], [0, 0]]))


def test_filter_idempotent():
    rng = np.random.default_rng(1)
    cm = _cm(rng.poisson(2, (50, 4)))
    once, _ = filter_low_counts(cm)
    twice, removed = filter_low_counts(once)
    assert removed == [] and twice.gene_ids == once.gene_ids


def test_depths_proportional_columns():
    k1 = np.array([3, 10, 40, 7])
    d = estimate_depths(_cm(np.column_stack([k1, 2 * k1])))
    assert d.s[1] / d.s[0] == pytest.approx(2.0, rel=1e-14)


def test_depths_hand_example():
    d = estimate_depths(_cm([[2, 4], [8, 16]]))
    np.testing.assert_allclose(d.s, [1 / math.sqrt(2), math.sqrt(2)], rtol=1e-14)


def test_depths_identical_samples_are_one():
    # every sample is its own reference: each ratio is 1 before and after rescaling
    d = estimate_depths(_cm([[3, 3, 3], [5, 5, 5], [9, 9, 9]]))
    np.testing.assert_array_equal(d.s, [1.0, 1.0, 1.0])


def test_depths_need_a_positive_gene():
    with pytest.raises(CountMatrixError, match="filter"):
        estimate_depths(_cm([[0, 3], [4, 0]]))


def test_depths_ignore_genes_with_zeros():
    base = estimate_depths(_cm([[2, 4], [8, 16]]))
    with_zero = estimate_depths(_cm([[2, 4], [8, 16], [0, 1000]]))
    np.testing.assert_array_equal(base.s, with_zero.s)


@settings(max_examples=40, deadline=None)
@given(arrays(np.int64, st.tuples(st.integers(3, 15), st.integers(2, 6)), elements=st.integers(1, 10_000)), st.randoms())
def test_depths_invariant_to_gene_order(counts, rnd):
    perm = list(range(counts.shape[0]))
    rnd.shuffle(perm)
    a = estimate_depths(_cm(counts)).s
    b = estimate_depths(_cm(counts[perm])).s
    np.testing.assert_allclose(a, b, rtol=1e-12)
    assert np.exp(np.log(a).mean()) == pytest.approx(1.0, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(
    arrays(np.int64, st.integers(3, 12), elements=st.integers(1, 1000)),
    st.integers(2, 5),
    st.integers(2, 7),
)
def test_depths_equivariant_under_column_scaling(col, n, c):
    # proportional columns: scaling one sample by c scales its depth by c relative to the others
    counts = np.column_stack([col * (i + 1) for i in range(n)])
    scaled = counts.copy()
    scaled[:, 0] *= c
    a = estimate_depths(_cm(counts)).s
    b = estimate_depths(_cm(scaled)).s
    np.testing.assert_allclose((b[0] / b[1:]) / (a[0] / a[1:]), c, rtol=1e-12)


def test_depths_file_round_trip(tmp_path):
    d = SamplingDepths(np.array([0.5, 1.0, 2.0]), ("x", "y", "z"))
    write_depths(d, tmp_path / "d.tsv")
    back = read_depths(tmp_path / "d.tsv")
    np.testing.assert_array_equal(back.s, d.s)
    assert back.sample_ids == d.sample_ids


@pytest.mark.parametrize("bad", [0.0, -1.0, np.inf, np.nan])
def test_depths_must_be_positive_finite(bad):
    with pytest.raises(ValueError):
        SamplingDepths(np.array([1.0, bad]))


def test_chain_state_spike_invariant():
    st_ = ChainState(
        lam=np.zeros((2, 2)), mu_a=np.zeros(2), gamma=np.array([0.0, 0.3]), indicator=np.array([0, 1], np.int8),
        alpha=np.zeros((2, 2)), pi=0.5, sigma_gamma_sq=1.0, psi0=0.0, tau_sq=1.0,
    )
    st_.check()
    bad = st_.copy()
    bad.gamma[0] = 0.1
    with pytest.raises(ValueError):
        bad.check()
    assert st_.gamma[0] == 0.0
