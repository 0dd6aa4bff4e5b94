import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from segaug import _kernels
from segaug.selfcheck import wilcoxon_bruteforce_p
from segaug.stats import average_ranks, summarize, wilcoxon_signed_rank


def test_identical_samples_are_degenerate():
    r = wilcoxon_signed_rank([0.3, 0.5, 0.7], [0.3, 0.5, 0.7])
    assert r.W == 0 and r.p_two_sided == 1.0 and r.method == "degenerate"


def test_all_negative_differences_n6():
    a = np.arange(6, dtype=float)
    b = a + np.array([1, 2, 3, 4, 5, 6], dtype=float)
    r = wilcoxon_signed_rank(a, b)
    assert r.W == 0 and r.n == 6
    assert r.p_two_sided == pytest.approx(2 / 2**6, abs=1e-15)


def test_exact_matches_bruteforce_for_small_n():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = int(rng.integers(1, 11))
        a = np.round(rng.standard_normal(n), 1)
        b = np.round(rng.standard_normal(n), 1)
        if np.all(a == b):
            continue
        got = wilcoxon_signed_rank(a, b, method="exact").p_two_sided
        assert abs(got - wilcoxon_bruteforce_p(a - b)) <= 1e-12


def test_length_mismatch():
    with pytest.raises(ValueError):
        wilcoxon_signed_rank([1, 2], [1])


def test_average_ranks_ties():
    np.testing.assert_array_equal(average_ranks([3.0, 1.0, 3.0, 2.0]), [3.5, 1.0, 3.5, 2.0])


pair = st.integers(2, 15).flatmap(
    lambda n: st.tuples(
        arrays(np.float64, n, elements=st.floats(0, 1, allow_nan=False)),
        arrays(np.float64, n, elements=st.floats(0, 1, allow_nan=False)),
    )
)


@settings(max_examples=60, deadline=None)
@given(pair, st.floats(0.5, 3.0), st.floats(-2, 2))
def test_p_invariant_under_common_affine_shift(ab, scale, shift):
    a, b = np.round(ab[0] * 64) / 64, np.round(ab[1] * 64) / 64
    r1 = wilcoxon_signed_rank(a, b)
    # exact binary fractions keep the differences' zero/tie pattern intact
    s = 2.0 ** np.round(np.log2(scale))
    r2 = wilcoxon_signed_rank(a * s + np.round(shift), b * s + np.round(shift))
    assert r1.p_two_sided == pytest.approx(r2.p_two_sided, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(pair)
def test_swap_symmetry(ab):
    a, b = ab
    r1, r2 = wilcoxon_signed_rank(a, b), wilcoxon_signed_rank(b, a)
    assert r1.p_two_sided == pytest.approx(r2.p_two_sided, abs=1e-12)
    assert (r1.w_plus, r1.w_minus) == (r2.w_minus, r2.w_plus)


def test_exact_and_normal_agree_at_n20():
    rng = np.random.default_rng(3)
    for _ in range(20):
        a, b = rng.standard_normal(20), rng.standard_normal(20)
        e = wilcoxon_signed_rank(a, b, method="exact").p_two_sided
        n = wilcoxon_signed_rank(a, b, method="approx").p_two_sided
        assert abs(e - n) <= 0.01


def test_auto_switches_to_approx_above_20():
    rng = np.random.default_rng(4)
    assert wilcoxon_signed_rank(rng.standard_normal(21), rng.standard_normal(21)).method == "approx"
    assert wilcoxon_signed_rank(rng.standard_normal(20), rng.standard_normal(20)).method == "exact"


def test_p_in_unit_interval():
    rng = np.random.default_rng(5)
    for n in (1, 3, 12, 30):
        p = wilcoxon_signed_rank(rng.standard_normal(n), rng.standard_normal(n)).p_two_sided
        assert 0 < p <= 1


def test_summarize_examples():
    assert summarize([0.4]) == (0.4, 0.0)
    assert summarize([1, 2, 3]) == (2.0, 1.0)
    assert summarize([0.7] * 5) == (pytest.approx(0.7), 0.0)
    with pytest.raises(ValueError):
        summarize([])


@settings(max_examples=30, deadline=None)
@given(arrays(np.int64, st.integers(1, 14), elements=st.integers(1, 30)), st.integers(0, 200))
def test_sign_count_backends_agree(ranks2, threshold):
    ref = _kernels._count_le_numpy(ranks2, threshold)
    assert _kernels.count_sign_assignments(ranks2, threshold) == ref
    if _kernels._HAVE_NUMBA:
        assert _kernels._count_le_nb(ranks2, threshold) == ref
