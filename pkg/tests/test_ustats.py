import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from invmoments.errors import DomainError
from invmoments.lstats import WLSpec, evaluate_wl
from invmoments.ustats import (
    KernelSpec,
    LUSpec,
    adjust_breakdown,
    exact_u_statistic,
    h_statistic,
    kernel_eval,
    kernel_rows,
    kernel_sample,
    lu_breakdown,
    lu_statistic,
    quasi_bootstrap_indices,
    quasi_bootstrap_u,
)


def _psi_polynomial(xs):
    # symmetrised minimum-degree unbiased kernels written out term by term
    k = len(xs)
    perms = list(itertools.permutations(xs))
    if k == 1:
        return xs[0]
    if k == 2:
        return sum(a * a - a * b for a, b in perms) / len(perms)
    if k == 3:
        return sum(a**3 - 3 * a * a * b + 2 * a * b * c for a, b, c in perms) / len(perms)
    return sum(a**4 - 4 * a**3 * b + 6 * a * a * b * c - 3 * a * b * c * d for a, b, c, d in perms) / len(perms)


def _textbook_unbiased(x, k):
    # exact rational arithmetic on the sample central moments
    x = [Fraction(v) for v in x]
    n = len(x)
    mean = sum(x) / n
    m = {j: sum((v - mean) ** j for v in x) / n for j in (2, 3, 4)}
    if k == 2:
        return m[2] * n / (n - 1)
    if k == 3:
        return m[3] * n * n / ((n - 1) * (n - 2))
    num = n * (n * n - 2 * n + 3) * m[4] - 3 * n * (2 * n - 3) * m[2] ** 2
    return num / ((n - 1) * (n - 2) * (n - 3))


def test_kernel_examples():
    assert kernel_eval(2, (3, 3)) == 0.0
    assert kernel_eval(2, (0, 1)) == 0.5
    for a in (-2.5, 0.0, 7.0):
        assert kernel_eval(3, (a, a, a)) == pytest.approx(0.0, abs=1e-12)
        assert kernel_eval(4, (a, a, a, a)) == pytest.approx(0.0, abs=1e-10)


def test_kernel_arity_and_order():
    with pytest.raises(DomainError):
        kernel_eval(3, (1.0, 2.0))
    with pytest.raises(DomainError):
        KernelSpec(5)
    with pytest.raises(DomainError):
        kernel_rows(2, np.zeros((4, 3)))


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_kernel_matches_polynomial_form(k):
    rng = np.random.default_rng(k)
    for _ in range(20):
        xs = rng.normal(size=k) * 3
        assert kernel_eval(k, xs) == pytest.approx(_psi_polynomial(list(xs)), rel=1e-10, abs=1e-10)


def test_exact_u_examples():
    assert exact_u_statistic([0, 1], 2) == 0.5
    for k in (2, 3, 4):
        assert exact_u_statistic([4.2] * 7, k) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DomainError):
        exact_u_statistic([1.0, 2.0], 3)


def test_exact_u3_matches_h_statistic_normal():
    x = np.random.default_rng(10).normal(size=10)
    assert exact_u_statistic(x, 3) == pytest.approx(float(_textbook_unbiased(x, 3)), abs=1e-10)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_h_statistic_matches_enumeration(k):
    x = np.random.default_rng(20 + k).gamma(2.0, size=40)
    assert h_statistic(x, k) == pytest.approx(exact_u_statistic(x, k), rel=1e-10)


def test_u_statistic_unbiased_by_averaging():
    # average over many small samples approaches the population moment
    rng = np.random.default_rng(4)
    vals = [exact_u_statistic(rng.standard_exponential(6), 4) for _ in range(40000)]
    # Exp(1): mu_4 = 9
    assert np.mean(vals) == pytest.approx(9.0, abs=3 * np.std(vals) / math.sqrt(len(vals)))


def test_quasi_bootstrap_examples():
    assert quasi_bootstrap_u([0, 1, 2], 2, size=10**5) == pytest.approx(1.0, abs=0.01)
    assert quasi_bootstrap_u([0, 1, 2], 2, size=3) == exact_u_statistic([0, 1, 2], 2)
    x = np.random.default_rng(5).normal(size=300)
    a = quasi_bootstrap_u(x, 3, size=4096, seed=9)
    b = quasi_bootstrap_u(x, 3, size=4096, seed=9)
    assert a == b


def test_quasi_bootstrap_approaches_exact():
    x = np.random.default_rng(6).standard_exponential(200)
    exact = exact_u_statistic(x, 2)
    assert quasi_bootstrap_u(x, 2, size=2**14, seed=1) == pytest.approx(exact, rel=0.02)


def test_quasi_bootstrap_indices_distinct_and_uniform():
    idx = quasi_bootstrap_indices(10, 4, 2**15, seed=2)
    assert idx.shape == (2**15, 4)
    assert all(len(set(r)) == 4 for r in idx[:2000].tolist())
    counts = np.bincount(idx.ravel(), minlength=10)
    assert np.allclose(counts / counts.sum(), 0.1, atol=0.005)


def test_kernel_sample_full_enumeration_below_cap():
    x = [1.0, 2.0, 3.0]
    ks = kernel_sample(x, 2, size=100)
    assert list(ks.values) == [0.5, 0.5, 2.0]


def test_lu_examples():
    x = np.random.default_rng(7).normal(size=51)
    lu1 = LUSpec(KernelSpec(1), WLSpec("median"))
    assert lu_statistic(x, lu1) == pytest.approx(float(np.median(x)))
    lu2 = LUSpec(KernelSpec(2), WLSpec("median"))
    assert lu_statistic([1, 2, 3], lu2) == 0.5
    plain = LUSpec(KernelSpec(2), WLSpec("tm", epsilon=0))
    y = np.random.default_rng(8).normal(size=500)
    assert lu_statistic(y, plain, size=2**16) == pytest.approx(exact_u_statistic(y, 2), rel=0.01)


def test_lu_for_target_adjusts_breakdown():
    lu = LUSpec.for_target(2, "tm:eps=1/24")
    assert lu.epsilon0 == Fraction(47, 576)
    assert lu.breakdown == Fraction(1, 24)


def test_adjust_breakdown_constants():
    e = Fraction(1, 24)
    assert adjust_breakdown(e, 1) == e
    assert adjust_breakdown(e, 2) == Fraction(47, 576)
    assert adjust_breakdown(e, 3) == Fraction(1657, 13824)
    assert adjust_breakdown(e, 4) == Fraction(51935, 331776)
    assert adjust_breakdown("1/24", 2) == Fraction(47, 576)
    with pytest.raises(DomainError):
        adjust_breakdown(1, 2)


def test_lu_breakdown_falls_back_to_float():
    val = lu_breakdown(Fraction(1, 10), 2)
    assert isinstance(val, float)
    assert val == pytest.approx(1 - math.sqrt(0.9))


@settings(max_examples=100, deadline=None)
@given(st.fractions(min_value=0, max_value=Fraction(99, 100), max_denominator=1000), st.integers(1, 4))
def test_breakdown_round_trip_exact(eps, k):
    e0 = adjust_breakdown(eps, k)
    assert isinstance(e0, Fraction)
    assert lu_breakdown(e0, k) == eps


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.lists(st.floats(-10, 10), min_size=4, max_size=4),
       st.floats(0.1, 10), st.floats(-10, 10))
def test_kernel_scale_and_translation(k, xs, a, b):
    xs = np.asarray(xs[:k])
    base = kernel_eval(k, xs)
    tol = 1e-9 * (1 + np.max(np.abs(xs)) + abs(b)) ** k * max(a, 1) ** k
    assert kernel_eval(k, a * xs) == pytest.approx(a**k * base, abs=tol)
    if k >= 2:
        assert kernel_eval(k, xs + b) == pytest.approx(base, abs=tol)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 4), st.lists(st.floats(-10, 10), min_size=4, max_size=4), st.permutations(range(4)))
def test_kernel_symmetric(k, xs, perm):
    xs = np.asarray(xs[:k])
    order = [i for i in perm if i < k]
    assert kernel_eval(k, xs[order]) == pytest.approx(kernel_eval(k, xs), abs=1e-9 * (1 + np.max(np.abs(xs))) ** k)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(-50, 50), min_size=4, max_size=12), st.integers(2, 4))
def test_exact_u_matches_textbook_rationals(values, k):
    expect = float(_textbook_unbiased(values, k))
    got = exact_u_statistic(np.asarray(values, dtype=float), k)
    assert got == pytest.approx(expect, abs=1e-10 * max(1.0, abs(expect)))


def test_lu_wl_on_kernel_sample_is_evaluate_wl():
    x = np.random.default_rng(9).normal(size=400)
    lu = LUSpec.for_target(3, "tm:eps=1/24")
    ks = kernel_sample(x, 3, size=2**14, seed=4)
    assert lu_statistic(x, lu, size=2**14, seed=4) == evaluate_wl(ks, lu.wl)
