"""Central-moment kernels in symbolic and numeric form.

The kernel of order k is the symmetrisation of

    k=1: x1
    k=2: x1^2 - x1 x2
    k=3: x1^3 - 3 x1^2 x2 + 2 x1 x2 x3
    k=4: x1^4 - 4 x1^3 x2 + 6 x1^2 x2 x3 - 3 x1 x2 x3 x4

Its expectation over i.i.d. arguments is the k-th central moment.  The
symbolic form is used to get the variance of the kernel distribution from
population moments; the numeric form works on tuple-centred arguments,
where the kernels reduce to short power-sum expressions.
"""

from fractions import Fraction
from functools import lru_cache
from itertools import permutations
from math import factorial

import numpy as np

_BASE_TERMS = {
    1: {(1,): 1},
    2: {(2, 0): 1, (1, 1): -1},
    3: {(3, 0, 0): 1, (2, 1, 0): -3, (1, 1, 1): 2},
    4: {(4, 0, 0, 0): 1, (3, 1, 0, 0): -4, (2, 1, 1, 0): 6, (1, 1, 1, 1): -3},
}

ORDERS = (1, 2, 3, 4)


@lru_cache(maxsize=None)
def kernel_polynomial(order):
    """Symmetrised kernel as ``{exponents: coefficient}`` with exact rationals."""
    base = _BASE_TERMS[order]
    poly = {}
    nperm = factorial(order)
    for exps, coef in base.items():
        for perm in permutations(range(order)):
            key = tuple(exps[perm[i]] for i in range(order))
            poly[key] = poly.get(key, Fraction(0)) + Fraction(coef, nperm)
    return {k: v for k, v in poly.items() if v != 0}


@lru_cache(maxsize=None)
def squared_kernel_polynomial(order):
    poly = kernel_polynomial(order)
    out = {}
    for e1, c1 in poly.items():
        for e2, c2 in poly.items():
            key = tuple(a + b for a, b in zip(e1, e2))
            out[key] = out.get(key, Fraction(0)) + c1 * c2
    return {k: v for k, v in out.items() if v != 0}


def expect_polynomial(poly, central):
    """E[poly(X1..Xk)] for i.i.d. centred X with ``central[j] = E[X^j]``."""
    total = 0.0
    for exps, coef in poly.items():
        term = float(coef)
        for e in exps:
            term *= central[e]
            if term == 0.0:
                break
        total += term
    return total


def kernel_variance(order, central):
    """Variance of the order-k kernel distribution from central moments up to 2k."""
    if order == 1:
        return central[2]
    second = expect_polynomial(squared_kernel_polynomial(order), central)
    return second - central[order] ** 2


def evaluate_kernel_rows(rows):
    """Evaluate the kernel on each row of an ``(m, k)`` array."""
    rows = np.asarray(rows, dtype=float)
    order = rows.shape[1]
    if order == 1:
        return rows[:, 0].copy()
    y = rows - rows.mean(axis=1, keepdims=True)
    if order == 2:
        return np.einsum("ij,ij->i", y, y)
    y2 = y * y
    if order == 3:
        return 1.5 * np.einsum("ij,ij->i", y2, y)
    if order == 4:
        p2 = y2.sum(axis=1)
        p4 = np.einsum("ij,ij->i", y2, y2)
        return (11.0 / 6.0) * p4 - 0.625 * p2 * p2
    raise ValueError(f"unsupported kernel order {order}")


def evaluate_kernel_columns(cols):
    """Same as :func:`evaluate_kernel_rows` for a tuple of k equal-length arrays.

    Avoids building the ``(m, k)`` matrix for large quasi samples.
    """
    order = len(cols)
    if order == 1:
        return np.array(cols[0], dtype=float, copy=True)
    mean = sum(cols) / order
    ys = [c - mean for c in cols]
    p2 = sum(y * y for y in ys)
    if order == 2:
        return p2
    if order == 3:
        return 1.5 * sum(y * y * y for y in ys)
    if order == 4:
        p4 = sum((y * y) * (y * y) for y in ys)
        return (11.0 / 6.0) * p4 - 0.625 * p2 * p2
    raise ValueError(f"unsupported kernel order {order}")
