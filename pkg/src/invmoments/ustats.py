"""Central-moment kernels, U-statistics, LU-statistics and breakdown arithmetic.

An LU-statistic applies a weighted L-statistic to the sorted evaluations of
a symmetric kernel over index tuples of the sample.  When the number of
tuples ``C(n, k)`` exceeds the materialisation cap, the tuples come from a
quasi-bootstrap: scrambled Sobol points mapped onto tuples of distinct
indices of the *sorted* sample, so that the low-discrepancy structure acts
on ranks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations, islice

import numpy as np

from . import _kernels
from . import distributions as dist
from .errors import DomainError
from .lstats import WLSpec, as_sample, evaluate_wl, quasi_uniform, Sample, MODE_INTERP

DEFAULT_BS_SIZE = 2**16
_CHUNK = 1 << 18


@dataclass(frozen=True)
class KernelSpec:
    """Symmetric central-moment kernel of degree ``order`` (1 to 4)."""

    order: int

    def __post_init__(self):
        if self.order not in _kernels.ORDERS:
            raise DomainError(f"kernel order must be one of {_kernels.ORDERS}, got {self.order}")

    def __call__(self, *xs):
        return kernel_eval(self, xs)


def _order(k):
    return k.order if isinstance(k, KernelSpec) else KernelSpec(int(k)).order


def kernel_eval(k, xs):
    """Evaluate the kernel on one argument tuple.

    >>> kernel_eval(2, (0.0, 1.0))
    0.5
    """
    order = _order(k)
    xs = np.asarray(xs, dtype=float).ravel()
    if xs.size != order:
        raise DomainError(f"kernel of order {order} needs {order} arguments, got {xs.size}")
    return float(_kernels.evaluate_kernel_rows(xs[None, :])[0])


def kernel_rows(k, rows):
    """Evaluate the kernel on each row of an ``(m, k)`` array."""
    order = _order(k)
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[1] != order:
        raise DomainError(f"expected an (m, {order}) array")
    return _kernels.evaluate_kernel_rows(rows)


def _combination_chunks(n, k, chunk=_CHUNK):
    if k == 1:
        yield np.arange(n)[:, None]
        return
    if k == 2:
        i, j = np.triu_indices(n, 1)
        for start in range(0, i.size, chunk):
            yield np.stack([i[start:start + chunk], j[start:start + chunk]], axis=1)
        return
    it = combinations(range(n), k)
    while True:
        flat = np.fromiter(
            (v for combo in islice(it, chunk) for v in combo), dtype=np.int64
        )
        if flat.size == 0:
            return
        yield flat.reshape(-1, k)


def _centred(s):
    x = s.values
    # kernels of order >= 2 are translation invariant; centring keeps the
    # power sums well conditioned
    return x - x.mean()


def exact_u_statistic(s, k):
    """Average of the kernel over all ``C(n, k)`` index subsets.

    For order 2 this is the unbiased sample variance.
    """
    s = as_sample(s)
    order = _order(k)
    if s.n < order:
        raise DomainError(f"U-statistic of order {order} needs n >= {order}, got {s.n}")
    x = _centred(s) if order > 1 else s.values
    total = 0
    partial = []
    for idx in _combination_chunks(s.n, order):
        vals = _kernels.evaluate_kernel_rows(x[idx])
        partial.append(float(np.sum(vals)))
        total += idx.shape[0]
    return math.fsum(partial) / total


def quasi_bootstrap_indices(n, order, size, seed=0):
    """``size`` tuples of ``order`` distinct indices in ``range(n)``.

    Coordinate ``m`` of a scrambled Sobol point selects among the ``n - m``
    indices not yet taken (a partial Fisher-Yates shuffle driven by the
    point), so every ordered tuple of distinct indices is equally likely.
    """
    if n < order:
        raise DomainError(f"need n >= {order} to draw distinct {order}-tuples, got {n}")
    u = quasi_uniform(int(size), order, seed)
    out = np.empty((u.shape[0], order), dtype=np.int64)
    chosen = np.empty((u.shape[0], 0), dtype=np.int64)
    for m in range(order):
        j = np.minimum((u[:, m] * (n - m)).astype(np.int64), n - m - 1)
        for t in range(m):
            j += j >= chosen[:, t]
        out[:, m] = j
        chosen = np.sort(np.concatenate([chosen, j[:, None]], axis=1), axis=1)
    return out


def kernel_sample(s, k, size=DEFAULT_BS_SIZE, seed=0):
    """Sorted kernel evaluations: every subset when ``C(n, k) <= size``,
    otherwise ``size`` quasi-bootstrap tuples.

    Returns
    -------
    Sample
    """
    s = as_sample(s)
    order = _order(k)
    if s.n < order:
        raise DomainError(f"kernel of order {order} needs n >= {order}, got {s.n}")
    if order == 1:
        return s
    x = _centred(s)
    if math.comb(s.n, order) <= size:
        vals = np.concatenate([_kernels.evaluate_kernel_rows(x[idx])
                               for idx in _combination_chunks(s.n, order)])
    else:
        idx = quasi_bootstrap_indices(s.n, order, size, seed)
        vals = _kernels.evaluate_kernel_columns(tuple(x[idx[:, m]] for m in range(order)))
    return Sample(vals)


def quasi_bootstrap_u(s, k, size=DEFAULT_BS_SIZE, seed=0):
    """Quasi-bootstrap approximation of :func:`exact_u_statistic`.

    Falls back to full enumeration when ``size >= C(n, k)``.
    """
    s = as_sample(s)
    order = _order(k)
    if size < 1:
        raise DomainError("bootstrap size must be >= 1")
    ks = kernel_sample(s, order, size, seed)
    return float(np.mean(ks.values)) if order > 1 else float(np.mean(s.values))


def kernel_quasi_sample(spec, k, n=2**20, seed=0):
    """Low-discrepancy sample of the kernel distribution of ``spec``.

    Used for asymptotic (population) values of LU-statistics.
    """
    order = _order(k)
    u = quasi_uniform(n, order, seed)
    cols = tuple(dist.quantile(spec, u[:, m]) for m in range(order))
    if order > 1:
        centre = dist.quantile(spec, 0.5)
        cols = tuple(c - centre for c in cols)
    return Sample(_kernels.evaluate_kernel_columns(cols))


# ---------------------------------------------------------------------------
# breakdown arithmetic


def _as_fraction(e):
    if isinstance(e, Fraction):
        return e
    if isinstance(e, int):
        return Fraction(e)
    if isinstance(e, str):
        return Fraction(e.strip())
    return Fraction(e).limit_denominator(10**9)


def adjust_breakdown(epsilon_target, order):
    """L-stage breakdown ``1 - (1 - eps)^k`` giving overall breakdown ``eps``.

    >>> adjust_breakdown(Fraction(1, 24), 2)
    Fraction(47, 576)
    """
    e = _as_fraction(epsilon_target)
    if not 0 <= e < 1:
        raise DomainError(f"breakdown must be in [0, 1), got {e}")
    return 1 - (1 - e) ** int(order)


def _rational_root(q, k):
    def iroot(m):
        r = round(m ** (1.0 / k))
        for c in (r - 1, r, r + 1):
            if c >= 0 and c**k == m:
                return c
        return None

    num, den = iroot(q.numerator), iroot(q.denominator)
    if num is None or den is None:
        return None
    return Fraction(num, den)


def lu_breakdown(epsilon0, order):
    """Upper breakdown ``1 - (1 - eps0)^(1/k)`` of an LU-statistic.

    Exact when ``1 - eps0`` is a perfect k-th power of a rational, float otherwise.
    """
    e = _as_fraction(epsilon0)
    if not 0 <= e < 1:
        raise DomainError(f"breakdown must be in [0, 1), got {e}")
    root = _rational_root(1 - e, int(order))
    if root is not None:
        return 1 - root
    return 1.0 - float(1 - e) ** (1.0 / int(order))


@dataclass(frozen=True)
class LUSpec:
    """A kernel together with the WL applied to its evaluations.

    ``wl.epsilon`` is the L-stage breakdown ``epsilon0``.  Build with
    :meth:`for_target` to derive it from the desired overall breakdown.
    """

    kernel: KernelSpec
    wl: WLSpec

    @classmethod
    def for_target(cls, order, wl):
        """LU whose overall breakdown equals ``wl.epsilon``."""
        wl = WLSpec.parse(wl)
        kernel = KernelSpec(int(order))
        if wl.epsilon:
            wl = wl.with_epsilon(adjust_breakdown(wl.epsilon, kernel.order))
        return cls(kernel, wl)

    @property
    def order(self):
        return self.kernel.order

    @property
    def epsilon0(self):
        return self.wl.epsilon

    @property
    def breakdown(self):
        return lu_breakdown(self.wl.epsilon, self.order)


def lu_statistic(s, lu, size=DEFAULT_BS_SIZE, seed=0, scheme=MODE_INTERP):
    """Evaluate the LU-statistic ``lu`` on sample ``s``."""
    ks = kernel_sample(s, lu.kernel, size, seed)
    return evaluate_wl(ks, lu.wl, scheme)


def h_statistic(s, order):
    """Unbiased central-moment estimator from sample central moments.

    Equal to :func:`exact_u_statistic` but O(n).  Orders 1 to 4.
    """
    s = as_sample(s)
    order = _order(order)
    n = s.n
    if n < order:
        raise DomainError(f"order {order} needs n >= {order}, got {n}")
    x = s.values
    if order == 1:
        return float(np.mean(x))
    y = x - x.mean()
    m2 = float(np.mean(y * y))
    if order == 2:
        return m2 * n / (n - 1)
    if order == 3:
        return float(np.mean(y**3)) * n * n / ((n - 1) * (n - 2))
    m4 = float(np.mean(y**4))
    return (n * (n * n - 2 * n + 3) * m4 - 3 * n * (2 * n - 3) * m2 * m2) / (
        (n - 1) * (n - 2) * (n - 3)
    )
