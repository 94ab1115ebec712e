"""Recombined and quantile I-statistics, standardized moments and the
fixed-point shape determination.

The recombined statistic corrects a robust location-type estimate by
extrapolating along the difference of two LU-statistics; the quantile
statistic shifts the percentile of a single LU-statistic away from the
pivot ``gamma / (1 + gamma)``.  Both are exact for the consistent
distribution the d value was calibrated on.

For a shape-scale consistent distribution the d value depends on the
kurtosis (or skewness) of the data, which is itself estimated by iterating
the standardized moment through a d lookup table until it reproduces its
input.

Examples
--------
>>> recombined(2.0, 1.0, 0.5)
2.5
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConvergenceError,
    DomainError,
    InvariantMomentsError,
)
from .lstats import (
    MODE_INTERP,
    WLSpec,
    as_sample,
    empirical_cdf_value,
    evaluate_wl,
    sample_quantile,
)
from .ustats import DEFAULT_BS_SIZE, LUSpec, kernel_sample

RM = "rm"
QM = "qm"
ETYPES = (RM, QM)
KURTOSIS = "kurtosis"
ABS_SKEWNESS = "abs_skewness"

#: default WL pair, expressed as the overall breakdown target
DEFAULT_WL1 = WLSpec.parse("tm:eps=1/24")
DEFAULT_WL2 = WLSpec("median")


def canonical_etype(etype):
    e = str(etype).lower()
    e = {"rkurt": RM, "rskew": RM, "recombined": RM, "qkurt": QM, "qskew": QM, "quantile": QM}.get(e, e)
    if e not in ETYPES:
        raise DomainError(f"estimator type must be 'rm' or 'qm', got {etype!r}")
    return e


def gamma_median(gamma):
    """The WL at the pivot ``gamma / (1 + gamma)`` (the median when gamma is 1)."""
    if gamma == 1:
        return WLSpec("median")
    g = float(gamma)
    return WLSpec("qp", p=g / (1.0 + g))


# ---------------------------------------------------------------------------
# closed forms


def recombined(lu1_value, lu2_value, d):
    """Recombined I-statistic ``(d + 1) * lu1 - d * lu2``.

    This is the limit as ``c -> inf`` of ``(lu1 + c)^(d+1) / (lu2 + c)^d - c``.
    """
    return (d + 1.0) * lu1_value - d * lu2_value


def shifted_percentile(p0, d, pivot):
    """Percentile moved away from ``pivot`` by the fraction ``d``."""
    if p0 >= pivot:
        return (p0 - pivot) * d + p0
    return p0 - (pivot - p0) * d


# ---------------------------------------------------------------------------
# per-sample cache of kernel samples and LU values


class KernelCache:
    """Kernel evaluations and LU values of one sample, computed once.

    The fixed-point iterations evaluate the same LU-statistics with many
    d values; caching them turns each iteration into plain arithmetic.

    Parameters
    ----------
    s : Sample or array_like
    size : int
        Quasi-bootstrap size (exact enumeration when ``C(n, k) <= size``).
    seed : int
        Scrambling seed of the quasi-bootstrap.
    scheme : {"mode", "hf"}
    """

    def __init__(self, s, size=DEFAULT_BS_SIZE, seed=0, scheme=MODE_INTERP):
        self.sample = as_sample(s)
        self.size = int(size)
        self.seed = seed
        self.scheme = scheme
        self._kernels = {}
        self._values = {}

    def kernel(self, order):
        ks = self._kernels.get(order)
        if ks is None:
            ks = kernel_sample(self.sample, order, self.size, self.seed)
            self._kernels[order] = ks
        return ks

    def wl(self, order, w):
        """L-stage WL ``w`` (breakdown already adjusted) on the kernel sample."""
        key = (order, w)
        val = self._values.get(key)
        if val is None:
            val = evaluate_wl(self.kernel(order), w, self.scheme)
            self._values[key] = val
        return val

    def lu(self, lu):
        return self.wl(lu.order, lu.wl)

    def mirrored(self):
        """Cache of the mirrored sample (same bootstrap settings), memoised."""
        m = getattr(self, "_mirror", None)
        if m is None:
            m = KernelCache(self.sample.mirrored(), self.size, self.seed, self.scheme)
            self._mirror = m
        return m


def _cache(s, cache, size, seed, scheme):
    if cache is not None:
        return cache
    return KernelCache(s, size, seed, scheme)


# ---------------------------------------------------------------------------
# quantile statistic


@dataclass(frozen=True)
class QIConfig:
    """Quantile I-statistic configuration.

    ``epsilon`` and ``gamma`` bound the clamping window
    ``[gamma * epsilon, 1 - epsilon]`` on the kernel-sample percentile; by
    default they are the L-stage values of ``lu.wl``.
    """

    d: float
    lu: LUSpec
    gamma: float | None = None
    epsilon: float | None = None
    scheme: str = MODE_INTERP

    @property
    def window(self):
        g = float(self.lu.wl.gamma if self.gamma is None else self.gamma)
        e = float(self.lu.wl.epsilon if self.epsilon is None else self.epsilon)
        return g * e, 1.0 - e

    @property
    def pivot(self):
        g = float(self.lu.wl.gamma if self.gamma is None else self.gamma)
        return g / (1.0 + g)


@dataclass(frozen=True)
class QIResult:
    value: float
    percentile: float
    raw_percentile: float
    clamped: bool


def quantile_statistic(s, cfg, size=DEFAULT_BS_SIZE, seed=0, *, cache=None, full_output=False):
    """Quantile I-statistic of ``s``.

    The LU value is mapped to its percentile ``p0`` in the kernel sample,
    moved away from the pivot by ``d``, clamped into the window and read
    back with the sample quantile function.

    Returns
    -------
    float, or QIResult when ``full_output`` is true
    """
    c = _cache(s, cache, size, seed, cfg.scheme)
    ks = c.kernel(cfg.lu.order)
    value = c.lu(cfg.lu)
    p0, outside = empirical_cdf_value(ks, value, cfg.scheme, full_output=True)
    if outside:
        raise InvariantMomentsError("LU value outside the range of its kernel sample")
    p = shifted_percentile(p0, cfg.d, cfg.pivot)
    lo, hi = cfg.window
    clamped = bool(p > hi or p < lo)
    p_used = min(max(p, lo), hi)
    q = sample_quantile(ks, p_used, cfg.scheme)
    if full_output:
        return QIResult(q, p_used, p, clamped)
    return q


# ---------------------------------------------------------------------------
# moment estimators


def _lu(order, wl):
    return LUSpec.for_target(order, WLSpec.parse(wl))


def rkm(s, order, d, wl1=DEFAULT_WL1, wl2=DEFAULT_WL2, size=DEFAULT_BS_SIZE, seed=0,
        scheme=MODE_INTERP, *, cache=None):
    """Recombined central moment of order ``order`` (the mean for order 1).

    ``wl1`` and ``wl2`` carry the *overall* breakdown target; the L-stage
    breakdown is adjusted to ``1 - (1 - eps)^k``.
    """
    c = _cache(s, cache, size, seed, scheme)
    return recombined(c.lu(_lu(order, wl1)), c.lu(_lu(order, wl2)), d)


def qkm(s, order, d, wl=DEFAULT_WL1, gamma=None, epsilon=None, size=DEFAULT_BS_SIZE, seed=0,
        scheme=MODE_INTERP, *, cache=None, full_output=False):
    """Quantile central moment of order ``order`` (the mean for order 1).

    ``epsilon`` is the overall breakdown target of the clamping window
    (default: that of ``wl``) and is adjusted like the WL breakdown.
    """
    lu = _lu(order, wl)
    eps0 = None if epsilon is None else LUSpec.for_target(order, lu.wl.with_epsilon(epsilon)).epsilon0
    cfg = QIConfig(d, lu, gamma, eps0, scheme)
    c = _cache(s, cache, size, seed, scheme)
    return quantile_statistic(c.sample, cfg, cache=c, full_output=full_output)


def ikm_value(s, order, d, etype, wl1=DEFAULT_WL1, wl2=DEFAULT_WL2, *, cache, full_output=False):
    """Dispatch to :func:`rkm` or :func:`qkm`; ``wl2`` is unused for ``qm``."""
    if canonical_etype(etype) == RM:
        v = rkm(cache.sample, order, d, wl1, wl2, cache=cache)
        return (v, False) if full_output else v
    r = qkm(cache.sample, order, d, wl1, cache=cache, full_output=True)
    return (r.value, r.clamped) if full_output else r.value


def standardized_moment(numerator, variance, order):
    """``numerator / variance^(order/2)``, the recombined or quantile
    standardized moment.

    Raises
    ------
    DomainError
        If the variance estimate is not positive.
    """
    if not variance > 0:
        raise DomainError(f"standardization needs a positive variance estimate, got {variance}")
    return numerator / variance ** (order / 2.0)


# ---------------------------------------------------------------------------
# fixed point


@dataclass(frozen=True)
class FixedPointConfig:
    """Stopping rule of the fixed-point iteration.

    ``initial=None`` starts at the largest key of the d table.
    """

    maxit: int = 100
    delta: float = 1e-4
    initial: float | None = None

    def __post_init__(self):
        if int(self.maxit) < 1:
            raise DomainError(f"maxit must be >= 1, got {self.maxit}")
        if not self.delta > 0:
            raise DomainError(f"delta must be > 0, got {self.delta}")


@dataclass
class FixedPointResult:
    """Outcome of a fixed-point iteration.

    ``boundary`` tells whether the final iterate was computed with d values
    clamped at the edge of the table domain.
    """

    value: float
    iterations: int
    converged: bool
    boundary: bool
    trace: list = field(default_factory=list)


def iterate_fixed_point(fun, start, cfg):
    """Iterate ``x <- fun(x)`` from ``fun(start)``.

    ``fun`` returns ``(value, hit_boundary)``.  Stops when two successive
    iterates differ by less than ``cfg.delta`` or after ``cfg.maxit``
    repeats.
    """
    trace = [float(start)]

    def step(x):
        try:
            val, edge = fun(x)
        except (ArithmeticError, DomainError) as exc:
            raise ConvergenceError(f"iteration failed at x={x}: {exc}", trace) from exc
        if not math.isfinite(val):
            raise ConvergenceError(f"non-finite iterate from x={x}", trace)
        trace.append(float(val))
        return val, edge

    x, edge = step(start)
    i = 0
    converged = False
    while True:
        i += 1
        prev = x
        x, edge = step(prev)
        if abs(x - prev) < cfg.delta:
            converged = True
            break
        if i > cfg.maxit:
            break
    return FixedPointResult(float(x), i, converged, bool(edge), trace)


def _table_for(tables, etype, order, key_kind):
    if hasattr(tables, "lookup"):
        return tables.lookup(etype, order, key_kind)
    try:
        return tables[order]
    except (KeyError, TypeError):
        raise DomainError(f"no d table for order {order}") from None


def _start(cfg, table):
    if table.size == 0:
        raise DomainError("empty d table")
    return table.key_max if cfg.initial is None else float(cfg.initial)


def _pair(wls, order):
    if wls is None:
        return DEFAULT_WL1, DEFAULT_WL2
    pair = wls[order] if isinstance(wls, dict) else wls
    return WLSpec.parse(pair[0]), WLSpec.parse(pair[1])


def kurtosis_map(cache, tables, etype=RM, wls=None):
    """The map ``x -> m4(D(x, 4)) / m2(D(x, 2))^2`` for one sample.

    Returns a callable giving ``(value, clamped)``.
    """
    etype = canonical_etype(etype)
    t2 = _table_for(tables, etype, 2, KURTOSIS)
    t4 = _table_for(tables, etype, 4, KURTOSIS)
    w2, w4 = _pair(wls, 2), _pair(wls, 4)

    def kappa(x):
        d2, c2 = t2.interpolate(x, full_output=True)
        d4, c4 = t4.interpolate(x, full_output=True)
        v = ikm_value(None, 2, d2, etype, *w2, cache=cache)
        f = ikm_value(None, 4, d4, etype, *w4, cache=cache)
        return standardized_moment(f, v, 4), c2 or c4

    return kappa, t4


def skewness_map(cache, tables, etype=RM, wls=None):
    """The map ``s -> |m3(D(s, 3)) / m2(D(s, 2))^1.5|`` for one sample."""
    etype = canonical_etype(etype)
    t2 = _table_for(tables, etype, 2, ABS_SKEWNESS)
    t3 = _table_for(tables, etype, 3, ABS_SKEWNESS)
    w2, w3 = _pair(wls, 2), _pair(wls, 3)

    def sigma(x):
        d2, c2 = t2.interpolate(x, full_output=True)
        d3, c3 = t3.interpolate(x, full_output=True)
        v = ikm_value(None, 2, d2, etype, *w2, cache=cache)
        t = ikm_value(None, 3, d3, etype, *w3, cache=cache)
        return abs(standardized_moment(t, v, 3)), c2 or c3

    return sigma, t3


def fixed_point_kurt(s, tables, cfg=FixedPointConfig(), etype=RM, wls=None,
                     size=DEFAULT_BS_SIZE, seed=0, scheme=MODE_INTERP, *, cache=None):
    """Kurtosis as the fixed point of the d-calibrated standardized fourth moment.

    Parameters
    ----------
    s : Sample or array_like
    tables : TableSet or mapping ``{order: DTable}``
        Kurtosis-keyed d tables for orders 2 and 4.
    cfg : FixedPointConfig
    etype : {"rm", "qm"}
    wls : (WLSpec, WLSpec) or mapping ``{order: (wl1, wl2)}``, optional
        WL pairs the tables were built with (overall breakdown targets).

    Returns
    -------
    FixedPointResult
    """
    c = _cache(s, cache, size, seed, scheme)
    fun, table = kurtosis_map(c, tables, etype, wls)
    return iterate_fixed_point(fun, _start(cfg, table), cfg)


def fixed_point_skew(s, tables, cfg=FixedPointConfig(), etype=RM, wls=None,
                     size=DEFAULT_BS_SIZE, seed=0, scheme=MODE_INTERP, *, cache=None):
    """Absolute skewness as the fixed point of the d-calibrated standardized
    third moment, using |skewness|-keyed tables for orders 2 and 3.

    The sample is expected to be right-skewed; see :func:`estimate` for the
    mirroring of left-skewed data.
    """
    c = _cache(s, cache, size, seed, scheme)
    fun, table = skewness_map(c, tables, etype, wls)
    return iterate_fixed_point(fun, _start(cfg, table), cfg)


# ---------------------------------------------------------------------------
# RMSE-optimal combination selection


@dataclass(frozen=True)
class IkmResult:
    estimate: float
    combo: int
    key: float
    d_key: float
    vkurt: tuple
    excluded: tuple
    fixed_point: FixedPointResult


def _combo_kurtosis(cache, itable, combo, etype, x):
    """Kurtosis estimate of one combination with its d values at key ``x``."""
    (d2, d4), edge = itable.d_values(combo, etype, x)
    wl4, wl2 = itable.combos[combo]
    w2 = (wl2, gamma_median(wl2.gamma))
    w4 = (wl4, gamma_median(wl4.gamma))
    v, cl2 = ikm_value(None, 2, d2, etype, *w2, cache=cache, full_output=True)
    f, cl4 = ikm_value(None, 4, d4, etype, *w4, cache=cache, full_output=True)
    return standardized_moment(f, v, 4), edge, cl2 or cl4


def ikm_select(s, itable, cfg=FixedPointConfig(), size=DEFAULT_BS_SIZE, seed=0,
               scheme=MODE_INTERP, *, cache=None):
    """Kurtosis from the RMSE-optimal combination of an I table.

    Each combination (and estimator type) yields its own fixed-point
    kurtosis; those whose quantile percentiles had to be clamped are
    excluded, and the rest form the vector ``Vkurt``.  The selection itself
    is a fixed point over the I table: at key ``x`` the estimate is the
    linear interpolation, between the two grid rows around ``x``, of the
    estimates of the combinations chosen at those rows.

    Returns
    -------
    IkmResult
        ``d_key`` is the selected kurtosis clamped into the 1/5 to 4/5
        quantile range of ``Vkurt``, the key used for d values downstream.
    """
    c = _cache(s, cache, size, seed, scheme)
    if not itable.combos:
        raise DomainError("no combinations to select from")
    vkurt, excluded, usable = [], [], set()
    for ci in range(len(itable.combos)):
        for etype in itable.etypes:
            fun = _combo_map(c, itable, ci, etype)
            try:
                res = iterate_fixed_point(fun, itable.key_max, cfg)
                _, _, clamped = _combo_kurtosis(c, itable, ci, etype, res.value)
            except (ConvergenceError, DomainError):
                excluded.append((ci, etype))
                continue
            if clamped:
                excluded.append((ci, etype))
                continue
            vkurt.append(res.value)
            usable.add((ci, etype))
    if not vkurt:
        raise DomainError("every combination was excluded")

    def select(x):
        parts, edge = itable.bracket(x)
        total = 0.0
        for weight, (ci, etype) in parts:
            if (ci, etype) not in usable:
                ci, etype = _nearest_usable(itable, usable, x)
            val, e, _ = _combo_kurtosis(c, itable, ci, etype, x)
            total += weight * val
            edge = edge or e
        return total, edge

    res = iterate_fixed_point(select, itable.key_max, cfg)
    chosen = itable.chosen_at(res.value)
    if chosen not in usable:
        chosen = _nearest_usable(itable, usable, res.value)
    lo, hi = np.quantile(vkurt, [0.2, 0.8])
    d_key = min(max(res.value, lo), hi)
    return IkmResult(res.value, chosen[0], res.value, float(d_key), tuple(vkurt), tuple(excluded), res)


def _combo_map(cache, itable, ci, etype):
    def fun(x):
        val, edge, _ = _combo_kurtosis(cache, itable, ci, etype, x)
        return val, edge

    return fun


def _nearest_usable(itable, usable, x):
    # fall back to the usable choice of the closest row
    order = np.argsort(np.abs(np.asarray(itable.keys) - x))
    for j in order:
        cand = itable.choices[j]
        if cand in usable:
            return cand
    return sorted(usable)[0]


# ---------------------------------------------------------------------------
# high-level estimation

MOMENTS = ("mean", "var", "tm", "fm", "skew", "kurt")
_ORDER = {"mean": 1, "var": 2, "tm": 3, "fm": 4}


@dataclass
class Estimate:
    """Result of :func:`estimate`.

    ``d_used`` maps moment order to the d value applied; ``key`` is the
    fixed-point kurtosis or |skewness| used to look d up, if any.
    """

    estimate: float
    moment: str
    method: str
    d_used: dict
    clamped: bool = False
    combo: int | None = None
    key: float | None = None
    mirrored: bool = False
    fixed_point: FixedPointResult | None = None

    def to_dict(self):
        out = {
            "estimate": float(self.estimate),
            "moment": self.moment,
            "method": self.method,
            "d_used": {str(k): float(v) for k, v in self.d_used.items()},
            "clamped": bool(self.clamped),
        }
        if self.combo is not None:
            out["combo"] = int(self.combo)
        if self.key is not None:
            out["key"] = float(self.key)
        if self.mirrored:
            out["mirrored"] = True
        if self.fixed_point is not None:
            fp = self.fixed_point
            out["fixed_point"] = {
                "value": float(fp.value),
                "iterations": int(fp.iterations),
                "converged": bool(fp.converged),
                "boundary": bool(fp.boundary),
            }
        return out


def skew_sign(cache, wl=DEFAULT_WL1):
    """Sign of the L-stage WL of the third-moment kernel sample."""
    v = cache.lu(_lu(3, wl))
    return -1.0 if v < 0 else 1.0


def estimate(x, moment="mean", method=RM, *, d=None, tables=None, itable=None,
             wl1=DEFAULT_WL1, wl2=DEFAULT_WL2, shape_etype=RM, cfg=FixedPointConfig(),
             size=DEFAULT_BS_SIZE, seed=0, scheme=MODE_INTERP, cache=None):
    """Invariant estimate of a moment of the data ``x``.

    Parameters
    ----------
    x : array_like or Sample
    moment : {"mean", "var", "tm", "fm", "skew", "kurt"}
        ``tm`` and ``fm`` are the third and fourth central moments.
    method : {"rm", "qm", "ikm"}
    d : float, optional
        Use this d value directly instead of a table lookup (central
        moments only).
    tables : TableSet, optional
        D tables built with the WL pairs ``(wl1, wl2)``.
    itable : ITable, optional
        Required for ``method="ikm"``.
    shape_etype : {"rm", "qm"}
        Estimator type of the fixed point that picks the table key.
    cache : KernelCache, optional
        Reuse kernel evaluations of ``x`` across calls (``x`` is then ignored).

    Notes
    -----
    Left-skewed data (negative robust third moment) are mirrored before
    estimation and the odd-order results mirrored back.
    """
    moment = str(moment).lower()
    if moment not in MOMENTS:
        raise DomainError(f"moment must be one of {MOMENTS}, got {moment!r}")
    method = str(method).lower()
    if method not in (RM, QM, "ikm"):
        raise DomainError(f"method must be rm, qm or ikm, got {method!r}")
    if cache is None:
        cache = KernelCache(as_sample(x), size, seed, scheme)
    s = cache.sample
    wl1, wl2 = WLSpec.parse(wl1), WLSpec.parse(wl2)

    sign = 1.0
    if moment in ("mean", "tm", "skew") and (d is None or moment == "skew"):
        if s.n >= 3:
            sign = skew_sign(cache, wl1)
        if sign < 0:
            cache = cache.mirrored()
    mirrored = sign < 0

    def finish(val, order):
        return sign * val if order % 2 == 1 else val

    if d is not None:
        if moment in ("skew", "kurt"):
            raise DomainError("a single d value cannot define a standardized moment; supply tables")
        order = _ORDER[moment]
        etype = QM if method == QM else RM
        val, clamped = ikm_value(None, order, d, etype, wl1, wl2, cache=cache, full_output=True)
        return Estimate(finish(val, order), moment, method, {order: d}, clamped, mirrored=mirrored)

    if method == "ikm":
        return _estimate_ikm(cache, moment, itable, tables, wl1, wl2, cfg)
    if tables is None:
        raise DomainError("either d or tables must be given")

    odd = moment in ("mean", "tm", "skew")
    key_kind = ABS_SKEWNESS if odd else KURTOSIS
    if odd:
        fp = fixed_point_skew(None, tables, cfg, shape_etype, (wl1, wl2), cache=cache)
    else:
        fp = fixed_point_kurt(None, tables, cfg, shape_etype, (wl1, wl2), cache=cache)
    if moment in ("skew", "kurt"):
        if canonical_etype(method) != canonical_etype(shape_etype):
            if odd:
                fp = fixed_point_skew(None, tables, cfg, method, (wl1, wl2), cache=cache)
            else:
                fp = fixed_point_kurt(None, tables, cfg, method, (wl1, wl2), cache=cache)
        return Estimate(sign * fp.value if odd else fp.value, moment, method, {}, fp.boundary,
                        key=fp.value, mirrored=mirrored, fixed_point=fp)
    order = _ORDER[moment]
    table = _table_for(tables, method, order, key_kind)
    dval, _ = table.interpolate(fp.value, full_output=True)
    val, clamped = ikm_value(None, order, dval, method, wl1, wl2, cache=cache, full_output=True)
    return Estimate(finish(val, order), moment, method, {order: dval}, clamped,
                    key=fp.value, mirrored=mirrored, fixed_point=fp)


def _estimate_ikm(cache, moment, itable, tables, wl1, wl2, cfg):
    if itable is None:
        raise DomainError("method 'ikm' needs an I table")
    if moment not in ("var", "fm", "kurt"):
        raise DomainError("method 'ikm' covers the even-order moments and kurtosis only")
    res = ikm_select(None, itable, cfg, cache=cache)
    if moment == "kurt":
        return Estimate(res.estimate, moment, "ikm", {}, False, combo=res.combo, key=res.key,
                        fixed_point=res.fixed_point)
    if tables is None:
        raise DomainError("method 'ikm' for central moments also needs D tables")
    order = _ORDER[moment]
    best = None
    for etype in tables.etypes:
        try:
            table = tables.lookup(etype, order, KURTOSIS)
        except DomainError:
            continue
        dval = table.interpolate(res.d_key)
        val, clamped = ikm_value(None, order, dval, etype, wl1, wl2, cache=cache, full_output=True)
        if best is None or (not clamped and best[2]):
            best = (val, dval, clamped)
        if etype == RM and not clamped:
            break
    if best is None:
        raise DomainError(f"no kurtosis-keyed table for order {order}")
    val, dval, clamped = best
    return Estimate(val, moment, "ikm", {order: dval}, clamped, combo=res.combo, key=res.d_key,
                    fixed_point=res.fixed_point)
