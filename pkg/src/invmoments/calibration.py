"""d values and their lookup tables.

A d value makes a recombined or quantile I-statistic exact for a chosen
consistent distribution.  For location-scale families it is a single
number; for shape-scale families it varies with the shape, so it is
tabulated against kurtosis (or absolute skewness) on a regular grid and
interpolated linearly.

Asymptotic WL values on the order-k kernel distribution come from a scrambled
Sobol sample of that kernel distribution (size ``n_cal``); the order-1
values use quadrature of the quantile function where available.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources

import mpmath as mp
import numpy as np

from . import distributions as dist
from .errors import (
    CalibrationError,
    DegeneratePairError,
    DomainError,
    InconsistentByClampingError,
    RangeError,
)
from .invariant import (
    ABS_SKEWNESS,
    DEFAULT_WL1,
    DEFAULT_WL2,
    ETYPES,
    KURTOSIS,
    QM,
    RM,
    KernelCache,
    canonical_etype,
    gamma_median,
    ikm_value,
    recombined,
    shifted_percentile,
    standardized_moment,
)
from .lstats import (
    DEFAULT_N_CAL,
    MODE_INTERP,
    WLSpec,
    asymptotic_wl,
    empirical_cdf_value,
    evaluate_wl,
    sample_quantile,
)
from .ustats import LUSpec, kernel_quasi_sample

TABLE_VERSION = 1
KEY_KINDS = (KURTOSIS, ABS_SKEWNESS)
_DEGENERATE_RTOL = 1e-9


# ---------------------------------------------------------------------------
# closed forms on quantile-point WLs


def _check_pair(p1, p2):
    for p in (p1, p2):
        if not 0 < p < 1:
            raise DomainError(f"percentiles must lie in (0, 1), got {p}")
    if p1 == p2:
        raise DegeneratePairError("p1 and p2 coincide")


def d_rm_closed_exponential(p1, p2):
    """d of the recombined mean for Exponential data with WLs ``Q(p1)``, ``Q(p2)``.

    >>> round(d_rm_closed_exponential(0.5, 0.75), 6)
    -0.442695
    """
    _check_pair(p1, p2)
    l1, l2 = math.log1p(-p1), math.log1p(-p2)
    return -(l1 + 1.0) / (l1 - l2)


def d_qm_closed_exponential(p1, p2):
    """d of the quantile mean for Exponential data (``p2`` is the pivot)."""
    _check_pair(p1, p2)
    return (-math.expm1(-1.0) - p1) / (p1 - p2)


def d_rm_closed_pareto(p1, p2, alpha):
    """Pareto analogue of :func:`d_rm_closed_exponential` (requires alpha > 1)."""
    _check_pair(p1, p2)
    if not alpha > 1:
        raise DomainError("the Pareto mean needs alpha > 1")
    # (1 - p)^(-1/alpha) - 1 via expm1 keeps full precision for huge alpha
    t1 = math.expm1(-math.log1p(-p1) / alpha)
    t2 = math.expm1(-math.log1p(-p2) / alpha)
    return (1.0 / (alpha - 1.0) - t1) / (t1 - t2)


def d_qm_closed_pareto(p1, p2, alpha):
    """Pareto analogue of :func:`d_qm_closed_exponential` (requires alpha > 1)."""
    _check_pair(p1, p2)
    if not alpha > 1:
        raise DomainError("the Pareto mean needs alpha > 1")
    # F(mean) = 1 - ((alpha - 1) / alpha)^alpha
    f_mu = -math.expm1(alpha * math.log1p(-1.0 / alpha))
    return (f_mu - p1) / (p1 - p2)


def bm_exponential():
    """Closed-form value of the BM location functional on the standard exponential.

    ``1 + ln C`` with ``C`` an algebraic constant; about 0.97124.
    """
    with mp.workdps(50):
        c = (mp.mpf(26068394603446272) * mp.root(mp.mpf(7) / 247, 6) * mp.cbrt(11)
             / (mp.mpf(391) ** (mp.mpf(5) / 6) * mp.mpf(101898752449325) * mp.sqrt(5)))
        return float(1 + mp.log(c))


def exponential_bm_pair():
    """WL pair reproducing the BM-median recombination on exponential data.

    BM has no sample version here, so the quantile point with the same
    asymptotic value on the exponential family stands in for it:
    ``Q(p*) = BM`` with ``p* = 1 - exp(-BM)``.  Returns ``(wl1, wl2)``.
    """
    p_star = -math.expm1(-bm_exponential())
    return WLSpec("qp", p=p_star), WLSpec("median")


# ---------------------------------------------------------------------------
# asymptotic values on a kernel distribution


class KernelDistribution:
    """Population side of an order-k moment estimator.

    Order 1 is the distribution itself, evaluated by quadrature where
    possible; higher orders use a low-discrepancy sample of the kernel
    distribution.
    """

    def __init__(self, spec, order=1, n_cal=DEFAULT_N_CAL, seed=0, method="auto"):
        self.spec = spec
        self.order = int(order)
        self.method = method
        self.moments = dist.population_moments(spec, order=max(self.order, 1))
        self.target = self.moments.target(self.order)
        self._ks = None
        self.n_cal = n_cal
        self.seed = seed
        if self.order > 1:
            self._ks = kernel_quasi_sample(spec, self.order, n_cal, seed)

    def wl(self, w):
        w = WLSpec.parse(w)
        if self.order == 1:
            return asymptotic_wl(self.spec, w, self.method, self.n_cal, self.seed)
        if w.kind == "ref":
            return float(w.value)
        return evaluate_wl(self._ks, w)

    def cdf(self, x):
        if self.order == 1:
            return float(dist.cdf(self.spec, x))
        return empirical_cdf_value(self._ks, x)

    def quantile(self, p):
        if self.order == 1:
            return float(dist.quantile(self.spec, p))
        return sample_quantile(self._ks, p)


def _context(consistent, order, n_cal, seed, context):
    if context is not None:
        return context
    return KernelDistribution(consistent, order, n_cal, seed)


def d_rm_general(consistent, wl1, wl2, order=1, n_cal=DEFAULT_N_CAL, seed=0, *, context=None):
    """``(mu_k - A1) / (A1 - A2)`` with ``A_i`` the asymptotic L-stage WL values.

    ``wl1`` and ``wl2`` are used as given (their breakdowns are the L-stage
    ones); see :func:`lu_wls` for converting overall targets.

    Raises
    ------
    DegeneratePairError
        If the two asymptotic values coincide.
    """
    ctx = _context(consistent, order, n_cal, seed, context)
    a1, a2 = ctx.wl(wl1), ctx.wl(wl2)
    # values at zero (symmetric data) need the spread as the unit
    spread = ctx.moments.sd_kernel.get(ctx.order, 0.0)
    spread = spread if math.isfinite(spread) else 0.0
    scale = max(abs(a1), abs(a2), abs(ctx.target), spread, 1e-300)
    if abs(a1 - a2) <= _DEGENERATE_RTOL * scale:
        raise DegeneratePairError(f"asymptotic values of {wl1} and {wl2} coincide ({a1})")
    return (ctx.target - a1) / (a1 - a2)


def d_qm_general(consistent, wl, gamma=None, epsilon=None, order=1, n_cal=DEFAULT_N_CAL, seed=0,
                 *, context=None):
    """``(F(mu_k) - F(A)) / (F(A) - gamma/(1+gamma))`` on the kernel distribution.

    ``gamma`` and ``epsilon`` default to those of ``wl`` and define the
    clamping window ``[gamma*epsilon, 1-epsilon]``.

    Raises
    ------
    InconsistentByClampingError
        If one of the three percentiles falls outside the window.
    DegeneratePairError
        If ``F(A)`` equals the pivot.
    """
    w = WLSpec.parse(wl)
    g = float(w.gamma if gamma is None else gamma)
    e = float(w.epsilon if epsilon is None else epsilon)
    ctx = _context(consistent, order, n_cal, seed, context)
    f_mu = ctx.cdf(ctx.target)
    f_wl = ctx.cdf(ctx.wl(w))
    pivot = g / (1.0 + g)
    lo, hi = g * e, 1.0 - e
    for name, p in (("F(mu)", f_mu), ("F(WL)", f_wl), ("gamma/(1+gamma)", pivot)):
        if not lo <= p <= hi:
            raise InconsistentByClampingError(
                f"{name} = {p:.6g} lies outside the clamping window [{lo:.6g}, {hi:.6g}]"
            )
    if abs(f_wl - pivot) <= 1e-12:
        raise DegeneratePairError("F(WL) equals the pivot gamma/(1+gamma)")
    return (f_mu - f_wl) / (f_wl - pivot)


def lu_wls(order, wl1, wl2=None):
    """L-stage WLs for an order-k estimator from overall breakdown targets."""
    w1 = LUSpec.for_target(order, WLSpec.parse(wl1)).wl
    if wl2 is None:
        return w1
    return w1, LUSpec.for_target(order, WLSpec.parse(wl2)).wl


def d_value(ctx, etype, wl1, wl2=DEFAULT_WL2):
    """d of an order-``ctx.order`` estimator, WLs given as overall targets."""
    etype = canonical_etype(etype)
    w1, w2 = lu_wls(ctx.order, wl1, wl2)
    if etype == RM:
        return d_rm_general(None, w1, w2, context=ctx)
    return d_qm_general(None, w1, context=ctx)


# ---------------------------------------------------------------------------
# grid


@dataclass(frozen=True)
class GridConfig:
    """Kurtosis grid ``mu_lower + i * delta`` for ``i = 1..count``."""

    mu_lower: float = 3.0
    delta: float = 0.1
    count: int = 70

    def __post_init__(self):
        if not self.delta > 0 or int(self.count) < 1:
            raise DomainError("grid needs delta > 0 and count >= 1")

    @property
    def keys(self):
        return [round(self.mu_lower + i * self.delta, 12) for i in range(1, int(self.count) + 1)]

    @classmethod
    def for_family(cls, family, delta=0.1, count=70):
        return cls(dist.KURTOSIS_GRID_START.get(dist.canonical_family(family), 3.0), delta, count)


# ---------------------------------------------------------------------------
# tables


@dataclass
class DTable:
    """d values against kurtosis or absolute skewness.

    Between grid keys the d value is interpolated linearly; outside the key
    range the endpoint value is returned and flagged.
    """

    family: str
    etype: str
    order: int
    key_kind: str
    keys: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.etype = canonical_etype(self.etype)
        if self.key_kind not in KEY_KINDS:
            raise DomainError(f"key kind must be one of {KEY_KINDS}")
        self.keys = np.asarray(self.keys, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.keys.shape != self.values.shape or self.keys.ndim != 1:
            raise DomainError("keys and values must be 1-d arrays of equal length")
        if self.keys.size > 1 and not np.all(np.diff(self.keys) > 0):
            raise DomainError("table keys must be strictly increasing")

    @property
    def size(self):
        return self.keys.size

    @property
    def key_min(self):
        return float(self.keys[0])

    @property
    def key_max(self):
        return float(self.keys[-1])

    def interpolate(self, key, full_output=False):
        return interpolate_d(self, key, full_output)

    def to_dict(self):
        meta = {
            "family": self.family,
            "etype": self.etype,
            "k": self.order,
            "key_kind": self.key_kind,
            "version": TABLE_VERSION,
        }
        meta.update({k: v for k, v in self.meta.items() if k not in meta})
        return {"meta": meta, "rows": [[float(k), float(v)] for k, v in zip(self.keys, self.values)]}

    @classmethod
    def from_dict(cls, data):
        meta = dict(data["meta"])
        if "version" not in meta:
            raise DomainError("table file lacks the mandatory version field")
        if meta["version"] != TABLE_VERSION:
            raise DomainError(f"unsupported table version {meta['version']}")
        rows = data["rows"]
        keys = [r[0] for r in rows]
        vals = [r[1] for r in rows]
        core = {k: meta.pop(k) for k in ("family", "etype", "k", "key_kind")}
        meta.pop("version")
        return cls(core["family"], core["etype"], int(core["k"]), core["key_kind"], keys, vals, meta)


def interpolate_d(t, key, full_output=False):
    """Piecewise-linear d at ``key``; clamped (and flagged) outside the keys.

    Returns
    -------
    d : float
    clamped : bool
        Only when ``full_output`` is true.
    """
    if t.size == 0:
        raise DomainError("empty d table")
    key = float(key)
    if math.isnan(key):
        raise DomainError("d table lookup at NaN")
    clamped = key < t.key_min or key > t.key_max
    d = float(np.interp(key, t.keys, t.values))
    return (d, clamped) if full_output else d


class TableSet:
    """A collection of D tables addressed by ``(etype, order, key_kind)``."""

    def __init__(self, tables=(), meta=None):
        self.tables = {}
        self.meta = dict(meta or {})
        for t in tables:
            self.add(t)

    def add(self, t):
        self.tables[(t.etype, t.order, t.key_kind)] = t

    def lookup(self, etype, order, key_kind=KURTOSIS):
        try:
            return self.tables[(canonical_etype(etype), int(order), key_kind)]
        except KeyError:
            raise DomainError(f"no {etype} table of order {order} keyed by {key_kind}") from None

    @property
    def etypes(self):
        return tuple(e for e in ETYPES if any(k[0] == e for k in self.tables))

    def __iter__(self):
        return iter(self.tables[k] for k in sorted(self.tables))

    def __len__(self):
        return len(self.tables)

    def to_dict(self):
        return {"version": TABLE_VERSION, "meta": self.meta, "tables": [t.to_dict() for t in self]}

    @classmethod
    def from_dict(cls, data):
        if "tables" not in data:
            return cls([DTable.from_dict(data)])
        if data.get("version") != TABLE_VERSION:
            raise DomainError(f"unsupported table bundle version {data.get('version')}")
        return cls([DTable.from_dict(t) for t in data["tables"]], data.get("meta"))

    def merge(self, other):
        out = TableSet(self, self.meta)
        for t in other:
            out.add(t)
        return out


def dumps(obj):
    """Canonical JSON text of a table, bundle or I table (byte-stable)."""
    return json.dumps(obj.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"


def save(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(obj))


def load_tables(path):
    """Load a D table or a bundle of them as a :class:`TableSet`."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if data.get("kind") == "itable":
        raise DomainError(f"{path} holds an I table, not D tables")
    return TableSet.from_dict(data)


def load_itable(path):
    with open(path, encoding="utf-8") as fh:
        return ITable.from_dict(json.load(fh))


def _shipped(name, family):
    ref = resources.files("invmoments").joinpath("data").joinpath(name)
    if not ref.is_file():
        raise DomainError(f"no shipped tables for {family}")
    return json.loads(ref.read_text(encoding="utf-8"))


def default_tables(family="weibull"):
    """The D tables shipped with the package."""
    return TableSet.from_dict(_shipped(f"{dist.canonical_family(family)}_dtables.json", family))


def default_itable(family="weibull"):
    """The I table shipped with the package."""
    return ITable.from_dict(_shipped(f"{dist.canonical_family(family)}_itable.json", family))


# ---------------------------------------------------------------------------
# building D tables


def _row_specs(family, grid):
    fam = dist.canonical_family(family)
    if fam in ("exponential", "gaussian", "uniform"):
        spec = dist.DistributionSpec(fam)
        return [(dist.population_moments(spec).kurtosis, spec)]
    rows = []
    for key in grid.keys:
        try:
            shape = dist.shape_from_kurtosis(fam, key)
        except RangeError as exc:
            warnings.warn(f"dropping grid row {key}: {exc}", stacklevel=3)
            continue
        rows.append((key, dist.DistributionSpec(fam, shape)))
    return rows


def _pairs_by_order(pairs, orders):
    if pairs is None:
        return {k: (DEFAULT_WL1, DEFAULT_WL2) for k in orders}
    if isinstance(pairs, dict):
        return {k: (WLSpec.parse(pairs[k][0]), WLSpec.parse(pairs[k][1])) for k in orders}
    w1, w2 = pairs
    return {k: (WLSpec.parse(w1), WLSpec.parse(w2)) for k in orders}


def _kappa_asymptotic(ctx2, ctx4, etype, d2, d4, pairs):
    """Population version of the kurtosis map of a row, at given d values."""
    vals = []
    for ctx, d, order in ((ctx2, d2, 2), (ctx4, d4, 4)):
        w1, w2 = lu_wls(order, *pairs[order])
        if etype == RM:
            vals.append(recombined(ctx.wl(w1), ctx.wl(w2), d))
        else:
            a = ctx.wl(w1)
            p = shifted_percentile(ctx.cdf(a), d, w1.pivot)
            lo, hi = float(w1.gamma) * float(w1.epsilon), 1.0 - float(w1.epsilon)
            vals.append(ctx.quantile(min(max(p, lo), hi)))
    return standardized_moment(vals[1], vals[0], 4)


def build_d_tables(family, etypes=ETYPES, orders=(1, 2, 3, 4), key_kinds=KEY_KINDS, pairs=None,
                   grid=None, n_cal=DEFAULT_N_CAL, seed=0, check=True):
    """Build D tables for every requested ``(etype, order, key_kind)``.

    Parameters
    ----------
    family : str
        Consistent family.
    pairs : (wl1, wl2) or mapping ``{order: (wl1, wl2)}``, optional
        WL pairs as overall breakdown targets.  Quantile tables use ``wl1``
        alone.  Defaults to a trimmed mean with breakdown 1/24 and the median.
    grid : GridConfig, optional
        Defaults to the family's kurtosis grid with ``delta=0.1``, ``count=70``.
    n_cal : int
        Size of the low-discrepancy kernel samples.
    seed : int
        Scrambling seed; every row uses the same points so that d varies
        smoothly along the grid.
    check : bool
        Verify, for kurtosis tables of orders 2 and 4, that the kurtosis map
        of every row started at the largest key returns a value below that
        key.

    Rows whose d value is undefined (a degenerate WL pair, or a percentile
    outside the clamping window) are dropped from the affected table with a
    warning.  Skewness-keyed tables reuse the kurtosis grid rows with the
    row's absolute skewness as key.

    Returns
    -------
    TableSet

    Raises
    ------
    CalibrationError
        If a table ends up empty or the build-time check fails.
    """
    fam = dist.canonical_family(family)
    etypes = tuple(canonical_etype(e) for e in etypes)
    orders = tuple(int(k) for k in orders)
    grid = GridConfig.for_family(fam) if grid is None else grid
    pairs = _pairs_by_order(pairs, orders)
    rows = _row_specs(fam, grid)
    if not rows:
        raise CalibrationError(f"no attainable grid rows for {fam}")
    collected = {(e, k): [] for e in etypes for k in orders}
    for j, (key, spec) in enumerate(rows):
        mom = dist.population_moments(spec)
        for k in orders:
            ctx = KernelDistribution(spec, k, n_cal, seed)
            for e in etypes:
                try:
                    d = d_value(ctx, e, *pairs[k])
                except (DegeneratePairError, InconsistentByClampingError) as exc:
                    warnings.warn(f"{fam} {e} order {k}: dropping row {key}: {exc}", stacklevel=2)
                    continue
                collected[(e, k)].append((key, abs(mom.skewness), spec.shape, d))
    meta = {
        "delta": grid.delta,
        "C": grid.count,
        "mu_lower": grid.mu_lower,
        "n_cal": n_cal,
        "seed": seed,
        "scheme": MODE_INTERP,
    }
    out = TableSet(meta={"family": fam, **meta})
    for (e, k), items in collected.items():
        if not items:
            raise CalibrationError(f"{fam} {e} table of order {k} has no usable rows")
        w1, w2 = pairs[k]
        tmeta = dict(meta, wl1=str(w1), wl2=str(w2) if e == RM else None)
        for kind in key_kinds:
            idx = 0 if kind == KURTOSIS else 1
            pts = sorted((it[idx], it[3], it[2]) for it in items)
            keys = [p[0] for p in pts]
            if len(keys) > 1 and np.any(np.diff(keys) <= 0):
                raise CalibrationError(f"{fam} {kind} keys are not strictly increasing")
            shapes = [p[2] for p in pts]
            out.add(DTable(fam, e, k, kind, keys, [p[1] for p in pts], dict(tmeta, shapes=shapes)))
    if check and KURTOSIS in key_kinds and {2, 4} <= set(orders):
        for e in etypes:
            check_envelope(out, fam, e, pairs, n_cal, seed)
    return out


def build_d_table(family, etype, order, pairs=None, grid=None, key_kind=KURTOSIS,
                  n_cal=DEFAULT_N_CAL, seed=0):
    """Single D table; see :func:`build_d_tables`."""
    ts = build_d_tables(family, (etype,), (order,), (key_kind,), pairs, grid, n_cal, seed, check=False)
    return ts.lookup(etype, order, key_kind)


def check_envelope(tables, family, etype, pairs=None, n_cal=DEFAULT_N_CAL, seed=0):
    """Verify that the kurtosis map started at the largest key moves inward.

    For every row below the largest key, the population kurtosis map of
    that row's distribution, evaluated with the d values of the largest
    key, must be smaller than the largest key.

    Returns
    -------
    list of (key, ratio)
        ``kappa(key_max) / key_max`` per checked row.

    Raises
    ------
    CalibrationError
    """
    etype = canonical_etype(etype)
    pairs = _pairs_by_order(pairs, (2, 4))
    t2 = tables.lookup(etype, 2, KURTOSIS)
    t4 = tables.lookup(etype, 4, KURTOSIS)
    kmax = min(t2.key_max, t4.key_max)
    d2, d4 = t2.interpolate(kmax), t4.interpolate(kmax)
    shapes = dict(zip(t4.keys.tolist(), t4.meta.get("shapes", [])))
    ratios = []
    for key, shape in shapes.items():
        if key >= kmax:
            continue
        spec = dist.DistributionSpec(family, shape)
        c2 = KernelDistribution(spec, 2, n_cal, seed)
        c4 = KernelDistribution(spec, 4, n_cal, seed)
        ratio = _kappa_asymptotic(c2, c4, etype, d2, d4, pairs) / kmax
        ratios.append((key, ratio))
        if not ratio < 1:
            raise CalibrationError(
                f"{family} {etype}: kurtosis map at the largest key {kmax} returns "
                f"{ratio * kmax:.6g} >= {kmax} for the row at {key}"
            )
    tables.meta.setdefault("envelope", {})[etype] = max((r for _, r in ratios), default=None)
    return ratios


# ---------------------------------------------------------------------------
# I tables


@dataclass
class ITable:
    """RMSE-optimal kurtosis combinations against kurtosis.

    ``combos[i]`` is ``(wl for the fourth moment, wl for the variance)``,
    each paired with the gamma-median of its own asymmetry.  For every row
    and estimator type, ``dvals[etype][row][i]`` holds the ``(d2, d4)`` of
    combination ``i`` or ``None`` when it is excluded there; ``choices[row]``
    is the ``(i, etype)`` with the smallest Monte Carlo RMSE.
    """

    family: str
    keys: list
    combos: list
    etypes: tuple
    dvals: dict
    choices: list
    rmse: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.combos = [(WLSpec.parse(a), WLSpec.parse(b)) for a, b in self.combos]
        self.etypes = tuple(canonical_etype(e) for e in self.etypes)
        self.choices = [(int(c), canonical_etype(e)) for c, e in self.choices]
        self.keys = [float(k) for k in self.keys]
        if len(self.keys) > 1 and np.any(np.diff(self.keys) <= 0):
            raise DomainError("I table keys must be strictly increasing")

    @property
    def key_min(self):
        return self.keys[0]

    @property
    def key_max(self):
        return self.keys[-1]

    def chosen_at(self, x):
        j = int(np.argmin(np.abs(np.asarray(self.keys) - x)))
        return self.choices[j]

    def bracket(self, x):
        """Interpolation weights of the chosen combinations around ``x``."""
        keys = self.keys
        if x <= keys[0] or len(keys) == 1:
            return [(1.0, self.choices[0 if x <= keys[0] else -1])], x < keys[0] or x > keys[-1]
        if x >= keys[-1]:
            return [(1.0, self.choices[-1])], x > keys[-1]
        j = int(np.searchsorted(keys, x, side="right")) - 1
        w = (x - keys[j]) / (keys[j + 1] - keys[j])
        return [(1.0 - w, self.choices[j]), (w, self.choices[j + 1])], False

    def d_values(self, combo, etype, x):
        """Interpolated ``(d2, d4)`` of one combination at key ``x``."""
        rows = self.dvals[canonical_etype(etype)]
        pts = [(k, r[combo]) for k, r in zip(self.keys, rows) if r[combo] is not None]
        if not pts:
            raise DomainError(f"combination {combo} ({etype}) is excluded on every row")
        ks = np.array([p[0] for p in pts])
        d2 = np.array([p[1][0] for p in pts])
        d4 = np.array([p[1][1] for p in pts])
        edge = x < ks[0] or x > ks[-1]
        return (float(np.interp(x, ks, d2)), float(np.interp(x, ks, d4))), edge

    def to_dict(self):
        meta = {"family": self.family, "kind": "itable", "version": TABLE_VERSION}
        meta.update({k: v for k, v in self.meta.items() if k not in meta})
        rows = []
        for j, key in enumerate(self.keys):
            ci, e = self.choices[j]
            rows.append([
                key,
                [ci, e],
                {et: self.dvals[et][j] for et in self.etypes},
                self.rmse[j] if self.rmse else None,
            ])
        return {
            "kind": "itable",
            "meta": meta,
            "combos": [[str(a), str(b)] for a, b in self.combos],
            "etypes": list(self.etypes),
            "rows": rows,
        }

    @classmethod
    def from_dict(cls, data):
        meta = dict(data["meta"])
        if meta.get("version") != TABLE_VERSION:
            raise DomainError("unsupported or missing I table version")
        etypes = tuple(data["etypes"])
        rows = data["rows"]
        keys = [r[0] for r in rows]
        choices = [tuple(r[1]) for r in rows]
        dvals = {e: [[None if v is None else tuple(v) for v in r[2][e]] for r in rows] for e in etypes}
        rmse = [r[3] for r in rows] if rows and rows[0][3] is not None else []
        family = meta.pop("family")
        for k in ("kind", "version"):
            meta.pop(k, None)
        return cls(family, keys, data["combos"], etypes, dvals, choices, rmse, meta)


def default_combos(kind="tm"):
    """Reduced 3 x 3 grid of (fourth-moment WL, variance WL) combinations."""
    fm = ["tm:eps=1/24", "tm:eps=1/24,gamma=1/2", "wm:eps=1/24"]
    var = ["tm:eps=1/24", "tm:eps=1/24,gamma=1/2", "wm:eps=1/24"]
    return [(WLSpec.parse(a), WLSpec.parse(b)) for a in fm for b in var]


def _combo_d(spec, combos, etypes, n_cal, seed):
    c2 = KernelDistribution(spec, 2, n_cal, seed)
    c4 = KernelDistribution(spec, 4, n_cal, seed)
    out = {e: [] for e in etypes}
    for wl4, wl2 in combos:
        for e in etypes:
            try:
                d2 = d_value(c2, e, wl2, gamma_median(wl2.gamma))
                d4 = d_value(c4, e, wl4, gamma_median(wl4.gamma))
                out[e].append((d2, d4))
            except (DegeneratePairError, InconsistentByClampingError):
                out[e].append(None)
    return out


def _combo_estimate(cache, combo, etype, d2, d4):
    wl4, wl2 = combo
    v, cl2 = ikm_value(None, 2, d2, etype, wl2, gamma_median(wl2.gamma), cache=cache, full_output=True)
    f, cl4 = ikm_value(None, 4, d4, etype, wl4, gamma_median(wl4.gamma), cache=cache, full_output=True)
    return standardized_moment(f, v, 4), cl2 or cl4


def build_i_table(family, combos=None, grid=None, reps=200, n=5184, seed=0, etypes=ETYPES,
                  n_cal=DEFAULT_N_CAL, bs_size=2**16, estimator_fn=None):
    """Monte Carlo choice of the RMSE-optimal kurtosis combination per grid row.

    For every row the kurtosis estimates of each combination (with the d
    values exact for that row) are computed on ``reps`` samples of size
    ``n``; a combination is excluded at a row if its d value is undefined
    or a quantile percentile was clamped in any replication.

    ``estimator_fn(cache, combo_index, etype, d2, d4) -> (value, clamped)``
    may replace the built-in estimator (used in tests).
    """
    if reps < 30:
        raise DomainError("an I table needs reps >= 30")
    fam = dist.canonical_family(family)
    grid = GridConfig.for_family(fam) if grid is None else grid
    combos = default_combos() if combos is None else [(WLSpec.parse(a), WLSpec.parse(b)) for a, b in combos]
    if not combos:
        raise DomainError("no combinations given")
    etypes = tuple(canonical_etype(e) for e in etypes)
    rows = _row_specs(fam, grid)
    keys, dvals, choices, rmses = [], {e: [] for e in etypes}, [], []
    for j, (key, spec) in enumerate(rows):
        dv = _combo_d(spec, combos, etypes, n_cal, seed)
        truth = dist.population_moments(spec).kurtosis
        sq = {(ci, e): [] for ci in range(len(combos)) for e in etypes if dv[e][ci] is not None}
        ss = np.random.SeedSequence([seed, j])
        for child in ss.spawn(reps):
            x = dist.sample(spec, n, np.random.default_rng(child))
            cache = KernelCache(x, bs_size, 0)
            for (ci, e) in list(sq):
                d2, d4 = dv[e][ci]
                if estimator_fn is None:
                    val, clamped = _combo_estimate(cache, combos[ci], e, d2, d4)
                else:
                    val, clamped = estimator_fn(cache, ci, e, d2, d4)
                if clamped:
                    del sq[(ci, e)]
                    dv[e][ci] = None
                    continue
                sq[(ci, e)].append((val - truth) ** 2)
        if not sq:
            warnings.warn(f"{fam}: every combination excluded at row {key}", stacklevel=2)
            continue
        scores = {c: math.sqrt(math.fsum(v) / len(v)) for c, v in sq.items()}
        best = min(scores, key=lambda c: (scores[c], c[0], ETYPES.index(c[1])))
        keys.append(key)
        choices.append(best)
        rmses.append(scores[best])
        for e in etypes:
            dvals[e].append(dv[e])
    if not keys:
        raise CalibrationError(f"{fam}: every I table row was dropped")
    meta = {"delta": grid.delta, "C": grid.count, "mu_lower": grid.mu_lower, "reps": reps, "n": n,
            "seed": seed, "n_cal": n_cal, "bs_size": bs_size}
    return ITable(fam, keys, combos, etypes, dvals, choices, rmses, meta)
