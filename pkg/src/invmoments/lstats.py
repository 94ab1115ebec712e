"""Order statistics, sample quantiles and weighted L-statistics.

A weighted L-statistic (WL) is described by a :class:`WLSpec` and can be
evaluated on a sample (:func:`evaluate_wl`) or asymptotically on a
distribution (:func:`asymptotic_wl`).  Trimming follows the asymmetric
convention: a WL with breakdown ``epsilon`` and asymmetry ``gamma`` removes
the fraction ``gamma * epsilon`` from the bottom and ``epsilon`` from the top.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np
from scipy import integrate
from scipy.stats import qmc

from . import distributions as dist
from .errors import DataError, DomainError, InfiniteMomentError, WindowError

MODE_INTERP = "mode"
HYNDMAN_FAN = "hf"
_SCHEMES = {
    "mode": MODE_INTERP,
    "modeinterp": MODE_INTERP,
    "hf": HYNDMAN_FAN,
    "hf7": HYNDMAN_FAN,
}

DEFAULT_N_CAL = 2**20


def canonical_scheme(scheme):
    try:
        return _SCHEMES[str(scheme).lower()]
    except KeyError:
        raise DomainError(f"unknown quantile scheme {scheme!r}") from None


class Sample:
    """Finite observations stored sorted ascending.

    Estimators in this package are permutation invariant, so the original
    order is discarded.
    """

    __slots__ = ("values",)

    def __init__(self, values, *, presorted=False):
        arr = np.array(values, dtype=float).ravel()
        if arr.size == 0:
            raise DataError("empty sample")
        if not np.all(np.isfinite(arr)):
            raise DataError("sample contains non-finite values")
        if not presorted:
            arr.sort()
        arr.setflags(write=False)
        self.values = arr

    @property
    def n(self):
        return self.values.size

    def __len__(self):
        return self.values.size

    def __repr__(self):
        return f"Sample(n={self.n})"

    def scaled(self, a, b=0.0):
        """Sample of ``a * x + b``."""
        if a >= 0:
            return Sample(a * self.values + b, presorted=True)
        return Sample((a * self.values + b)[::-1], presorted=True)

    def mirrored(self):
        return self.scaled(-1.0)


def as_sample(x):
    return x if isinstance(x, Sample) else Sample(x)


def _eps_float(e):
    return float(e)


def _ceil(x):
    # guards n * eps landing a hair above an integer
    return int(math.ceil(x - 1e-9))


# ---------------------------------------------------------------------------
# sample quantile and its inverse


def sample_quantile(s, p, scheme=MODE_INTERP):
    """Sample quantile by linear interpolation between order statistics.

    ``"mode"`` uses ``h = (n - 1) p + 1`` (interpolating the modes of the
    uniform order statistics).  ``"hf"`` uses ``h = n p``, the scheme whose
    inverse is ``(cf + frac) / n``; below ``p = 1/n`` it returns the minimum.

    Parameters
    ----------
    s : Sample or array_like
    p : float or array_like in [0, 1]
    scheme : {"mode", "hf"}
    """
    s = as_sample(s)
    x = s.values
    n = x.size
    parr = np.asarray(p, dtype=float)
    if np.any(np.isnan(parr)) or np.any(parr < 0) or np.any(parr > 1):
        raise DomainError("sample_quantile requires 0 <= p <= 1")
    scheme = canonical_scheme(scheme)
    if scheme == MODE_INTERP:
        h = (n - 1) * parr + 1.0
    else:
        h = np.clip(n * parr, 1.0, float(n))
    lo = np.floor(h).astype(np.int64)
    frac = h - lo
    lo = np.clip(lo, 1, n)
    hi = np.minimum(lo + 1, n)
    out = x[lo - 1] + frac * (x[hi - 1] - x[lo - 1])
    return float(out) if out.ndim == 0 else out


def empirical_cdf_value(s, x, scheme=MODE_INTERP, *, full_output=False):
    """Inverse of :func:`sample_quantile` on ``[min(s), max(s)]``.

    Parameters
    ----------
    s : Sample or array_like
    x : float
    scheme : {"mode", "hf"}
    full_output : bool
        Also return a flag telling whether ``x`` fell outside the sample range
        and was clamped.

    Returns
    -------
    p : float
        ``(cf - 1 + frac) / (n - 1)`` for ``"mode"`` and ``(cf + frac) / n``
        for ``"hf"``, where ``cf`` counts observations ``<= x`` and ``frac``
        interpolates towards the next strictly greater order statistic.
    clamped : bool
        Only when ``full_output`` is true.
    """
    s = as_sample(s)
    v = s.values
    n = v.size
    x = float(x)
    if math.isnan(x):
        raise DomainError("empirical_cdf_value of NaN")
    scheme = canonical_scheme(scheme)
    clamped = False
    if x < v[0]:
        p, clamped = 0.0, True
    elif x > v[-1]:
        p, clamped = 1.0, True
    elif n == 1:
        p = 1.0
    else:
        cf = int(np.searchsorted(v, x, side="right"))
        if cf >= n:
            frac = 0.0
        else:
            lo = v[cf - 1]
            frac = (x - lo) / (v[cf] - lo)
        if scheme == MODE_INTERP:
            p = (cf - 1 + frac) / (n - 1)
        else:
            p = (cf + frac) / n
    if full_output:
        return p, clamped
    return p


# ---------------------------------------------------------------------------
# WL descriptors

KINDS = ("median", "tm", "wm", "qp", "qa", "uwa", "mom", "huber", "hl", "ref")

_KIND_ALIASES = {
    "trimmedmean": "tm",
    "trimmed": "tm",
    "winsorizedmean": "wm",
    "winsorized": "wm",
    "quantilepoint": "qp",
    "quantile": "qp",
    "quantileaverage": "qa",
    "uniformweightedaverage": "uwa",
    "medianofmeans": "mom",
    "huberm": "huber",
    "hodgeslehmann": "hl",
    "hodgeslehmannmedian": "hl",
    "referencevalue": "ref",
    "m": "median",
}

# kinds that have no lower/upper trimming parameter
_NO_EPS = frozenset({"median", "qp", "mom", "huber", "hl", "ref"})


def _parse_number(text):
    text = text.strip()
    if "/" in text:
        return Fraction(text)
    try:
        return int(text)
    except ValueError:
        return float(text)


@dataclass(frozen=True)
class WLSpec:
    """Descriptor of a weighted L-statistic.

    Kinds
    -----
    median   sample median
    tm       trimmed mean, trims ``gamma*epsilon`` below and ``epsilon`` above
    wm       Winsorized mean with the same limits
    qp       single quantile ``Q(p)``
    qa       quantile average ``(Q(gamma*epsilon) + Q(1-epsilon)) / 2``
    uwa      uniformly weighted average of quantile averages over
             breakdowns ``t`` in ``[epsilon, 1/(1+gamma)]``
    mom      median of ``b`` block means over a seeded permutation
             (``seed=None`` keeps the sorted order)
    huber    Huber M-estimator with tuning constant ``c`` in MAD units
    hl       Hodges-Lehmann median of Walsh averages
    ref      injected reference value; asymptotic only,
             ``location + scale * value``
    """

    kind: str
    epsilon: float | Fraction = 0
    gamma: float | Fraction = 1
    p: float | None = None
    b: int | None = None
    c: float | None = None
    seed: int | None = 0
    value: float | None = None

    def __post_init__(self):
        kind = str(self.kind).lower().replace("_", "")
        kind = _KIND_ALIASES.get(kind, kind)
        if kind not in KINDS:
            raise DomainError(f"unknown WL kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        eps, gam = self.epsilon, self.gamma
        if not (0 <= eps < 0.5):
            raise DomainError(f"breakdown epsilon must be in [0, 0.5), got {eps}")
        if gam < 0:
            raise DomainError(f"asymmetry gamma must be >= 0, got {gam}")
        if kind not in _NO_EPS:
            pivot = gam / (1 + gam)
            if not (gam * eps <= pivot <= 1 - eps):
                raise DomainError(
                    f"empty percentile window: need gamma*eps <= gamma/(1+gamma) <= 1-eps "
                    f"(gamma={gam}, eps={eps})"
                )
        if kind == "qp" and (self.p is None or not 0 <= self.p <= 1):
            raise DomainError("qp requires p in [0, 1]")
        if kind == "mom" and (self.b is None or self.b < 1):
            raise DomainError("mom requires a block count b >= 1")
        if kind == "ref" and self.value is None:
            raise DomainError("ref requires a value")
        if kind == "huber" and self.c is None:
            object.__setattr__(self, "c", 1.345)

    @property
    def pivot(self):
        return float(self.gamma) / (1.0 + float(self.gamma))

    def with_epsilon(self, epsilon):
        return replace(self, epsilon=epsilon)

    @property
    def symmetric(self):
        return self.gamma == 1 or self.kind in ("median", "hl", "huber", "mom")

    def __str__(self):
        parts = []
        if self.kind not in _NO_EPS:
            parts.append(f"eps={self.epsilon}")
            if self.gamma != 1:
                parts.append(f"gamma={self.gamma}")
        for name in ("p", "b", "c", "value"):
            val = getattr(self, name)
            if val is not None:
                parts.append(f"{name}={val!r}" if isinstance(val, float) else f"{name}={val}")
        if self.kind == "mom":
            parts.append(f"seed={self.seed}")
        return self.kind + (":" + ",".join(parts) if parts else "")

    @classmethod
    def parse(cls, text):
        """Parse ``"tm:eps=1/8,gamma=1"``, ``"qp:p=0.62"``, ``"mom:b=8"``, ..."""
        if isinstance(text, WLSpec):
            return text
        kind, _, rest = str(text).strip().partition(":")
        kwargs = {}
        if rest.strip():
            for item in rest.split(","):
                key, sep, val = item.partition("=")
                if not sep:
                    raise DomainError(f"malformed WL parameter {item!r}")
                key = key.strip().lower()
                key = {"eps": "epsilon", "e": "epsilon", "g": "gamma"}.get(key, key)
                if key not in ("epsilon", "gamma", "p", "b", "c", "seed", "value"):
                    raise DomainError(f"unknown WL parameter {key!r}")
                if key == "seed" and val.strip().lower() == "none":
                    kwargs[key] = None
                    continue
                num = _parse_number(val)
                if key in ("p", "c", "value"):
                    num = float(num)
                elif key in ("b", "seed"):
                    num = int(num)
                kwargs[key] = num
        return cls(kind, **kwargs)


def median_spec():
    return WLSpec("median")


# ---------------------------------------------------------------------------
# evaluation on samples


def _trim_counts(n, w):
    lo = _ceil(n * float(w.gamma) * float(w.epsilon))
    hi = _ceil(n * float(w.epsilon))
    if lo + hi >= n:
        need = next(m for m in range(n + 1, 10 * n + 10**6)
                    if _ceil(m * float(w.gamma) * float(w.epsilon)) + _ceil(m * float(w.epsilon)) < m)
        raise WindowError(f"{w} needs n >= {need} for a non-empty trimming window, got n={n}")
    return lo, hi


def _walsh_count(x, t):
    """Number of pairs i <= j with x_i + x_j <= t (x sorted)."""
    n = x.size
    j = np.searchsorted(x, t - x, side="right")  # entries x_j <= t - x_i
    idx = np.arange(n)
    # pairs with j >= i: count of j in [i, j_i)
    return int(np.maximum(j - idx, 0).sum())


def _walsh_kth(x, ks, count_fn=_walsh_count):
    """Order statistics (1-based ranks ``ks``) of the Walsh sums x_i + x_j, i <= j."""
    n = x.size
    kmin, kmax = min(ks), max(ks)
    lo = np.nextafter(2 * x[0], -np.inf)
    hi = 2 * x[-1]
    c_lo = 0  # count of sums <= lo, always < kmin
    c_hi = n * (n + 1) // 2  # count of sums <= hi, always >= kmax
    for _ in range(200):
        if c_hi - c_lo <= max(4 * n, 1024):
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        c = count_fn(x, mid)
        if c >= kmax:
            hi, c_hi = mid, c
        elif c < kmin:
            lo, c_lo = mid, c
        else:
            # mid separates the requested ranks; resolve them one at a time
            return [v for k in ks for v in _walsh_kth(x, [k], count_fn)]
    idx = np.arange(n)
    start = np.maximum(np.searchsorted(x, lo - x, side="right"), idx)
    stop = np.searchsorted(x, hi - x, side="right")
    lengths = np.maximum(stop - start, 0)
    total = int(lengths.sum())
    rows = np.repeat(idx, lengths)
    offsets = np.cumsum(lengths) - lengths
    cols = start[rows] + (np.arange(total) - offsets[rows])
    cand = np.sort(x[rows] + x[cols])
    return [float(cand[k - c_lo - 1]) for k in ks]


def hodges_lehmann(x):
    """Median of the Walsh averages ``(x_i + x_j)/2``, ``i <= j`` of sorted ``x``."""
    n = x.size
    m = n * (n + 1) // 2
    if n <= 2000:
        i, j = np.triu_indices(n)
        return float(np.median((x[i] + x[j]) * 0.5))
    if m % 2:
        return 0.5 * _walsh_kth(x, [(m + 1) // 2])[0]
    a, b = _walsh_kth(x, [m // 2, m // 2 + 1])
    return 0.25 * (a + b)


def huber_location(x, c=1.345, tol=1e-10, maxiter=500):
    """Huber M-estimate of location by iterative reweighting, scale fixed at MAD."""
    med = float(np.median(x))
    mad = float(np.median(np.abs(x - med))) * 1.482602218505602
    if mad == 0:
        return med
    mu = med
    for _ in range(maxiter):
        r = (x - mu) / mad
        w = np.minimum(1.0, c / np.maximum(np.abs(r), 1e-300))
        new = float(np.sum(w * x) / np.sum(w))
        if abs(new - mu) <= tol * mad:
            return new
        mu = new
    return mu


def median_of_means(x, b, seed=0):
    n = x.size
    if b > n:
        raise WindowError(f"median of means with b={b} blocks needs n >= {b}, got n={n}")
    if seed is not None:
        x = np.random.default_rng(seed).permutation(x)
    blocks = np.array_split(x, b)
    return float(np.median([blk.mean() for blk in blocks]))


def _uwa_grid(lo, hi, m):
    return lo + (hi - lo) * (np.arange(m) + 0.5) / m


def evaluate_wl(s, w, scheme=MODE_INTERP):
    """Evaluate the WL described by ``w`` on sample ``s``.

    Raises
    ------
    WindowError
        If the sample is too small for the trimming window.
    DomainError
        For ``ref`` kinds, which have no sample version.
    """
    s = as_sample(s)
    x = s.values
    n = x.size
    kind = w.kind
    if kind == "median":
        return sample_quantile(s, 0.5, scheme)
    if kind == "qp":
        return sample_quantile(s, w.p, scheme)
    if kind == "tm":
        lo, hi = _trim_counts(n, w)
        return float(np.mean(x[lo:n - hi]))
    if kind == "wm":
        lo, hi = _trim_counts(n, w)
        core = x[lo:n - hi]
        total = core.sum() + lo * x[lo] + hi * x[n - hi - 1]
        return float(total / n)
    if kind == "qa":
        _trim_counts(n, w)
        g, e = float(w.gamma), float(w.epsilon)
        return 0.5 * (sample_quantile(s, g * e, scheme) + sample_quantile(s, 1 - e, scheme))
    if kind == "uwa":
        _trim_counts(n, w)
        g, e = float(w.gamma), float(w.epsilon)
        t = _uwa_grid(e, 1.0 / (1.0 + g), max(256, min(n, 4096)))
        qa = 0.5 * (sample_quantile(s, g * t, scheme) + sample_quantile(s, 1 - t, scheme))
        return float(np.mean(qa))
    if kind == "hl":
        return hodges_lehmann(x)
    if kind == "huber":
        return huber_location(x, w.c)
    if kind == "mom":
        return median_of_means(x, w.b, w.seed)
    if kind == "ref":
        raise DomainError("a reference value has no sample version; use asymptotic_wl")
    raise AssertionError(kind)


# ---------------------------------------------------------------------------
# asymptotic values

QUADRATURE = "quadrature"
LARGE_N_QUASI = "quasi"
_INTEGRAL_KINDS = frozenset({"median", "qp", "tm", "wm", "qa", "uwa", "ref"})


def quasi_uniform(n, d=1, seed=0):
    """``n`` scrambled Sobol points in ``[0, 1)^d`` (strictly inside)."""
    eng = qmc.Sobol(d=d, scramble=True, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        if n & (n - 1) == 0:
            u = eng.random_base2(int(math.log2(n)))
        else:
            u = eng.random(n)
    tiny = np.finfo(float).tiny
    return np.clip(u, tiny, 1.0 - np.finfo(float).epsneg)


def quasi_sample(spec, n=DEFAULT_N_CAL, seed=0):
    """Deterministic low-discrepancy sample from ``spec`` (one point per stratum)."""
    return Sample(dist.quantile(spec, quasi_uniform(n, 1, seed)[:, 0]))


def _integrate_q(spec, a, b):
    """Integral of Q(p) over [a, b]."""
    f = lambda p: dist.quantile(spec, p)  # noqa: E731
    # Open endpoints at 0 or 1 (quad never evaluates the endpoints).
    val, _ = integrate.quad(f, a, b, limit=400, epsabs=1e-13, epsrel=1e-12)
    return val


def _mean_exists(spec):
    try:
        dist.population_moments(spec, order=1)
    except InfiniteMomentError:
        return False
    return True


def _quad_wl(spec, w):
    kind = w.kind
    g, e = float(w.gamma), float(w.epsilon)
    if kind == "median":
        return dist.quantile(spec, 0.5)
    if kind == "qp":
        return dist.quantile(spec, w.p)
    if kind == "ref":
        return spec.location + spec.scale * w.value
    if kind in ("tm", "wm") and e == 0:
        if not _mean_exists(spec):
            raise InfiniteMomentError(f"{w} with epsilon=0 needs a finite mean")
        return dist.population_moments(spec, order=1).mean
    a, b = g * e, 1 - e
    if kind == "tm":
        return _integrate_q(spec, a, b) / (b - a)
    if kind == "wm":
        lo = dist.quantile(spec, a) if a > 0 else 0.0
        return _integrate_q(spec, a, b) + a * lo + e * dist.quantile(spec, b)
    if kind == "qa":
        qa = dist.quantile(spec, a) if a > 0 else dist.support_min(spec)
        return 0.5 * (qa + dist.quantile(spec, b))
    if kind == "uwa":
        hi = 1.0 / (1.0 + g)
        if e == hi:
            return 0.5 * (dist.quantile(spec, g * e) + dist.quantile(spec, 1 - e))
        # mean over t of Q(g t)/2 + Q(1 - t)/2
        upper = _integrate_q(spec, 1 - hi, 1 - e)
        lower = _integrate_q(spec, g * e, g * hi) / g if g > 0 else (hi - e) * dist.support_min(spec)
        return 0.5 * (upper + lower) / (hi - e)
    raise AssertionError(kind)


def asymptotic_wl(spec, w, method="auto", n_cal=DEFAULT_N_CAL, seed=0):
    """Population value of the WL ``w`` under ``spec``.

    Parameters
    ----------
    spec : DistributionSpec
    w : WLSpec
    method : {"auto", "quadrature", "quasi"}
        ``"quadrature"`` integrates the quantile function and is available
        for quantile, trimmed, Winsorized and quantile-average kinds.
        ``"quasi"`` evaluates the WL on a deterministic low-discrepancy
        sample of size ``n_cal``; the approximation error is of order
        ``n_cal ** -0.5`` or better.  ``"auto"`` picks quadrature when
        possible.
    """
    if method == "auto":
        method = QUADRATURE if w.kind in _INTEGRAL_KINDS else LARGE_N_QUASI
    if method == QUADRATURE:
        if w.kind not in _INTEGRAL_KINDS:
            raise DomainError(f"{w.kind} has no quantile-integral form; use method='quasi'")
        return float(_quad_wl(spec, w))
    if method == LARGE_N_QUASI:
        if w.kind == "ref":
            return float(_quad_wl(spec, w))
        if w.kind in ("mom", "huber") and not _mean_exists(spec):
            raise InfiniteMomentError(f"{w.kind} needs a finite mean")
        return float(evaluate_wl(quasi_sample(spec, n_cal, seed), w))
    raise DomainError(f"unknown method {method!r}")
