"""Parametric families used as data models and as consistent distributions.

Every family is a shape-scale(-location) family: ``X = location + scale * Z``
where ``Z`` follows the standard member with the given shape.  Quantiles and
CDFs are vectorised over numpy arrays.  Population moments are evaluated in
extended precision (mpmath) because central moments up to order eight are
needed for kernel standard deviations and suffer from cancellation in double
precision for near-degenerate shapes.

Parameterisations
-----------------
exponential       scale = lambda
weibull           shape = alpha, scale = lambda
gamma             shape = alpha, scale = theta
pareto            shape = alpha, scale = x_m (minimum of the support)
lognormal         shape = sigma, scale = exp(mu) (the median)
gengauss          shape = beta, scale = alpha, location = mu
gaussian          scale = sigma, location = mu
uniform           scale = width, location = lower end
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import mpmath as mp
import numpy as np
from scipy import optimize, special

from . import _kernels
from .errors import DomainError, InfiniteMomentError, RangeError

FAMILIES = (
    "exponential",
    "weibull",
    "gamma",
    "pareto",
    "lognormal",
    "gengauss",
    "gaussian",
    "uniform",
)

_ALIASES = {
    "exp": "exponential",
    "generalized_gaussian": "gengauss",
    "generalizedgaussian": "gengauss",
    "gg": "gengauss",
    "normal": "gaussian",
    "norm": "gaussian",
}

SHAPED = frozenset({"weibull", "gamma", "pareto", "lognormal", "gengauss"})

# Lower ends of the kurtosis grids on which the families are evaluated.
KURTOSIS_GRID_START = {
    "weibull": 3.0,
    "gamma": 3.0,
    "lognormal": 3.0,
    "gengauss": 3.0,
    "pareto": 9.0,
}

_MP_DPS = 80


def canonical_family(name):
    key = str(name).strip().lower()
    key = _ALIASES.get(key, key)
    if key not in FAMILIES:
        raise DomainError(f"unknown distribution family {name!r}; expected one of {FAMILIES}")
    return key


@dataclass(frozen=True)
class DistributionSpec:
    """A member of one of the supported parametric families."""

    family: str
    shape: float | None = None
    scale: float = 1.0
    location: float = 0.0

    def __post_init__(self):
        fam = canonical_family(self.family)
        object.__setattr__(self, "family", fam)
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise DomainError(f"scale must be positive and finite, got {self.scale}")
        if not math.isfinite(self.location):
            raise DomainError("location must be finite")
        if fam in SHAPED:
            if self.shape is None or not (self.shape > 0 and math.isfinite(self.shape)):
                raise DomainError(f"{fam} requires a positive finite shape, got {self.shape}")
            object.__setattr__(self, "shape", float(self.shape))
        else:
            object.__setattr__(self, "shape", None)
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "location", float(self.location))

    # convenience wrappers
    def quantile(self, p):
        return quantile(self, p)

    def cdf(self, x):
        return cdf(self, x)

    def moments(self):
        return population_moments(self)

    def with_scale(self, scale, location=None):
        return replace(self, scale=scale, location=self.location if location is None else location)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(
            family=d["family"],
            shape=d.get("shape"),
            scale=d.get("scale", 1.0),
            location=d.get("location", 0.0),
        )

    @classmethod
    def parse(cls, text):
        """Parse ``"weibull:shape=2,scale=1"`` style descriptors."""
        text = text.strip()
        fam, _, rest = text.partition(":")
        kwargs = {}
        if rest.strip():
            for item in rest.split(","):
                key, sep, val = item.partition("=")
                if not sep:
                    raise DomainError(f"malformed distribution parameter {item!r}")
                key = key.strip().lower()
                if key not in ("shape", "scale", "location", "loc"):
                    raise DomainError(f"unknown distribution parameter {key!r}")
                kwargs["location" if key == "loc" else key] = float(val)
        return cls(fam, **kwargs)

    def __str__(self):
        parts = []
        if self.shape is not None:
            parts.append(f"shape={self.shape:g}")
        parts.append(f"scale={self.scale:g}")
        if self.location:
            parts.append(f"location={self.location:g}")
        return f"{self.family}:{','.join(parts)}"


@dataclass(frozen=True)
class MomentSet:
    """Population mean, central moments and kernel standard deviations.

    ``central`` and ``sd_kernel`` are dicts keyed by order.  ``sd_kernel[1]``
    is the standard deviation of the distribution itself; higher entries are
    the standard deviations of the central-moment kernel distributions and
    are ``inf`` when the moment of order ``2k`` does not exist.
    """

    mean: float
    central: dict = field(default_factory=dict)
    skewness: float = 0.0
    kurtosis: float = 3.0
    sd_kernel: dict = field(default_factory=dict)

    @property
    def variance(self):
        return self.central[2]

    def target(self, order):
        """Population value estimated by a moment estimator of this order."""
        return self.mean if order == 1 else self.central[order]


# ---------------------------------------------------------------------------
# standard quantile / cdf per family (location 0, scale 1)


def _q0(family, shape, p):
    if family == "exponential":
        return -np.log1p(-p)
    if family == "weibull":
        return (-np.log1p(-p)) ** (1.0 / shape)
    if family == "gamma":
        return special.gammaincinv(shape, p)
    if family == "pareto":
        return np.exp(-np.log1p(-p) / shape)
    if family == "lognormal":
        return np.exp(shape * special.ndtri(p))
    if family == "gengauss":
        # tail mass 2*min(p, 1-p) keeps precision far into the lower tail
        tail = 2.0 * np.minimum(p, 1.0 - p)
        return np.sign(p - 0.5) * special.gammainccinv(1.0 / shape, tail) ** (1.0 / shape)
    if family == "gaussian":
        return special.ndtri(p)
    if family == "uniform":
        return np.array(p, dtype=float, copy=True)
    raise AssertionError(family)


def _f0(family, shape, z):
    with np.errstate(divide="ignore", invalid="ignore"):
        if family == "exponential":
            return np.where(z > 0, -np.expm1(-np.maximum(z, 0.0)), 0.0)
        if family == "weibull":
            return np.where(z > 0, -np.expm1(-np.maximum(z, 0.0) ** shape), 0.0)
        if family == "gamma":
            return np.where(z > 0, special.gammainc(shape, np.maximum(z, 0.0)), 0.0)
        if family == "pareto":
            return np.where(z > 1, -np.expm1(-shape * np.log(np.maximum(z, 1.0))), 0.0)
        if family == "lognormal":
            return np.where(z > 0, special.ndtr(np.log(np.maximum(z, 1e-300)) / shape), 0.0)
        if family == "gengauss":
            return 0.5 + 0.5 * np.sign(z) * special.gammainc(1.0 / shape, np.abs(z) ** shape)
        if family == "gaussian":
            return special.ndtr(z)
        if family == "uniform":
            return np.clip(z, 0.0, 1.0)
    raise AssertionError(family)


def quantile(spec, p):
    """Quantile function ``Q(p)`` of ``spec``.

    Parameters
    ----------
    spec : DistributionSpec
    p : float or array_like
        Probabilities strictly inside (0, 1).

    Returns
    -------
    float or ndarray
    """
    arr = np.asarray(p, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise DomainError("quantile requires 0 < p < 1")
    out = spec.location + spec.scale * _q0(spec.family, spec.shape, arr)
    return float(out) if out.ndim == 0 else out


def cdf(spec, x):
    """Cumulative distribution function. Values below the support give 0."""
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)):
        raise DomainError("cdf of NaN is undefined")
    z = (arr - spec.location) / spec.scale
    out = np.asarray(_f0(spec.family, spec.shape, z), dtype=float)
    return float(out) if out.ndim == 0 else out


def support_min(spec):
    if spec.family in ("exponential", "weibull", "gamma", "lognormal", "uniform"):
        return spec.location
    if spec.family == "pareto":
        return spec.location + spec.scale
    return -math.inf


def sample(spec, n, rng):
    """Inverse-transform sample of size ``n`` using ``rng`` (a numpy Generator)."""
    u = rng.random(n)
    # random() can return exactly 0.0
    u = np.where(u <= 0.0, np.nextafter(0.0, 1.0), u)
    return quantile(spec, u)


# ---------------------------------------------------------------------------
# moments


def _raw_moment_mp(family, shape, j):
    """E[Z^j] for the standard member, as an mpmath number (may be +inf)."""
    a = mp.mpf(shape) if shape is not None else None
    if family == "exponential":
        return mp.factorial(j)
    if family == "weibull":
        return mp.gamma(1 + mp.mpf(j) / a)
    if family == "gamma":
        return mp.rf(a, j)
    if family == "pareto":
        if a <= j:
            return mp.inf
        return a / (a - j)
    if family == "lognormal":
        return mp.exp(mp.mpf(j * j) * a * a / 2)
    if family == "gengauss":
        if j % 2:
            return mp.mpf(0)
        return mp.gamma(mp.mpf(j + 1) / a) / mp.gamma(1 / a)
    if family == "gaussian":
        if j % 2:
            return mp.mpf(0)
        return mp.fac2(j - 1) if j else mp.mpf(1)
    if family == "uniform":
        return mp.mpf(1) / (j + 1)
    raise AssertionError(family)


def _standard_central_mp(family, shape, upto):
    """Mean and central moments 0..upto of the standard member (mpmath)."""
    with mp.workdps(_MP_DPS):
        if family == "pareto":
            # work with the Lomax variable Z - 1 to avoid cancellation at large alpha
            a = mp.mpf(shape)
            raw = [mp.mpf(1)]
            for j in range(1, upto + 1):
                if a <= j:
                    raw.append(mp.inf)
                else:
                    raw.append(mp.factorial(j) / mp.rf(a - j, j))
            shift = mp.mpf(1)
        else:
            raw = [mp.mpf(1)] + [_raw_moment_mp(family, shape, j) for j in range(1, upto + 1)]
            shift = mp.mpf(0)
        m1 = raw[1]
        central = [mp.mpf(1), mp.mpf(0)]
        for j in range(2, upto + 1):
            if any(mp.isinf(r) for r in raw[: j + 1]):
                central.append(mp.inf)
                continue
            s = mp.mpf(0)
            for i in range(j + 1):
                s += mp.binomial(j, i) * raw[i] * (-m1) ** (j - i)
            central.append(s)
        return m1 + shift, central


def _finite_moment_order(spec):
    if spec.family == "pareto":
        return spec.shape
    return math.inf


def population_moments(spec, order=4):
    """Mean, central moments, skewness, kurtosis and kernel standard deviations.

    Raises
    ------
    InfiniteMomentError
        If a moment up to ``order`` does not exist (Pareto with
        ``shape <= order``).
    """
    if _finite_moment_order(spec) <= order:
        raise InfiniteMomentError(
            f"{spec.family} with shape {spec.shape} has no finite moment of order {order}"
        )
    mean0, c = _standard_central_mp(spec.family, spec.shape, 8)
    s = spec.scale
    central_f = [float(v) if mp.isfinite(v) else math.inf for v in c]
    mean = spec.location + s * float(mean0)
    central = {j: central_f[j] * s**j for j in range(2, order + 1)}
    with mp.workdps(_MP_DPS):
        skew = float(c[3] / c[2] ** mp.mpf(1.5)) if order >= 3 else math.nan
        kurt = float(c[4] / c[2] ** 2) if order >= 4 else math.nan
    sd_kernel = {}
    for k in range(1, 5):
        if not math.isfinite(central_f[min(2 * k, 8)]):
            sd_kernel[k] = math.inf
            continue
        var = _kernels.kernel_variance(k, central_f)
        sd_kernel[k] = math.sqrt(max(var, 0.0)) * s**k
    return MomentSet(mean=mean, central=central, skewness=skew, kurtosis=kurt, sd_kernel=sd_kernel)


def _skew_kurt(family, shape):
    """(skewness, kurtosis) of a standard member, in double precision."""
    _, c = _standard_central_mp(family, shape, 4)
    with mp.workdps(_MP_DPS):
        if mp.isinf(c[4]):
            return float(c[3] / c[2] ** 1.5) if mp.isfinite(c[3]) else math.inf, math.inf
        return float(c[3] / c[2] ** mp.mpf(1.5)), float(c[4] / c[2] ** 2)


def kurtosis_of(family, shape):
    return _skew_kurt(canonical_family(family), shape)[1]


def skewness_of(family, shape):
    return _skew_kurt(canonical_family(family), shape)[0]


# ---------------------------------------------------------------------------
# shape solving

_FIXED = {
    "exponential": (2.0, 9.0),
    "gaussian": (0.0, 3.0),
    "uniform": (0.0, 1.8),
}

# Minimum of the Weibull kurtosis curve; the lower-shape branch lies left of it.
_WEIBULL_KURT_ARGMIN = None


def _weibull_kurtosis_argmin():
    global _WEIBULL_KURT_ARGMIN
    if _WEIBULL_KURT_ARGMIN is None:
        res = optimize.minimize_scalar(
            lambda a: kurtosis_of("weibull", a), bounds=(2.5, 4.5), method="bounded",
            options={"xatol": 1e-12},
        )
        _WEIBULL_KURT_ARGMIN = (float(res.x), float(res.fun))
    return _WEIBULL_KURT_ARGMIN


def _solve_monotone(fun, target, lo, hi, name, interval):
    """Root of ``fun(x) = target`` on [lo, hi] (searched in log space)."""
    g = lambda t: fun(math.exp(t)) - target  # noqa: E731
    a, b = math.log(lo), math.log(hi)
    ga, gb = g(a), g(b)
    if ga == 0:
        return lo
    if gb == 0:
        return hi
    if np.sign(ga) == np.sign(gb):
        raise RangeError(f"{name} target {target} is not attainable; attainable interval {interval}", interval)
    t = optimize.brentq(g, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return math.exp(t)


def kurtosis_range(family):
    fam = canonical_family(family)
    if fam in _FIXED:
        k = _FIXED[fam][1]
        return (k, k)
    if fam == "weibull":
        return (_weibull_kurtosis_argmin()[1], math.inf)
    if fam in ("gamma", "lognormal"):
        return (3.0, math.inf)
    if fam == "pareto":
        return (9.0, math.inf)
    if fam == "gengauss":
        return (1.8, math.inf)
    raise AssertionError(fam)


def skewness_range(family):
    fam = canonical_family(family)
    if fam in _FIXED:
        s = _FIXED[fam][0]
        return (s, s)
    if fam == "weibull":
        return (0.0, math.inf)
    if fam in ("gamma", "lognormal"):
        return (0.0, math.inf)
    if fam == "pareto":
        return (2.0, math.inf)
    if fam == "gengauss":
        return (0.0, 0.0)
    raise AssertionError(fam)


def _check_fixed(fam, target, which):
    value = _FIXED[fam][0 if which == "skewness" else 1]
    if abs(target - value) <= 1e-8 * max(1.0, abs(value)):
        return None
    raise RangeError(f"{fam} only attains {which} {value}; got {target}", (value, value))


def shape_from_kurtosis(family, target_kurtosis):
    """Shape whose member has the requested kurtosis.

    Returns ``None`` for single-member families when the target matches their
    fixed kurtosis.  For the Weibull family, which has two solutions above
    its kurtosis minimum, the lower shape is returned.

    Raises
    ------
    RangeError
        If the target is outside the family's attainable interval.
    """
    fam = canonical_family(family)
    t = float(target_kurtosis)
    if fam in _FIXED:
        return _check_fixed(fam, t, "kurtosis")
    lo_k, hi_k = kurtosis_range(fam)
    if not (lo_k < t < hi_k):
        raise RangeError(f"{fam} kurtosis {t} outside attainable interval ({lo_k}, {hi_k})", (lo_k, hi_k))
    if fam == "gamma":
        return 6.0 / (t - 3.0)
    kurt = lambda a: kurtosis_of(fam, a)  # noqa: E731
    if fam == "weibull":
        amin = _weibull_kurtosis_argmin()[0]
        lo = 1e-3
        while kurt(lo) < t:
            lo /= 2
        return _solve_monotone(kurt, t, lo, amin, "weibull kurtosis", (lo_k, hi_k))
    if fam == "pareto":
        hi = 1e3
        while kurt(hi) > t:
            hi *= 10
        lo = 4.0 + 1e-9
        return _solve_monotone(kurt, t, lo, hi, "pareto kurtosis", (lo_k, hi_k))
    if fam == "lognormal":
        hi = 1.0
        while kurt(hi) < t:
            hi *= 2
        return _solve_monotone(kurt, t, 1e-6, hi, "lognormal kurtosis", (lo_k, hi_k))
    if fam == "gengauss":
        lo, hi = 0.05, 1e3
        while kurt(lo) < t:
            lo /= 2
        return _solve_monotone(kurt, t, lo, hi, "gengauss kurtosis", (lo_k, hi_k))
    raise AssertionError(fam)


def shape_from_skewness(family, target_abs_skewness):
    """Shape whose member has the requested absolute skewness (right-skewed branch)."""
    fam = canonical_family(family)
    t = abs(float(target_abs_skewness))
    if fam in _FIXED:
        return _check_fixed(fam, t, "skewness")
    lo_s, hi_s = skewness_range(fam)
    if fam == "gengauss":
        raise RangeError("gengauss is symmetric; skewness fixed at 0", (0.0, 0.0))
    if not (lo_s < t < hi_s):
        raise RangeError(f"{fam} skewness {t} outside attainable interval ({lo_s}, {hi_s})", (lo_s, hi_s))
    if fam == "gamma":
        return 4.0 / (t * t)
    skew = lambda a: skewness_of(fam, a)  # noqa: E731
    if fam == "weibull":
        lo, hi = 1e-2, 3.6
        while skew(lo) < t:
            lo /= 2
        while skew(hi) > t:
            hi *= 1.05
        return _solve_monotone(skew, t, lo, hi, "weibull skewness", (lo_s, hi_s))
    if fam == "pareto":
        hi = 1e3
        while skew(hi) > t:
            hi *= 10
        return _solve_monotone(skew, t, 3.0 + 1e-9, hi, "pareto skewness", (lo_s, hi_s))
    if fam == "lognormal":
        hi = 1.0
        while skew(hi) < t:
            hi *= 2
        return _solve_monotone(skew, t, 1e-8, hi, "lognormal skewness", (lo_s, hi_s))
    raise AssertionError(fam)


def from_kurtosis(family, target_kurtosis, scale=1.0, location=0.0):
    """Member of ``family`` with the given kurtosis."""
    shape = shape_from_kurtosis(family, target_kurtosis)
    return DistributionSpec(family, shape=shape, scale=scale, location=location)


def from_skewness(family, target_abs_skewness, scale=1.0, location=0.0):
    shape = shape_from_skewness(family, target_abs_skewness)
    return DistributionSpec(family, shape=shape, scale=scale, location=location)
