"""Monte Carlo bias, standard error and RMSE of moment estimators.

For every family and kurtosis grid row the harness draws replicate samples
by inverse transform, applies each estimator, and standardizes the errors by
the standard deviation of the matching central-moment kernel distribution
(the distribution itself for location estimators).  Large-n runs on
scrambled low-discrepancy samples stand in for asymptotic values.

Replicate ``r`` of row ``j`` of family ``f`` always uses the random stream
``SeedSequence([seed, f, j, stage, r])`` and results are reduced in a fixed order,
so reports do not depend on the number of worker threads.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import calibration as cal
from . import distributions as dist
from .errors import DomainError, InfiniteMomentError
from .invariant import KernelCache, estimate, qkm, rkm
from .lstats import WLSpec, evaluate_wl, quasi_uniform
from .ustats import h_statistic

THREADS_ENV = "INVMOM_THREADS"
CSV_COLUMNS = ("estimator", "family", "kurtosis", "n", "reps", "bias", "std_bias", "se", "rmse")


# ---------------------------------------------------------------------------
# estimator roster


@dataclass(frozen=True)
class Estimator:
    """A named estimator of the order-``order`` moment (0: standardized).

    ``fn(cache, tables)`` returns the estimate for the sample held by the
    :class:`KernelCache`, or ``(estimate, clamped)`` for estimators that
    clamp a percentile.  ``target`` is ``"skew"`` or ``"kurt"`` for
    standardized moments.
    """

    name: str
    order: int
    fn: object
    target: str | None = None


def _wl_estimator(name, wl):
    w = WLSpec.parse(wl)
    return Estimator(name, 1, lambda c, t: evaluate_wl(c.sample, w, c.scheme))


def _table_estimator(name, moment, method):
    order = {"mean": 1, "var": 2, "tm": 3, "fm": 4, "skew": 0, "kurt": 0}[moment]
    target = moment if order == 0 else None

    def fn(c, tables):
        if tables is None:
            raise DomainError(f"estimator {name} needs D tables")
        r = estimate(None, moment, method, tables=tables, cache=c)
        return r.estimate, r.clamped

    return Estimator(name, order, fn, target)


def _exp_estimators():
    wl1, wl2 = cal.exponential_bm_pair()
    ref = WLSpec("ref", value=cal.bm_exponential())
    spec = dist.DistributionSpec("exponential")
    d_rm = cal.d_rm_general(spec, ref, wl2)
    d_qm = cal.d_qm_general(spec, ref, gamma=1, epsilon=1 / 24)
    return [
        Estimator("rm_exp", 1, lambda c, t: rkm(c.sample, 1, d_rm, wl1, wl2, cache=c)),
        Estimator("qm_exp", 1, lambda c, t: _qi(qkm(c.sample, 1, d_qm, wl1, gamma=1, epsilon=1 / 24,
                                                    cache=c, full_output=True))),
    ]


def _qi(res):
    return res.value, res.clamped


def _registry():
    reg = {
        "mean": Estimator("mean", 1, lambda c, t: float(np.mean(c.sample.values))),
        "median": _wl_estimator("median", "median"),
        "tmean": _wl_estimator("tmean", "tm:eps=1/8"),
        "wmean": _wl_estimator("wmean", "wm:eps=1/8"),
        "hl": _wl_estimator("hl", "hl"),
        "huber": _wl_estimator("huber", "huber"),
        "mom": _wl_estimator("mom", "mom:b=8"),
        "var": Estimator("var", 2, lambda c, t: h_statistic(c.sample, 2)),
        "tm": Estimator("tm", 3, lambda c, t: h_statistic(c.sample, 3)),
        "fm": Estimator("fm", 4, lambda c, t: h_statistic(c.sample, 4)),
    }
    for e in _exp_estimators():
        reg[e.name] = e
    for method in ("rm", "qm"):
        reg[method] = _table_estimator(method, "mean", method)
        for moment, label in (("var", "var"), ("tm", "tm"), ("fm", "fm"), ("skew", "skew"), ("kurt", "kurt")):
            name = method[0] + label
            reg[name] = _table_estimator(name, moment, method)
    return reg


ESTIMATORS = None


def estimator(name):
    """Look up an estimator by name, or build a WL from ``"wl:<spec>"``."""
    global ESTIMATORS
    if isinstance(name, Estimator):
        return name
    if ESTIMATORS is None:
        ESTIMATORS = _registry()
    if name in ESTIMATORS:
        return ESTIMATORS[name]
    if name.startswith("wl:"):
        return _wl_estimator(name, name[3:])
    raise DomainError(f"unknown estimator {name!r}; known: {sorted(ESTIMATORS)}")


def estimator_names():
    estimator("mean")
    return sorted(ESTIMATORS)


# ---------------------------------------------------------------------------
# configuration


@dataclass
class EvalConfig:
    """Monte Carlo evaluation settings.

    ``families`` maps a family name to its kurtosis rows: a
    :class:`GridConfig`, an explicit list of kurtosis values, or ``None``
    for the family's default grid (single row for fixed families).
    """

    families: dict
    estimators: list
    n_finite: int = 5184
    n_asymptotic: int = 2**20
    reps_finite: int = 1000
    reps_asymptotic: int = 50
    weights: dict | None = None
    seed: int = 0
    bs_size: int = 2**16
    bs_size_asymptotic: int = 2**18
    asymptotic: bool = True
    finite: bool = True
    scale: float = 1.0
    tables: object = None
    threads: int | None = None

    def __post_init__(self):
        if self.finite and self.reps_finite < 2 or self.asymptotic and self.reps_asymptotic < 2:
            raise DomainError("reps must be >= 2")
        if not self.families:
            raise DomainError("no families to evaluate")
        if self.weights is None:
            self.weights = {f: 1.0 / len(self.families) for f in self.families}
        total = math.fsum(self.weights.values())
        if abs(total - 1.0) > 1e-9:
            raise DomainError(f"weights must sum to 1, got {total}")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        fams = {}
        for fam, rows in d.pop("families").items():
            if isinstance(rows, dict):
                rows = cal.GridConfig(**rows)
            fams[fam] = rows
        tables = d.pop("tables", None)
        if isinstance(tables, str):
            tables = cal.default_tables(tables[len("default:"):]) if tables.startswith("default:") \
                else cal.load_tables(tables)
        return cls(families=fams, tables=tables, **d)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _rows(family, rows):
    fam = dist.canonical_family(family)
    if fam in ("exponential", "gaussian", "uniform"):
        spec = dist.DistributionSpec(fam)
        return [(dist.population_moments(spec).kurtosis, spec)]
    if rows is None:
        rows = cal.GridConfig.for_family(fam)
    keys = rows.keys if isinstance(rows, cal.GridConfig) else list(rows)
    return [(float(k), dist.from_kurtosis(fam, k)) for k in keys]


def _thread_count(cfg):
    if cfg.threads is not None:
        return max(1, int(cfg.threads))
    env = os.environ.get(THREADS_ENV)
    return max(1, int(env)) if env else 1


# ---------------------------------------------------------------------------
# report


@dataclass(frozen=True)
class EvalRecord:
    """Summary of one (estimator, family, kurtosis, n) cell.

    ``bias`` is in data units; ``std_bias``, ``se`` and ``rmse`` are divided
    by the kernel standard deviation ``sigma``.  ``se`` is the standard
    deviation of the estimate across replications.
    """

    estimator: str
    family: str
    kurtosis: float
    n: int
    reps: int
    bias: float
    std_bias: float
    se: float
    rmse: float
    sigma: float = 1.0
    clamped: int = 0

    @property
    def mc_se(self):
        """Monte Carlo standard error of ``std_bias``."""
        return self.se / math.sqrt(self.reps)


@dataclass
class EvalReport:
    records: list = field(default_factory=list)
    weights: dict = field(default_factory=dict)
    n_finite: int | None = None
    n_asymptotic: int | None = None

    def select(self, estimator=None, family=None, n=None, kurtosis=None):
        out = []
        for r in self.records:
            if estimator is not None and r.estimator != estimator:
                continue
            if family is not None and r.family != dist.canonical_family(family):
                continue
            if n is not None and r.n != n:
                continue
            if kurtosis is not None and abs(r.kurtosis - kurtosis) > 1e-9:
                continue
            out.append(r)
        return out

    def record(self, estimator, family, n=None, kurtosis=None):
        recs = self.select(estimator, family, n, kurtosis)
        if len(recs) != 1:
            raise KeyError(f"{len(recs)} records match {estimator}/{family}/{n}/{kurtosis}")
        return recs[0]

    def _average(self, estimator, n, attr, family=None, weighted=False):
        fams = sorted({r.family for r in self.select(estimator, n=n)})
        if family is not None:
            fams = [dist.canonical_family(family)]
        per = {}
        for fam in fams:
            recs = self.select(estimator, fam, n)
            if recs:
                per[fam] = math.fsum(abs(getattr(r, attr)) for r in recs) / len(recs)
        if not per:
            return math.nan
        if weighted:
            w = {f: self.weights.get(f, 0.0) for f in per}
            tot = math.fsum(w.values())
            return math.fsum(per[f] * w[f] for f in per) / tot
        return math.fsum(per.values()) / len(per)

    def asab(self, estimator, family=None, weighted=False):
        """Average |standardized bias| over the grid at the asymptotic size."""
        return self._average(estimator, self.n_asymptotic, "std_bias", family, weighted)

    def asb(self, estimator, family=None, weighted=False):
        """Average |standardized bias| over the grid at the finite size."""
        return self._average(estimator, self.n_finite, "std_bias", family, weighted)

    def rmse(self, estimator, family=None, weighted=False):
        return self._average(estimator, self.n_finite, "rmse", family, weighted)

    def se(self, estimator, family=None, weighted=False):
        return self._average(estimator, self.n_finite, "se", family, weighted)

    def summary(self, weighted=False):
        names = sorted({r.estimator for r in self.records})
        return {
            e: {
                "ASAB": self.asab(e, weighted=weighted),
                "ASB": self.asb(e, weighted=weighted),
                "RMSE": self.rmse(e, weighted=weighted),
                "SE": self.se(e, weighted=weighted),
            }
            for e in names
        }

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            w.writerow([r.estimator, r.family, repr(r.kurtosis), r.n, r.reps, repr(r.bias),
                        repr(r.std_bias), repr(r.se), repr(r.rmse)])
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())


# ---------------------------------------------------------------------------
# running


def _finite_sample(spec, n, ss):
    return dist.sample(spec, n, np.random.default_rng(ss))


def _asymptotic_sample(spec, n, ss):
    seed = int(ss.generate_state(1)[0])
    return dist.quantile(spec, quasi_uniform(n, 1, seed)[:, 0])


def _one_rep(args):
    draw, spec, n, ss, ests, tables, bs_size = args
    x = draw(spec, n, ss)
    cache = KernelCache(x, bs_size, 0)
    out = []
    for e in ests:
        v = e.fn(cache, tables)
        out.append(v if isinstance(v, tuple) else (v, False))
    return out


def _truth(e, mom):
    if e.target == "skew":
        return mom.skewness, 1.0
    if e.target == "kurt":
        return mom.kurtosis, 1.0
    return mom.target(e.order), mom.sd_kernel[e.order]


def _summarise(e, fam, key, n, results, truth, sigma):
    vals = [float(v) for v, _ in results]
    clamped = sum(1 for _, c in results if c)
    reps = len(vals)
    err = [v - truth for v in vals]
    bias = math.fsum(err) / reps
    mean = math.fsum(vals) / reps
    var = math.fsum((v - mean) ** 2 for v in vals) / (reps - 1)
    mse = math.fsum(x * x for x in err) / reps
    return EvalRecord(e.name, fam, key, n, reps, bias, bias / sigma, math.sqrt(var) / sigma,
                      math.sqrt(mse) / sigma, sigma, clamped)


def run_eval(cfg):
    """Run the Monte Carlo study described by ``cfg``.

    Rows whose kernel standard deviation is infinite are skipped with a
    warning.

    Returns
    -------
    EvalReport
    """
    ests = [estimator(e) for e in cfg.estimators]
    tables = cfg.tables
    if tables is None and any(e.name[:1] in "rq" and not e.name.endswith("_exp") for e in ests):
        tables = cal.default_tables()
    report = EvalReport(weights={dist.canonical_family(f): w for f, w in cfg.weights.items()},
                        n_finite=cfg.n_finite if cfg.finite else None,
                        n_asymptotic=cfg.n_asymptotic if cfg.asymptotic else None)
    stages = []
    if cfg.finite:
        stages.append((0, _finite_sample, cfg.n_finite, cfg.reps_finite, cfg.bs_size))
    if cfg.asymptotic:
        stages.append((1, _asymptotic_sample, cfg.n_asymptotic, cfg.reps_asymptotic, cfg.bs_size_asymptotic))
    threads = _thread_count(cfg)
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        for fi, (family, rows) in enumerate(cfg.families.items()):
            fam = dist.canonical_family(family)
            for j, (key, spec) in enumerate(_rows(fam, rows)):
                spec = spec.with_scale(spec.scale * cfg.scale)
                try:
                    mom = dist.population_moments(spec)
                except InfiniteMomentError as exc:
                    warnings.warn(f"skipping {fam} row {key}: {exc}", stacklevel=2)
                    continue
                truths = [_truth(e, mom) for e in ests]
                keep = [i for i, (_, s) in enumerate(truths) if math.isfinite(s) and s > 0]
                for i in set(range(len(ests))) - set(keep):
                    warnings.warn(f"skipping {ests[i].name} on {fam} row {key}: infinite kernel sd",
                                  stacklevel=2)
                row_ests = [ests[i] for i in keep]
                if not row_ests:
                    continue
                for stage, draw, n, reps, bs in stages:
                    seeds = [np.random.SeedSequence([cfg.seed, fi, j, stage, r]) for r in range(reps)]
                    jobs = [(draw, spec, n, ss, row_ests, tables, bs) for ss in seeds]
                    results = list(pool.map(_one_rep, jobs)) if pool else [_one_rep(a) for a in jobs]
                    for col, i in enumerate(keep):
                        truth, sigma = truths[i]
                        vals = [res[col] for res in results]
                        report.records.append(_summarise(ests[i], fam, key, n, vals, truth, sigma))
    finally:
        if pool is not None:
            pool.shutdown()
    return report


def pseudo_max_bias(report_or_cfg, n=None):
    """Largest standardized |bias| over all families and rows, per estimator.

    Returns
    -------
    dict
        ``{estimator: (value, family, kurtosis)}``.
    """
    report = report_or_cfg if isinstance(report_or_cfg, EvalReport) else run_eval(report_or_cfg)
    if n is None:
        n = report.n_asymptotic if report.n_asymptotic is not None else report.n_finite
    out = {}
    for r in report.select(n=n):
        cur = out.get(r.estimator)
        if cur is None or abs(r.std_bias) > cur[0]:
            out[r.estimator] = (abs(r.std_bias), r.family, r.kurtosis)
    return out
