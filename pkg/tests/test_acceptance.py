"""End-to-end acceptance checks, one test (or parametrized group) per criterion.

The slow Monte Carlo criteria run at their full stated sizes.  A PASS/FAIL
line per criterion is printed in the terminal summary.
"""

import json
import math
import os
import subprocess
import sys
from fractions import Fraction

import numpy as np
import pytest

from invmoments import calibration as cal
from invmoments import distributions as dist
from invmoments import harness
from invmoments.invariant import FixedPointConfig, KernelCache, fixed_point_kurt, qkm, rkm
from invmoments.lstats import Sample, WLSpec, empirical_cdf_value, sample_quantile
from invmoments.ustats import LUSpec, adjust_breakdown, exact_u_statistic, lu_statistic

EXP = dist.DistributionSpec("exponential")
N = 5184


def detail(record_property, text):
    record_property("detail", text)


def _textbook_unbiased(x, k):
    x = [Fraction(v) for v in x]
    n = len(x)
    mean = sum(x) / n
    m = {j: sum((v - mean) ** j for v in x) / n for j in (2, 3, 4)}
    if k == 2:
        return m[2] * n / (n - 1)
    if k == 3:
        return m[3] * n * n / ((n - 1) * (n - 2))
    return (n * (n * n - 2 * n + 3) * m[4] - 3 * n * (2 * n - 3) * m[2] ** 2) / ((n - 1) * (n - 2) * (n - 3))


def _bm_d():
    ref = WLSpec("ref", value=cal.bm_exponential())
    d_rm = cal.d_rm_general(EXP, ref, WLSpec("median"))
    d_qm = cal.d_qm_general(EXP, WLSpec("ref", value=cal.bm_exponential(), epsilon=1 / 24),
                            gamma=1, epsilon=1 / 24)
    return d_rm, d_qm


@pytest.mark.criterion(1, "breakdown arithmetic")
def test_c01_breakdown(record_property):
    got = {k: adjust_breakdown(Fraction(1, 24), k) for k in (2, 3, 4)}
    detail(record_property, ", ".join(f"k={k}: {v}" for k, v in got.items()))
    assert got == {2: Fraction(47, 576), 3: Fraction(1657, 13824), 4: Fraction(51935, 331776)}
    assert all(isinstance(v, Fraction) for v in got.values())


@pytest.mark.criterion(2, "closed-form d oracles")
def test_c02_closed_forms(record_property):
    grid = np.linspace(0.03, 0.97, 20)
    worst_rm = worst_qm = worst_par = 0.0
    for p1 in grid:
        for p2 in grid:
            if abs(p1 - p2) < 1e-12:
                continue
            w1, w2 = WLSpec("qp", p=p1), WLSpec("qp", p=p2)
            worst_rm = max(worst_rm, abs(cal.d_rm_general(EXP, w1, w2) - cal.d_rm_closed_exponential(p1, p2)))
            g = p2 / (1 - p2)
            # clamping window [g*eps, 1-eps] must contain p1 and the pivot p2
            eps = min(p1, 1 - p1, p2, 1 - p2) / (2 * max(g, 1.0))
            gen = cal.d_qm_general(EXP, WLSpec("qp", p=p1, gamma=g), gamma=g, epsilon=eps)
            worst_qm = max(worst_qm, abs(gen - cal.d_qm_closed_exponential(p1, p2)))
            worst_par = max(
                worst_par,
                abs(cal.d_rm_closed_pareto(p1, p2, 1e6) - cal.d_rm_closed_exponential(p1, p2)),
                abs(cal.d_qm_closed_pareto(p1, p2, 1e6) - cal.d_qm_closed_exponential(p1, p2)),
            )
    detail(record_property, f"max err rm {worst_rm:.1e}, qm {worst_qm:.1e}, pareto limit {worst_par:.1e}")
    assert worst_rm <= 1e-10 and worst_qm <= 1e-10
    assert worst_par <= 1e-4


@pytest.mark.criterion(3, "BM constants")
def test_c03_bm_constants(record_property):
    d_rm, d_qm = _bm_d()
    detail(record_property, f"d_rm={d_rm:.6f} d_qm={d_qm:.6f}")
    assert round(d_rm, 3) == 0.103
    assert round(d_qm, 3) == 0.088


def _consistency_report(family, estimators):
    cfg = harness.EvalConfig(families={family: None}, estimators=estimators, n_finite=N,
                             reps_finite=1000, asymptotic=False, seed=0)
    return harness.run_eval(cfg)


@pytest.fixture(scope="module")
def exp_report():
    return _consistency_report("exponential", ["rm_exp", "qm_exp"])


@pytest.mark.criterion(4, "rm consistency on exponential")
def test_c04_rm_consistency(exp_report, record_property):
    r = exp_report.record("rm_exp", "exponential")
    detail(record_property, f"std bias {r.std_bias:+.5f}, 3 SE {3 * r.mc_se:.5f}")
    assert abs(r.std_bias) < 0.01
    assert abs(r.std_bias) < 3 * r.mc_se


@pytest.mark.criterion(5, "qm consistency on exponential")
def test_c05_qm_consistency(exp_report, record_property):
    r = exp_report.record("qm_exp", "exponential")
    detail(record_property, f"std bias {r.std_bias:+.5f}, clamped {r.clamped}")
    assert abs(r.std_bias) < 0.012
    assert r.clamped == 0


@pytest.mark.criterion(6, "symmetric coincidence on gaussian")
def test_c06_symmetric(record_property):
    d_rm, d_qm = _bm_d()
    sym = WLSpec.parse("tm:eps=1/24")
    rm, qm = [], []
    for r in range(1000):
        x = dist.sample(dist.DistributionSpec("gaussian"), N, np.random.default_rng([6, r]))
        c = KernelCache(x)
        rm.append(rkm(x, 1, d_rm, sym, WLSpec("median"), cache=c))
        qm.append(qkm(x, 1, d_qm, sym, gamma=1, epsilon=1 / 24, cache=c))
    lines = []
    for name, vals in (("rm", rm), ("qm", qm)):
        bias, se = np.mean(vals), np.std(vals, ddof=1) / math.sqrt(len(vals))
        lines.append((name, bias, se))
    detail(record_property, ", ".join(f"{n} bias {b:+.5f} (3 SE {3 * s:.5f})" for n, b, s in lines))
    for _, bias, se in lines:
        assert abs(bias) < 3 * se


@pytest.mark.criterion(7, "U-statistic oracle")
def test_c07_u_oracle(record_property):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(4, 13))
        x = rng.normal(size=n) * rng.uniform(0.5, 3)
        for k in (2, 3, 4):
            expect = float(_textbook_unbiased(x.tolist(), k))
            worst = max(worst, abs(exact_u_statistic(x, k) - expect) / max(1.0, abs(expect)))
    detail(record_property, f"max err {worst:.1e}")
    assert worst <= 1e-10


@pytest.mark.criterion(8, "quantile round trip")
def test_c08_round_trip(record_property):
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 500))
        s = Sample(rng.standard_normal(n))
        for scheme, grid in (("mode", np.linspace(0, 1, 257)), ("hf", np.linspace(1 / n, 1, 257))):
            for p in grid:
                worst = max(worst, abs(empirical_cdf_value(s, sample_quantile(s, p, scheme), scheme) - p))
    detail(record_property, f"max err {worst:.1e}")
    assert worst <= 1e-12


@pytest.fixture(scope="module")
def tables():
    return cal.default_tables()


@pytest.mark.criterion(9, "fixed-point kurtosis on weibull")
def test_c09_envelope_check(tables, record_property):
    meta = tables.lookup("rm", 4).meta
    grid = cal.GridConfig.for_family("weibull")
    assert (meta["delta"], meta["C"], meta["mu_lower"]) == (grid.delta, grid.count, 3.0)
    ratios = {e: cal.check_envelope(tables, "weibull", e) for e in ("rm", "qm")}
    worst = {e: max(r for _, r in v) for e, v in ratios.items()}
    detail(record_property, "envelope " + ", ".join(f"{e} {v:.5f}" for e, v in worst.items()))
    assert all(v < 1 for v in worst.values())


@pytest.mark.parametrize("alpha", [1.0, 1.5, 2.5])
@pytest.mark.criterion(9, "fixed-point kurtosis on weibull")
def test_c09_fixed_point(alpha, tables, record_property):
    spec = dist.DistributionSpec("weibull", alpha)
    truth = dist.population_moments(spec).kurtosis
    vals, iters, edge = [], [], 0
    cfg = FixedPointConfig(maxit=100, delta=1e-4)
    for r in range(200):
        x = dist.sample(spec, N, np.random.default_rng([9, r]))
        res = fixed_point_kurt(x, tables, cfg)
        vals.append(res.value)
        iters.append(res.iterations)
        edge += res.boundary
    rel = np.mean(vals) / truth - 1
    detail(record_property, f"alpha={alpha}: kurt {np.mean(vals):.4f} vs {truth:.4f} ({rel:+.2%}), "
                            f"max iter {max(iters)}, at table edge {edge}/200")
    assert max(iters) < 50
    assert abs(rel) < 0.05


@pytest.fixture(scope="module")
def transfer_report(tables):
    rows = [3.5, 6.0, 9.0]
    cfg = harness.EvalConfig(families={"gamma": rows, "lognormal": rows}, estimators=["rm", "qm", "median"],
                             n_finite=N, reps_finite=200, asymptotic=False, seed=10, tables=tables)
    return harness.run_eval(cfg)


@pytest.mark.parametrize("family", ["gamma", "lognormal"])
@pytest.mark.criterion(10, "cross-family transfer")
def test_c10_transfer(family, transfer_report, record_property):
    bad = []
    parts = []
    for key in (3.5, 6.0, 9.0):
        med = abs(transfer_report.record("median", family, kurtosis=key).std_bias)
        for e in ("rm", "qm"):
            b = abs(transfer_report.record(e, family, kurtosis=key).std_bias)
            parts.append(f"{e}@{key:g} {b:.4f}")
            if not (b < 0.05 and b < med):
                bad.append((e, key, b, med))
        parts.append(f"median@{key:g} {med:.4f}")
    detail(record_property, f"{family}: " + " ".join(parts))
    assert not bad


@pytest.mark.criterion(11, "quasi-bootstrap stability")
def test_c11_bootstrap_stability(record_property):
    spec = dist.DistributionSpec("weibull", 1.5)
    lu = LUSpec.for_target(2, "tm:eps=1/24")
    samples = [dist.sample(spec, N, np.random.default_rng([11, s])) for s in range(50)]
    ses = {}
    for size in (270, 2765, 27650):
        vals = [lu_statistic(x, lu, size=size, seed=0) for x in samples]
        ses[size] = float(np.std(vals, ddof=1))
    spread = max(ses.values()) / min(ses.values()) - 1
    detail(record_property, ", ".join(f"{k}: {v:.5f}" for k, v in ses.items()) + f"; spread {spread:.1%}")
    assert spread < 0.10


@pytest.mark.criterion(12, "thread-count determinism")
def test_c12_determinism(tmp_path, record_property):
    cfg = {
        "families": {"exponential": None, "weibull": [4.0, 6.0]},
        "estimators": ["mean", "median", "rm", "qvar"],
        "n_finite": N, "reps_finite": 40,
        "n_asymptotic": 2**16, "reps_asymptotic": 2, "bs_size_asymptotic": 2**15,
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    outs = []
    for threads in (1, 8):
        out = tmp_path / f"t{threads}.csv"
        env = dict(os.environ, INVMOM_THREADS=str(threads))
        proc = subprocess.run([sys.executable, "-m", "invmoments", "evaluate", "--config", str(path),
                               "--seed", "12", "--out", str(out)], env=env, capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        outs.append(out.read_bytes())
    detail(record_property, f"{len(outs[0].splitlines()) - 1} rows, identical={outs[0] == outs[1]}")
    assert outs[0] == outs[1]
