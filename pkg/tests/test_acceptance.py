"""End-to-end acceptance checks. Each test prints one PASS/FAIL line.

Monte Carlo seeds are fixed; the long studies (criteria 4 and 6) take several
minutes on a single core and use every available core when there are more.
"""

import math
import os
import time

import numpy as np
import pytest

from cfmediate.cf import gamma_bar, lambda0, lambda1
from cfmediate.dgp import DGPConfig, bias_decomposition, oracle_truths, simulate
from cfmediate.inference import bootstrap
from cfmediate.stats import normal_cdf, normal_inv_cdf, ols_fit, probit_loglik, probit_score, rng_split
from cfmediate.studies import MC_COLUMNS, mc_study, study_truths, sweep, write_rows

WORKERS = os.cpu_count() or 1


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {number}: {'PASS' if ok else 'FAIL'} | {detail}")
        return ok

    return emit


def test_criterion_1_oracle_truths(report):
    start = time.perf_counter()
    _, table = simulate(DGPConfig(n=1_000_000, seed=101))
    t = oracle_truths(table)
    elapsed = time.perf_counter() - start
    checks = {
        "p_d1": abs(t.p_d1 - 0.379) <= 0.005,
        "complier_share": abs(t.complier_share - 0.6577) <= 0.005,
        "ate": abs(t.ate - 2.60) <= 0.02,
        "ade": abs(t.ade - 1.38) <= 0.02,
        "aie": abs(t.aie - 1.22) <= 0.02,
        "runtime": elapsed < 120,
    }
    ok = report(
        1,
        all(checks.values()),
        f"P(D=1)={t.p_d1:.4f} compliers={t.complier_share:.4f} ATE={t.ate:.4f} "
        f"ADE={t.ade:.4f} AIE={t.aie:.4f} direction={t.direction:+d} ({elapsed:.1f}s)",
    )
    assert ok, checks


def test_criterion_2_normal_errors(report):
    res = mc_study(DGPConfig(n=5000, seed=2024), 500, ["conventional", "parametric_cf"], workers=WORKERS)
    s = res.summary()
    conv = [s[("conventional", k)] for k in ("ade", "aie")]
    cf = [s[("parametric_cf", k)] for k in ("ade", "aie")]
    conv_ok = all(abs(c["mean_error"]) > 3 * c["mc_se"] for c in conv)
    cf_ok = all(abs(c["mean_error"]) <= 0.05 for c in cf)
    ok = report(
        2,
        conv_ok and cf_ok and res.failures == 0,
        "conventional ADE/AIE mean error {:+.4f}/{:+.4f} (MC SE {:.4f}/{:.4f}); "
        "parametric CF {:+.4f}/{:+.4f}; failures={}".format(
            conv[0]["mean_error"], conv[1]["mean_error"], conv[0]["mc_se"], conv[1]["mc_se"],
            cf[0]["mean_error"], cf[1]["mean_error"], res.failures,
        ),
    )
    assert ok


def test_criterion_3_uniform_errors(report):
    cfg = DGPConfig(n=5000, seed=2025, error_family="uniform_copula")
    res = mc_study(cfg, 500, ["parametric_cf", "semiparametric_cf"], workers=WORKERS)
    s = res.summary()
    semi = [s[("semiparametric_cf", k)] for k in ("ade", "aie")]
    para = [s[("parametric_cf", k)] for k in ("ade", "aie")]
    semi_ok = all(abs(c["mean_error"]) <= 0.07 for c in semi)
    para_ok = any(abs(c["mean_error"]) > 3 * c["mc_se"] for c in para)
    ok = report(
        3,
        semi_ok and para_ok,
        "semi-parametric ADE/AIE mean error {:+.4f}/{:+.4f}; parametric {:+.4f}/{:+.4f} "
        "(|err|/MC SE {:.1f}/{:.1f}); failures={}".format(
            semi[0]["mean_error"], semi[1]["mean_error"], para[0]["mean_error"], para[1]["mean_error"],
            abs(para[0]["mean_error"]) / para[0]["mc_se"], abs(para[1]["mean_error"]) / para[1]["mc_se"],
            res.failures,
        ),
    )
    assert ok


def _by(rows, method, statistic):
    return [r for r in rows if r["method"] == method and r["statistic"] == statistic and r["status"] == "ok"]


def test_criterion_4_sweeps(report):
    base = DGPConfig(n=5000, seed=77)
    methods = ["conventional", "parametric_cf"]
    corr_grid = list(np.linspace(-1.0, 1.0, 9))
    sd_grid = [0.0, 0.5, 1.0, 1.5, 2.0]
    corr_rows, corr_skip = sweep(base, "corr_u0u1", corr_grid, methods, b=1000, workers=WORKERS)
    sd_rows, sd_skip = sweep(base, "sd_u1", sd_grid, methods, b=1000, workers=WORKERS)
    details, ok = [], not corr_skip and not sd_skip
    for name, rows, npts in (("corr", corr_rows, 9), ("sd", sd_rows, 5)):
        for stat in ("ade", "aie"):
            cov = sum(r["covered"] for r in _by(rows, "parametric_cf", stat))
            ok &= cov >= math.ceil(0.8 * npts)
            details.append(f"CF {stat} covers {cov}/{npts} {name} points")
    for stat in ("ade", "aie"):
        far = [r for r in _by(corr_rows, "conventional", stat) if abs(r["value"]) >= 0.25 - 1e-12]
        outside = sum(abs(r["estimate"] - r["truth"]) > 2 * r["se"] for r in far)
        ok &= outside >= 5
        details.append(f"OLS {stat} outside truth+-2SE at {outside}/{len(far)} |corr|>=0.25 points")
    assert report(4, ok, "; ".join(details))


def test_criterion_5_decomposition_identity(report, big_table):
    _, table = big_table
    dec = bias_decomposition(table)
    res = {k: abs(getattr(dec, k).residual) for k in ("direct", "indirect")}
    ok = report(
        5,
        max(res.values()) < 1e-3,
        "residual direct={:.2e} indirect={:.2e}; direct: CM={:.4f} ADE={:.4f} SB={:+.4f} GD={:+.4f}; "
        "indirect: CM={:.4f} AIE={:.4f} SB={:+.4f} GD={:+.4f}".format(
            res["direct"], res["indirect"],
            dec.direct.cm_estimand, dec.direct.effect, dec.direct.selection_bias, dec.direct.group_differences,
            dec.indirect.cm_estimand, dec.indirect.effect, dec.indirect.selection_bias,
            dec.indirect.group_differences,
        ),
    )
    assert ok


def test_criterion_6_bootstrap_coverage(report):
    seed, outer, b = 606, 200, 400
    cfg = DGPConfig(n=5000, seed=seed)
    truth = study_truths(cfg, seed).ade
    hits, failures = 0, 0
    for r in range(outer):
        data, _ = simulate(cfg, rng=rng_split(seed, (0, r)))
        res = bootstrap(data, "parametric_cf", b, seed, stream=(2, r), workers=WORKERS)
        _, lo, hi = res.get("ade")
        hits += lo <= truth <= hi
        failures += res.failures
    rate = hits / outer
    ok = report(6, 0.90 <= rate <= 0.98, f"ADE 95% CI coverage {hits}/{outer} = {rate:.3f}; failed replications={failures}")
    assert ok


def test_criterion_7_kernel_properties(report):
    r = np.random.default_rng(7)
    p = np.linspace(0.01, 0.99, 99)
    checks = {}
    lo = r.uniform(0.01, 0.6, 200)
    hi = lo + r.uniform(0.01, 0.39, 200)
    tele = np.abs(gamma_bar(lo, hi) * (hi - lo) + lambda1(lo) * lo - lambda1(hi) * hi)
    checks["gamma telescoping"] = float(tele.max())
    checks["lambda relation"] = float(np.max(np.abs(lambda1(p) + lambda0(p) * (1 - p) / p)))

    from scipy import integrate

    phi = lambda t: math.exp(-0.5 * t * t) / math.sqrt(2 * math.pi)  # noqa: E731
    quad_err = 0.0
    for q in np.arange(1, 10) / 10:
        c = float(normal_inv_cdf(q))
        up = integrate.quad(lambda t: t * phi(t), c, np.inf, epsabs=1e-14)[0] / (1 - q)
        down = integrate.quad(lambda t: t * phi(t), -np.inf, c, epsabs=1e-14)[0] / q
        quad_err = max(quad_err, abs(float(lambda0(q)) - up), abs(float(lambda1(q)) - down))
    checks["lambda quadrature"] = quad_err

    n = 500
    X = np.column_stack([np.ones(n), r.normal(size=n), r.integers(0, 2, n)])
    d = (r.uniform(size=n) < 0.4).astype(float)
    rel, h = 0.0, 1e-6
    for _ in range(20):
        beta = r.normal(scale=0.7, size=3)
        g = probit_score(X, d, beta)
        fd = np.array([(probit_loglik(X, d, beta + h * e) - probit_loglik(X, d, beta - h * e)) / (2 * h) for e in np.eye(3)])
        rel = max(rel, float(np.max(np.abs(fd - g) / np.maximum(np.abs(g), 1.0))))
    checks["probit gradient"] = rel

    ols = 0.0
    for _ in range(20):
        A = r.normal(size=(50, 4))
        bb = r.normal(size=4)
        ols = max(ols, float(np.max(np.abs(ols_fit(A, A @ bb).coefficients - bb))))
    checks["ols recovery"] = ols
    x = np.linspace(-6, 6, 2001)
    checks["cdf round trip"] = float(np.max(np.abs(normal_inv_cdf(normal_cdf(x)) - x)))

    limits = {
        "gamma telescoping": 1e-14,
        "lambda relation": 1e-12,
        "lambda quadrature": 1e-9,
        "probit gradient": 1e-6,
        "ols recovery": 1e-10,
        "cdf round trip": 1e-8,
    }
    ok = all(checks[k] < limits[k] for k in limits)
    assert report(7, ok, "; ".join(f"{k} {checks[k]:.1e} (< {limits[k]:.0e})" for k in limits))


def test_criterion_8_determinism(report, tmp_path):
    cfg = DGPConfig(n=2000, seed=8)
    methods = ["conventional", "parametric_cf", "semiparametric_cf"]
    paths = []
    for w in (1, 8):
        res = mc_study(cfg, 16, methods, workers=w, oracle_n=100_000)
        path = tmp_path / f"mc{w}.csv"
        write_rows(res.rows, MC_COLUMNS, path)
        paths.append(path)
    mc_same = paths[0].read_bytes() == paths[1].read_bytes()
    data, _ = simulate(cfg)
    boots = [bootstrap(data, m, 40, seed=8, workers=w) for m in methods for w in (1, 8)]
    boot_same = all(
        np.array_equal(boots[i].draws, boots[i + 1].draws) and np.array_equal(boots[i].se, boots[i + 1].se)
        for i in range(0, len(boots), 2)
    )
    ok = report(8, mc_same and boot_same, f"mc-study CSV identical={mc_same}; bootstrap draws identical={boot_same} (1 vs 8 workers)")
    assert ok
