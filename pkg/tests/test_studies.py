import math

import pytest

from cfmediate.dgp import DGPConfig
from cfmediate.errors import ConfigError
from cfmediate.stats import pivoted_cholesky
from cfmediate.studies import (
    MC_COLUMNS,
    calibrate,
    calibration_report,
    mc_study,
    sweep,
    sweep_sigma,
    write_rows,
)

SMALL = DGPConfig(n=800, seed=4)


def test_mc_smoke_row_count():
    res = mc_study(SMALL, 2, ["conventional", "parametric-cf"], oracle_n=20_000)
    assert len(res.rows) == 2 * 2 * 5
    assert set(res.rows[0]) == set(MC_COLUMNS)
    r = res.rows[0]
    assert r["error"] == pytest.approx(r["estimate"] - r["truth"])


def test_mc_worker_invariance(tmp_path):
    a = mc_study(SMALL, 6, ["conventional", "semiparametric_cf"], workers=1, oracle_n=20_000)
    b = mc_study(SMALL, 6, ["conventional", "semiparametric_cf"], workers=8, oracle_n=20_000)
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    write_rows(a.rows, MC_COLUMNS, pa)
    write_rows(b.rows, MC_COLUMNS, pb)
    assert pa.read_bytes() == pb.read_bytes()


def test_mc_rejects():
    with pytest.raises(ConfigError):
        mc_study(SMALL, 1, ["conventional"])
    with pytest.raises(ConfigError):
        mc_study(SMALL, 2, ["bogus"])
    with pytest.raises(ConfigError):
        mc_study(SMALL, 2, [])


def test_mc_failures_logged_not_fatal():
    # tiny samples make some semi-parametric fits run out of support
    res = mc_study(DGPConfig(n=30, seed=1), 5, ["semiparametric_cf"], oracle_n=10_000)
    assert len(res.rows) == 25
    bad = [r for r in res.rows if r["status"] != "ok"]
    assert res.failures * 5 == len(bad)
    assert all(math.isnan(r["estimate"]) for r in bad)


@pytest.mark.parametrize("corr", [-1.0, -0.25, 0.0, 1.0])
def test_sweep_sigma_corr(corr):
    s = sweep_sigma(SMALL.sigma, "corr_u0u1", corr)
    assert s[0, 0] == 1.0 and s[1, 1] == 2.25
    assert s[0, 1] == pytest.approx(corr * 1.5)
    pivoted_cholesky(s)


def test_sweep_sigma_sd():
    s = sweep_sigma(SMALL.sigma, "sd_u1", 2.0)
    assert s[1, 1] == 4.0 and s[0, 1] == pytest.approx(0.5 * 2.0)


def test_sweep_rows_and_skips():
    rows, skipped = sweep(SMALL, "corr_u0u1", [1.5, 0.5], ["conventional"], b=20, oracle_n=20_000)
    assert [s["point"] for s in skipped] == [0]
    assert rows[0]["status"] == "skipped-not-psd"
    ok = [r for r in rows if r["status"] == "ok"]
    assert len(ok) == 5
    for r in ok:
        assert r["ci_lower"] <= r["ci_upper"] and r["covered"] in (0, 1)
    rows, skipped = sweep(SMALL, "sd_u1", [-1.0], ["conventional"], b=0, oracle_n=10_000)
    assert len(skipped) == 1


def test_sweep_rejects_empty_grid():
    with pytest.raises(ConfigError):
        sweep(SMALL, "corr_u0u1", [], ["conventional"])
    with pytest.raises(ConfigError):
        sweep(SMALL, "var_u0", [0.1], ["conventional"])


def test_calibration_selects_default_variant():
    res = calibrate(DGPConfig(seed=2), oracle_n=200_000)
    by = {r["variant"]: r for r in res}
    assert by["roy_cost_reversed"]["direction"] == 1
    assert by["roy_derived"]["direction"] == -1 and by["direct_index"]["direction"] == -1
    assert not by["roy_derived"]["matches"] and not by["direct_index"]["matches"]
    text = calibration_report(res, oracle_n=200_000)
    assert "roy_cost_reversed" in text and text.count("\n| ") >= 4
