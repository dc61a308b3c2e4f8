"""Monte Carlo studies, parameter sweeps and first-stage calibration.

Random streams for a study seed ``s``::

    (0, r)            dataset of replication r          (mc_study)
    (0, g, r)         dataset r at grid point g          (sweep)
    (1,) / (1, g)     oracle table
    (2, g, r, j, b)   bootstrap replication b, method j  (sweep)

Every stream is a pure function of these ids, so results do not depend on the
worker count.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import partial

import numpy as np

from .dgp import FIRST_STAGE_VARIANTS, DGPConfig, oracle_truths, simulate
from .errors import ConfigError, MediationError, NotPSDError
from .estimators import ESTIMATORS
from .inference import bootstrap
from .model import STATISTICS
from .parallel import ordered_map
from .stats import pivoted_cholesky, rng_split

ORACLE_N = 1_000_000
MC_COLUMNS = ("rep", "method", "statistic", "estimate", "truth", "error", "status")
SWEEP_PARAMS = ("corr_u0u1", "sd_u1")
SWEEP_COLUMNS = (
    "point", "param", "value", "rep", "method", "statistic", "estimate", "truth",
    "error", "se", "ci_lower", "ci_upper", "covered", "status",
)


def _method_key(name):
    key = name.replace("-", "_")
    if key not in ESTIMATORS:
        raise ConfigError(f"unknown method {name!r}; choose from {sorted(ESTIMATORS)}")
    return key


def study_truths(config: DGPConfig, seed, stream=(1,), oracle_n=ORACLE_N):
    _, table = simulate(config.with_(n=int(oracle_n)), rng=rng_split(seed, stream))
    return oracle_truths(table)


def _fmt(v):
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return ""
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_rows(rows, columns, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


# ---------------------------------------------------------------- mc study


def _mc_rep(r, config, methods, seed):
    data, _ = simulate(config, rng=rng_split(seed, (0, r)))
    out = []
    for m in methods:
        try:
            out.append((m, ESTIMATORS[m](data).vector(), "ok"))
        except MediationError as exc:
            out.append((m, None, exc.code))
    return out


@dataclass(frozen=True)
class StudyResult:
    rows: list
    truths: object
    failures: int

    def estimates(self, method, statistic):
        return np.array(
            [
                r["estimate"]
                for r in self.rows
                if r["method"] == method and r["statistic"] == statistic and r["status"] == "ok"
            ],
            dtype=float,
        )

    def summary(self):
        """Mean error and its Monte Carlo standard error per (method, statistic)."""
        out = {}
        for r in self.rows:
            if r["status"] == "ok" and math.isfinite(r["error"]):
                out.setdefault((r["method"], r["statistic"]), []).append(r["error"])
        res = {}
        for key, errs in out.items():
            e = np.asarray(errs)
            se = e.std(ddof=1) / math.sqrt(e.size) if e.size > 1 else math.nan
            res[key] = {"mean_error": float(e.mean()), "mc_se": float(se), "reps": int(e.size)}
        return res


def mc_study(config: DGPConfig, reps, methods, seed=None, workers=1, oracle_n=ORACLE_N) -> StudyResult:
    """Simulate ``reps`` datasets and estimate each with every method.

    Returns long-format rows with columns :data:`MC_COLUMNS`; failed fits keep
    their rows with a blank estimate and the error code in ``status``.
    """
    if int(reps) < 2:
        raise ConfigError("reps must be >= 2")
    seed = config.seed if seed is None else int(seed)
    methods = [_method_key(m) for m in methods]
    if not methods:
        raise ConfigError("at least one method is required")
    truths = study_truths(config, seed, oracle_n=oracle_n)
    per_rep = ordered_map(partial(_mc_rep, config=config, methods=methods, seed=seed), range(int(reps)), workers)
    rows, failures = [], 0
    for r, results in enumerate(per_rep):
        for m, vec, status in results:
            failures += status != "ok"
            for j, s in enumerate(STATISTICS):
                truth = truths.statistic(s)
                est = vec[j] if vec is not None else math.nan
                rows.append(
                    {
                        "rep": r,
                        "method": m,
                        "statistic": s,
                        "estimate": est,
                        "truth": truth,
                        "error": est - truth,
                        "status": status,
                    }
                )
    return StudyResult(rows, truths, failures)


# ---------------------------------------------------------------- sweep


def sweep_sigma(base_sigma, param, value):
    """Covariance for one sweep point.

    ``corr_u0u1`` keeps both variances and sets Corr(U0, U1); ``sd_u1`` keeps
    Var(U0) and Corr(U0, U1) and sets the U1 standard deviation.
    """
    s = np.array(base_sigma, dtype=float)
    sd0, sd1 = math.sqrt(s[0, 0]), math.sqrt(s[1, 1])
    corr = s[0, 1] / (sd0 * sd1) if sd0 * sd1 > 0 else 0.0
    if param == "corr_u0u1":
        corr = float(value)
    elif param == "sd_u1":
        sd1 = float(value)
    else:
        raise ConfigError(f"param must be one of {SWEEP_PARAMS}")
    s[1, 1] = sd1 * sd1
    s[0, 1] = s[1, 0] = corr * sd0 * sd1
    return s


def sweep(
    config: DGPConfig,
    param,
    grid,
    methods,
    reps_per_point=1,
    b=1000,
    seed=None,
    level=0.95,
    workers=1,
    oracle_n=ORACLE_N,
):
    """Oracle truth, point estimates and bootstrap intervals across a grid.

    Returns ``(rows, skipped)``; grid values giving a non-PSD covariance (or a
    negative standard deviation) are skipped and listed in ``skipped``.
    """
    grid = list(grid)
    if not grid:
        raise ConfigError("grid must not be empty")
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"param must be one of {SWEEP_PARAMS}")
    seed = config.seed if seed is None else int(seed)
    methods = [_method_key(m) for m in methods]
    rows, skipped = [], []
    for g, value in enumerate(grid):
        try:
            if param == "sd_u1" and value < 0:
                raise NotPSDError("standard deviation must be non-negative")
            sigma = sweep_sigma(config.sigma, param, value)
            pivoted_cholesky(sigma)
            if param == "corr_u0u1" and abs(value) > 1:
                raise NotPSDError("correlation outside [-1, 1]")
        except NotPSDError as exc:
            skipped.append({"point": g, "value": value, "reason": str(exc)})
            rows.append(_skip_row(g, param, value))
            continue
        cfg = config.with_(sigma=sigma)
        truths = study_truths(cfg, seed, stream=(1, g), oracle_n=oracle_n)
        for r in range(int(reps_per_point)):
            data, _ = simulate(cfg, rng=rng_split(seed, (0, g, r)))
            for j, m in enumerate(methods):
                rows.extend(_sweep_cell(data, m, j, g, r, param, value, truths, b, seed, level, workers))
    return rows, skipped


def _skip_row(g, param, value):
    row = {c: None for c in SWEEP_COLUMNS}
    row.update(point=g, param=param, value=value, status="skipped-not-psd")
    return row


def _sweep_cell(data, m, j, g, r, param, value, truths, b, seed, level, workers):
    base = {"point": g, "param": param, "value": value, "rep": r, "method": m}
    try:
        est = ESTIMATORS[m](data)
        boot = bootstrap(data, m, b, seed, level=level, workers=workers, stream=(2, g, r, j)) if b else None
    except MediationError as exc:
        return [{**base, "statistic": s, "estimate": None, "truth": truths.statistic(s), "error": None,
                 "se": None, "ci_lower": None, "ci_upper": None, "covered": None, "status": exc.code}
                for s in STATISTICS]
    out = []
    for s in STATISTICS:
        e, t = est.statistic(s), truths.statistic(s)
        se = lo = hi = covered = None
        if boot is not None:
            se, lo, hi = (float(v) for v in boot.get(s))
            if math.isfinite(lo) and math.isfinite(hi) and t is not None:
                covered = int(lo <= t <= hi)
        out.append({**base, "statistic": s, "estimate": e, "truth": t,
                    "error": None if e is None or t is None else e - t,
                    "se": se, "ci_lower": lo, "ci_upper": hi, "covered": covered, "status": "ok"})
    return out


# ---------------------------------------------------------------- calibration

CALIBRATION_TARGETS = {"p_d1": 0.379, "complier_share": 0.6577, "ate": 2.60, "ade": 1.38, "aie": 1.22}
CALIBRATION_TOLERANCES = {"p_d1": 0.005, "complier_share": 0.005, "ate": 0.02, "ade": 0.02, "aie": 0.02}


def calibrate(config: DGPConfig = DGPConfig(), seed=None, oracle_n=ORACLE_N):
    """Oracle moments of every first-stage variant against the target moments.

    Returns a list of dicts (one per variant) with the moments, the direction
    of the first stage and whether all targets are met.
    """
    seed = config.seed if seed is None else int(seed)
    out = []
    for variant in FIRST_STAGE_VARIANTS:
        t = study_truths(config.with_(first_stage_variant=variant), seed, oracle_n=oracle_n)
        moments = {k: t.statistic(k) if k in STATISTICS else getattr(t, k) for k in CALIBRATION_TARGETS}
        ok = {k: abs(moments[k] - v) <= CALIBRATION_TOLERANCES[k] for k, v in CALIBRATION_TARGETS.items()}
        out.append({"variant": variant, "direction": t.direction, **moments, "within_tolerance": ok,
                    "matches": all(ok.values())})
    return out


def calibration_report(results, oracle_n=ORACLE_N) -> str:
    keys = list(CALIBRATION_TARGETS)
    lines = [
        "# First-stage calibration",
        "",
        f"Oracle moments at n = {oracle_n:,} for each first-stage variant, with the",
        "default covariance, z_prob = 0.5 and normal errors.",
        "",
        "| variant | direction | " + " | ".join(keys) + " | matches |",
        "|---" * (len(keys) + 3) + "|",
        "| target | +1 | " + " | ".join(f"{CALIBRATION_TARGETS[k]:.4g} ± {CALIBRATION_TOLERANCES[k]:g}" for k in keys) + " | |",
    ]
    for r in results:
        cells = " | ".join(f"{r[k]:.4f}" for k in keys)
        lines.append(f"| {r['variant']} | {r['direction']:+d} | {cells} | {'yes' if r['matches'] else 'no'} |")
    best = [r["variant"] for r in results if r["matches"]]
    lines += ["", f"Variants meeting every target: {', '.join(best) if best else 'none'}.", ""]
    return "\n".join(lines)
