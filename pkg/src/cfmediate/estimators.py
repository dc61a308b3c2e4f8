"""Mediation estimators mapping a :class:`MediationDataset` to :class:`CMEstimates`.

All second stages use the regressors ``1, D, Z, Z*D`` plus linear controls;
instruments only enter the first stage.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .cf import CfConvention, clamp_propensity, gamma_pairs, switcher_gain_mass
from .errors import DegenerateGammaError, InsufficientSupportError
from .model import CMEstimates, MediationDataset, PropensityFit
from .stats import independent_columns, normal_cdf, ols_fit, probit_fit, quantile_knots, spline_basis

WEAK_IV_T = 3.0


def _ones(n):
    return np.ones((n, 1))


def second_stage_design(data: MediationDataset, extra=None) -> np.ndarray:
    """Columns ``1, D, Z, Z*D, X-`` (then any CF columns)."""
    z, d = data.z, data.d
    cols = [_ones(data.n), d[:, None], z[:, None], (z * d)[:, None], data.x_controls]
    if extra is not None:
        cols.append(extra)
    return np.hstack(cols)


def estimate_ate(data: MediationDataset) -> float:
    """Z coefficient from OLS of Y on ``1, Z, X-``."""
    X = np.hstack([_ones(data.n), data.z[:, None], data.x_controls])
    return float(ols_fit(X, data.y).coefficients[1])


def estimate_conventional(data: MediationDataset) -> CMEstimates:
    """Two-stage OLS without any selection correction."""
    fs_design = np.hstack([_ones(data.n), data.z[:, None], data.x_controls, data.x_iv])
    fs = ols_fit(fs_design, data.d)
    pi_bar = float(fs.coefficients[1])
    notes = []
    if data.m:
        t = fs.coefficients[-data.m :] / fs.se()[-data.m :]
        notes += _weak_iv_notes(t, data.iv_names)
    ss = ols_fit(second_stage_design(data), data.y)
    alpha, beta, gamma, delta = ss.coefficients[:4]
    dbar, zbar = float(data.d.mean()), float(data.z.mean())
    return CMEstimates(
        method="conventional",
        first_stage=float(np.clip(pi_bar, -1.0, 1.0)),
        ate=estimate_ate(data),
        ade=gamma + delta * dbar,
        aie=pi_bar * (beta + delta * zbar),
        coefficients={"alpha": alpha, "beta": beta, "gamma": gamma, "delta": delta, "pi_bar": pi_bar},
        n_used=data.n,
        warnings=notes,
    )


def _weak_iv_notes(t, names):
    return [
        f"weak instrument: |t| = {abs(tv):.2f} < {WEAK_IV_T:g} for {name}"
        for tv, name in zip(np.atleast_1d(t), names)
        if not abs(tv) >= WEAK_IV_T
    ]


# ---------------------------------------------------------------- first stages


def _index_features(z, xc, xi):
    z = np.asarray(z, dtype=float).reshape(-1, 1)
    return np.hstack([np.ones_like(z), z, np.asarray(xc, float), np.asarray(xi, float)])


def _poly2_raw(z, xc, xi):
    z = np.asarray(z, dtype=float).reshape(-1, 1)
    base = np.hstack([z, np.asarray(xc, float), np.asarray(xi, float)])
    cols = [np.ones((base.shape[0], 1)), base]
    for i, j in itertools.combinations_with_replacement(range(base.shape[1]), 2):
        cols.append((base[:, i] * base[:, j])[:, None])
    return np.hstack(cols)


def _poly2_names(k, m):
    base = ["z"] + [f"x{j + 1}" for j in range(k)] + [f"iv{j + 1}" for j in range(m)]
    names = ["1"] + base
    names += [f"{base[i]}*{base[j]}" for i, j in itertools.combinations_with_replacement(range(len(base)), 2)]
    return names


def fit_propensity(data: MediationDataset, kind="probit_index") -> PropensityFit:
    """Probit first stage, on the linear index or on a degree-2 polynomial basis.

    The polynomial basis keeps a linearly independent subset of its terms on
    the fitting sample (binary regressors make squares redundant).
    """
    if kind == "probit_index":
        features = _index_features
        names = ["1", "z"] + list(data.control_names) + list(data.iv_names)
    elif kind == "flexible_basis":
        raw = _poly2_raw(data.z, data.x_controls, data.x_iv)
        keep = independent_columns(raw)
        all_names = _poly2_names(data.k, data.m)
        names = [all_names[j] for j in keep]

        def features(z, xc, xi, _keep=keep):
            return _poly2_raw(z, xc, xi)[:, _keep]

    else:
        raise ValueError(f"unknown propensity kind {kind!r}")
    X = features(data.z, data.x_controls, data.x_iv)
    fit = probit_fit(X, data.d)
    b = fit.coefficients
    n = data.n
    raw_pi = [normal_cdf(features(np.full(n, a), data.x_controls, data.x_iv) @ b) for a in (0.0, 1.0)]
    raw_obs = normal_cdf(X @ b)
    (pi0, c0), (pi1, c1), (pio, co) = (clamp_propensity(v) for v in (*raw_pi, raw_obs))
    for a in (pi0, pi1, pio):
        a.setflags(write=False)
    return PropensityFit(
        kind=kind,
        parameters=b,
        features=features,
        pi0=pi0,
        pi1=pi1,
        pi_obs=pio,
        n_clamped=c0 + c1 + co,
        covariance=fit.covariance,
        feature_names=tuple(names),
    )


def _iv_t_stats(prop: PropensityFit, data: MediationDataset):
    se = np.sqrt(np.maximum(np.diag(prop.covariance), 0.0))
    idx = [prop.feature_names.index(nm) for nm in (data.iv_names if prop.kind == "probit_index" else [f"iv{j + 1}" for j in range(data.m)]) if nm in prop.feature_names]
    with np.errstate(divide="ignore", invalid="ignore"):
        return prop.parameters[idx] / se[idx]


# ---------------------------------------------------------------- parametric CF


def estimate_parametric_cf(
    data: MediationDataset, convention: CfConvention = CfConvention(), adjustment="unit"
) -> CMEstimates:
    """Probit first stage, inverse-Mills control functions in the second stage.

    ``adjustment="unit"`` averages each unit's compliance times its complier
    adjustment, ``mean[(pi1 - pi0) * Gamma(pi0, pi1)]``; ``"pooled"`` uses the
    product of averages ``mean(pi1 - pi0) * mean(Gamma)``, which is biased when
    compliance varies with covariates.
    """
    notes = []
    if data.m == 0:
        notes.append("no instrument columns: identification rests on the normality assumption")
    prop = fit_propensity(data, "probit_index")
    if data.m:
        notes += _weak_iv_notes(_iv_t_stats(prop, data), data.iv_names)
    if prop.n_clamped:
        notes.append(f"{prop.n_clamped} propensity predictions clamped to [1e-6, 1-1e-6]")
    pi0, pi1, pio = prop.pi0, prop.pi1, prop.pi_obs
    diff = pi1 - pi0
    if np.all(np.abs(diff) < 1e-12):
        raise DegenerateGammaError("first stage gives pi(0) == pi(1) for every unit")
    d = data.d
    cf_cols = np.column_stack([(1.0 - d) * convention.lambda0(pio), d * convention.lambda1(pio)])
    ss = ols_fit(second_stage_design(data, cf_cols), data.y)
    c = ss.coefficients
    alpha, beta, gamma, delta = c[:4]
    rho0, rho1 = c[-2], c[-1]
    rho1_signed = convention.lambda1_sign * rho1
    dbar, zbar = float(d.mean()), float(data.z.mean())
    pi_bar = float(diff.mean())
    gamma_mean = float(gamma_pairs(pi0, pi1).mean())
    if adjustment == "unit":
        adj = (rho1_signed - rho0) * float(np.mean(switcher_gain_mass(pi0, pi1)))
    elif adjustment == "pooled":
        adj = pi_bar * (rho1_signed - rho0) * gamma_mean
    else:
        raise ValueError(f"unknown adjustment {adjustment!r}")
    aie = pi_bar * (beta + delta * zbar) + adj
    return CMEstimates(
        method="parametric_cf",
        first_stage=pi_bar,
        ate=estimate_ate(data),
        ade=gamma + delta * dbar,
        aie=aie,
        coefficients={
            "alpha": alpha,
            "beta": beta,
            "gamma": gamma,
            "delta": delta,
            "rho0": rho0,
            "rho1": rho1,
            "gamma_bar_mean": gamma_mean,
            "complier_adjustment": adj,
            "direction": 1.0 if pi_bar >= 0 else -1.0,
        },
        n_used=data.n,
        warnings=notes,
    )


# ---------------------------------------------------------------- semi-parametric CF


@dataclass(frozen=True)
class SplineConfig:
    knot_quantiles: tuple = (1 / 6, 2 / 6, 3 / 6, 4 / 6, 5 / 6)
    degree: int = 3
    first_stage: str = "flexible_basis"
    support_margin: int = 4


def _arm_basis(p, cfg: SplineConfig):
    """Spline basis in the propensity for one mediator arm, capped at
    (distinct propensity values - 1) columns."""
    distinct = np.unique(np.round(p, 12)).size
    full_dim = len(cfg.knot_quantiles) + cfg.degree - 1
    cap = distinct - 1
    if cap >= full_dim:
        return spline_basis(p, quantile_knots(p, cfg.knot_quantiles), cfg.degree), "spline"
    if cap >= cfg.degree + 1:
        nk = cap - cfg.degree + 1
        qs = np.linspace(cfg.knot_quantiles[0], cfg.knot_quantiles[-1], nk)
        knots = quantile_knots(p, qs)
        if knots.size == nk:
            return spline_basis(p, knots, cfg.degree), "spline-capped"
    dim = max(cap, 1)
    return np.vander(p, dim, increasing=True), "polynomial-capped"


def estimate_semiparametric_cf(data: MediationDataset, spline_config: SplineConfig = SplineConfig()) -> CMEstimates:
    """Split-sample estimator with spline control functions in the propensity.

    Each mediator arm regresses Y on ``Z, X-`` and a spline in the fitted
    propensity (the spline absorbs the intercept). The Z coefficients give the
    direct effect in each arm; the indirect effect follows from
    ``ATE - P(Z=0) ADE(Z=1) - P(Z=1) ADE(Z=0)``.
    """
    if data.m == 0:
        raise InsufficientSupportError("semi-parametric CF needs at least one instrument column")
    notes = []
    prop = fit_propensity(data, spline_config.first_stage)
    t = _iv_t_stats(prop, data)
    notes += _weak_iv_notes(t, data.iv_names[: len(t)])
    if prop.n_clamped:
        notes.append(f"{prop.n_clamped} propensity predictions clamped to [1e-6, 1-1e-6]")
    z_coef = {}
    for arm in (0.0, 1.0):
        mask = data.d == arm
        p = prop.pi_obs[mask]
        basis, how = _arm_basis(p, spline_config)
        if how != "spline":
            notes.append(f"D={arm:g} arm: {how} basis with {basis.shape[1]} columns")
        if mask.sum() < basis.shape[1] + spline_config.support_margin:
            raise InsufficientSupportError(
                f"D={arm:g} arm has {int(mask.sum())} units for a {basis.shape[1]}-column basis"
            )
        X = np.hstack([data.z[mask][:, None], data.x_controls[mask], basis])
        z_coef[arm] = float(ols_fit(X, data.y[mask]).coefficients[0])
    gamma = z_coef[0.0]
    gamma_delta = z_coef[1.0]
    delta = gamma_delta - gamma
    dbar, zbar = float(data.d.mean()), float(data.z.mean())
    ate = estimate_ate(data)
    ade_z1 = gamma + delta * float(prop.pi1.mean())
    ade_z0 = gamma + delta * float(prop.pi0.mean())
    aie = ate - (1.0 - zbar) * ade_z1 - zbar * ade_z0
    pi_bar = float((prop.pi1 - prop.pi0).mean())
    return CMEstimates(
        method="semiparametric_cf",
        first_stage=pi_bar,
        ate=ate,
        ade=(1.0 - dbar) * gamma + dbar * gamma_delta,
        aie=aie,
        coefficients={
            "gamma": gamma,
            "gamma_plus_delta": gamma_delta,
            "delta": delta,
            "ade_given_z0": ade_z0,
            "ade_given_z1": ade_z1,
        },
        n_used=data.n,
        warnings=notes,
    )


ESTIMATORS = {
    "conventional": estimate_conventional,
    "parametric_cf": estimate_parametric_cf,
    "semiparametric_cf": estimate_semiparametric_cf,
}


def estimate(data: MediationDataset, method: str, **kwargs) -> CMEstimates:
    key = method.replace("-", "_")
    if key not in ESTIMATORS:
        raise ValueError(f"unknown method {method!r}; choose from {sorted(ESTIMATORS)}")
    return ESTIMATORS[key](data, **kwargs)
