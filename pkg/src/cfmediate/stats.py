"""Numerical kernels: least squares, probit maximum likelihood, normal
distribution functions, cubic spline bases, Gaussian sampling and seeded
random streams."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy import special
from scipy.interpolate import BSpline

from .errors import ConvergenceError, DomainError, NotPSDError, SeparationError, SingularDesignError

RNG_ALGORITHM = f"numpy.random.Philox+SeedSequence(spawn_key=stream) numpy-{np.__version__}"

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


# ---------------------------------------------------------------- normal distribution


def normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x - _LOG_SQRT_2PI)


def normal_cdf(x):
    return special.ndtr(x)


def normal_inv_cdf(p):
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise DomainError("normal_inv_cdf requires p strictly inside (0, 1)")
    return special.ndtri(p)


# ---------------------------------------------------------------- least squares


@dataclass(frozen=True, eq=False)
class OlsFit:
    coefficients: np.ndarray
    residuals: np.ndarray
    xtx_inverse: np.ndarray
    r_squared: float

    def se(self) -> np.ndarray:
        """Homoskedastic standard errors."""
        n, p = self.residuals.shape[0], self.coefficients.shape[0]
        s2 = self.residuals @ self.residuals / max(n - p, 1)
        return np.sqrt(np.maximum(np.diag(self.xtx_inverse) * s2, 0.0))


def ols_fit(design, y, rank_tol=1e-10) -> OlsFit:
    """Least squares by column-pivoted QR.

    Raises :class:`SingularDesignError` naming the first column (in pivot order)
    whose diagonal in R falls below ``rank_tol`` relative to the largest.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n <= p:
        raise SingularDesignError(f"need more rows than columns (n={n}, p={p})")
    Q, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True, check_finite=False)
    diag = np.abs(np.diag(R))
    if diag[0] == 0.0:
        raise SingularDesignError("design is all zeros", column=int(piv[0]))
    small = np.nonzero(diag <= rank_tol * diag[0])[0]
    if small.size:
        col = int(piv[small[0]])
        raise SingularDesignError(f"design column {col} is linearly dependent", column=col)
    qty = Q.T @ y
    b_perm = scipy.linalg.solve_triangular(R, qty, check_finite=False)
    beta = np.empty(p)
    beta[piv] = b_perm
    rinv = scipy.linalg.solve_triangular(R, np.eye(p), check_finite=False)
    cov_perm = rinv @ rinv.T
    xtx_inv = np.empty((p, p))
    xtx_inv[np.ix_(piv, piv)] = cov_perm
    resid = y - X @ beta
    ssr = resid @ resid
    yc = y - y.mean()
    sst = yc @ yc
    r2 = 1.0 - ssr / sst if sst > 0 else 0.0
    return OlsFit(beta, resid, xtx_inv, float(r2))


def independent_columns(design, rank_tol=1e-10) -> np.ndarray:
    """Indices (ascending) of a maximal linearly independent column subset."""
    X = np.asarray(design, dtype=float)
    R, piv = scipy.linalg.qr(X, mode="r", pivoting=True, check_finite=False)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rank_tol * diag[0])) if diag.size and diag[0] > 0 else 0
    return np.sort(piv[:rank])


# ---------------------------------------------------------------- probit


@dataclass(frozen=True, eq=False)
class ProbitFit:
    coefficients: np.ndarray
    log_likelihood: float
    converged: bool
    iterations: int
    covariance: np.ndarray

    def se(self) -> np.ndarray:
        return np.sqrt(np.maximum(np.diag(self.covariance), 0.0))


def _probit_terms(X, d, beta):
    s = 2.0 * d - 1.0
    q = s * (X @ beta)
    logcdf = special.log_ndtr(q)
    lam = np.exp(-0.5 * q * q - _LOG_SQRT_2PI - logcdf)
    return s, q, logcdf, lam


def probit_loglik(design, d, beta) -> float:
    _, _, logcdf, _ = _probit_terms(np.asarray(design, float), np.asarray(d, float), beta)
    return float(logcdf.sum())


def probit_score(design, d, beta) -> np.ndarray:
    X = np.asarray(design, float)
    s, _, _, lam = _probit_terms(X, np.asarray(d, float), beta)
    return X.T @ (s * lam)


def probit_hessian(design, d, beta) -> np.ndarray:
    X = np.asarray(design, float)
    _, q, _, lam = _probit_terms(X, np.asarray(d, float), beta)
    w = lam * (lam + q)
    return -(X.T * w) @ X


def probit_fit(design, d, tol=1e-8, max_iter=100, strict=True, divergence=1e3) -> ProbitFit:
    """Probit MLE by Newton-Raphson with step halving.

    Starts from 1.25 x OLS of (2d - 1) on the design (the linear-probability
    rescaling), falling back to zeros if that start fails.
    """
    X = np.asarray(design, dtype=float)
    d = np.asarray(d, dtype=float)
    n, p = X.shape
    if n <= p:
        raise SingularDesignError(f"need more rows than columns (n={n}, p={p})")
    start = 1.25 * ols_fit(X, 2.0 * d - 1.0).coefficients
    try:
        return _newton(X, d, start, tol, max_iter, strict, divergence)
    except (SeparationError, ConvergenceError, np.linalg.LinAlgError, FloatingPointError):
        return _newton(X, d, np.zeros(p), tol, max_iter, strict, divergence)


def _newton(X, d, beta, tol, max_iter, strict, divergence):
    s, q, logcdf, lam = _probit_terms(X, d, beta)
    ll = logcdf.sum()
    if not np.isfinite(ll):
        raise ConvergenceError("non-finite log-likelihood at start")
    converged = False
    it = 0
    for it in range(max_iter + 1):
        grad = X.T @ (s * lam)
        if np.max(np.abs(grad)) < tol:
            converged = True
            break
        if it == max_iter:
            break
        w = lam * (lam + q)
        info = (X.T * w) @ X
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
                step = scipy.linalg.solve(info, grad, assume_a="pos", check_finite=False)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning, ValueError):
            step = np.linalg.lstsq(info, grad, rcond=None)[0]
        t = 1.0
        while True:
            cand = beta + t * step
            s_c, q_c, logcdf_c, lam_c = _probit_terms(X, d, cand)
            ll_c = logcdf_c.sum()
            if np.isfinite(ll_c) and ll_c >= ll - 1e-12 * max(1.0, abs(ll)):
                break
            t *= 0.5
            if t < 1e-12:
                raise ConvergenceError("line search failed to increase the likelihood")
        beta, s, q, lam, ll = cand, s_c, q_c, lam_c, ll_c
        if np.max(np.abs(beta)) > divergence:
            raise SeparationError(
                f"probit coefficients diverge (|coef| > {divergence:g}); data look separated"
            )
    if not converged and strict:
        raise ConvergenceError(f"probit did not converge in {max_iter} iterations")
    # the score underflows before coefficients diverge when every unit is
    # classified with near certainty
    if np.min(q) > 5.0:
        raise SeparationError("probit fit separates the data (every unit predicted with certainty)")
    w = lam * (lam + q)
    info = (X.T * w) @ X
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        cov = np.full(info.shape, np.nan)
    return ProbitFit(beta, float(ll), converged, it, cov)


# ---------------------------------------------------------------- splines


def spline_basis(values, knots, degree=3) -> np.ndarray:
    """Cubic regression spline basis in B-spline form.

    The first and last knot are boundary knots, the rest interior knots; the
    basis has ``len(knots) + degree - 1`` columns (7 for 5 knots), spans all
    polynomials of ``degree`` (including constants) and extends polynomially
    beyond the boundary knots.
    """
    x = np.asarray(values, dtype=float).ravel()
    t = np.asarray(knots, dtype=float).ravel()
    if t.size < 2:
        raise DomainError("need at least two knots")
    if np.any(np.diff(t) <= 0):
        raise DomainError("knots must be strictly increasing")
    if t[0] <= 0.0 or t[-1] >= 1.0:
        raise DomainError("knots must lie inside (0, 1)")
    if np.any(~((x > 0.0) & (x < 1.0))):
        raise DomainError("spline values must lie inside (0, 1)")
    full = np.concatenate([np.repeat(t[0], degree + 1), t[1:-1], np.repeat(t[-1], degree + 1)])
    return BSpline.design_matrix(x, full, degree, extrapolate=True).toarray()


def quantile_knots(values, quantiles=(1 / 6, 2 / 6, 3 / 6, 4 / 6, 5 / 6)) -> np.ndarray:
    """Knots at sample quantiles, with exact duplicates removed."""
    k = np.unique(np.quantile(np.asarray(values, float), quantiles))
    return k


# ---------------------------------------------------------------- sampling


def pivoted_cholesky(sigma, tol=1e-12):
    """Return ``(L, piv)`` with ``sigma[piv][:, piv] == L @ L.T`` for PSD ``sigma``."""
    a = np.array(sigma, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotPSDError("covariance must be square")
    if not np.all(np.isfinite(a)):
        raise NotPSDError("covariance has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if not np.allclose(a, a.T, atol=1e-12 * scale, rtol=0):
        raise NotPSDError("covariance must be symmetric")
    if a.size and np.linalg.eigvalsh(a).min() < -1e-10 * scale:
        raise NotPSDError("covariance is not positive semi-definite")
    p = a.shape[0]
    piv = np.arange(p)
    L = np.zeros((p, p))
    for k in range(p):
        j = k + int(np.argmax(np.diag(a)[k:]))
        if a[j, j] <= tol * scale:
            break
        if j != k:
            a[[k, j], :] = a[[j, k], :]
            a[:, [k, j]] = a[:, [j, k]]
            L[[k, j], :k] = L[[j, k], :k]
            piv[[k, j]] = piv[[j, k]]
        L[k, k] = np.sqrt(a[k, k])
        L[k + 1 :, k] = a[k + 1 :, k] / L[k, k]
        a[k + 1 :, k + 1 :] -= np.outer(L[k + 1 :, k], L[k + 1 :, k])
    return L, piv


def mvn_sample(mean, sigma, n, rng) -> np.ndarray:
    """Draw ``n`` rows from N(mean, sigma); sigma may be singular."""
    mean = np.asarray(mean, dtype=float)
    L, piv = pivoted_cholesky(sigma)
    z = rng.standard_normal((int(n), mean.shape[0]))
    out = np.empty_like(z)
    out[:, piv] = z @ L.T
    return out + mean


def rng_split(seed, stream_id=0) -> np.random.Generator:
    """Independent generator for ``(seed, stream_id)``.

    ``stream_id`` may be an int or a tuple of ints; a stream never depends on
    how many other streams exist or in which order they are created.
    """
    key = tuple(stream_id) if isinstance(stream_id, (tuple, list)) else (int(stream_id),)
    ss = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))
