"""Normal-family control functions and the complier adjustment.

With latent cost ``V ~ N(0, 1)`` and ``D = 1{V <= Phi^-1(p)}``:

* ``lambda0(p) = E[V | V > Phi^-1(p)] = phi(Phi^-1(p)) / (1 - p)``  (positive)
* ``lambda1(p) = E[V | V <= Phi^-1(p)] = -phi(Phi^-1(p)) / p``     (negative)

so ``p * lambda1(p) + (1 - p) * lambda0(p) = 0``. ``gamma_bar`` is the mean of
``V`` between two propensity thresholds, i.e. the unobserved-gain index of
units whose take-up switches between them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .stats import normal_inv_cdf, normal_pdf

CLAMP_EPS = 1e-6


def clamp_propensity(p, eps=CLAMP_EPS):
    """Clip to ``[eps, 1 - eps]``; returns ``(clipped, number_clipped)``."""
    p = np.asarray(p, dtype=float)
    out = np.clip(p, eps, 1.0 - eps)
    return out, int(np.count_nonzero(out != p))


def _open_unit(p):
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise DomainError("propensity must lie strictly inside (0, 1)")
    return p


def lambda0(p):
    p = _open_unit(p)
    return normal_pdf(normal_inv_cdf(p)) / (1.0 - p)


def lambda1(p):
    p = _open_unit(p)
    return -normal_pdf(normal_inv_cdf(p)) / p


def gamma_bar(p, p_hi):
    """Mean of V over ``Phi^-1(p) < V <= Phi^-1(p_hi)``; requires ``p < p_hi``."""
    p = _open_unit(p)
    p_hi = _open_unit(p_hi)
    if np.any(p >= p_hi):
        raise DomainError("gamma_bar requires p < p_hi")
    return (p_hi * lambda1(p_hi) - p * lambda1(p)) / (p_hi - p)


def gamma_pairs(p_a, p_b, tie_tol=1e-10):
    """Elementwise complier adjustment for unordered threshold pairs.

    Pairs are ordered per element; ties use the limit ``Phi^-1(p)``.
    """
    p_a = _open_unit(p_a)
    p_b = _open_unit(p_b)
    lo = np.minimum(p_a, p_b)
    hi = np.maximum(p_a, p_b)
    gap = hi - lo
    tie = gap < tie_tol
    out = np.empty(np.broadcast(lo, hi).shape)
    safe_gap = np.where(tie, 1.0, gap)
    out[...] = (hi * lambda1(hi) - lo * lambda1(lo)) / safe_gap
    if np.any(tie):
        out[tie] = normal_inv_cdf(0.5 * (lo + hi)[tie])
    return out


def switcher_gain_mass(p_a, p_b):
    """``(p1 - p0) * gamma(p0, p1)`` computed without division: ``p1 l1(p1) - p0 l1(p0)``.

    Signed with ``p_b - p_a``; averaging it over units gives the complier
    adjustment weighted by each unit's own compliance.
    """
    p_a = _open_unit(p_a)
    p_b = _open_unit(p_b)
    return p_b * lambda1(p_b) - p_a * lambda1(p_a)


@dataclass(frozen=True)
class CfConvention:
    """Orientation of the stored control functions.

    ``signed_lambda1=True`` stores lambda1 as the (negative) truncated mean.
    ``False`` stores the positive ratio ``phi/Phi``; estimators then flip the
    fitted coefficient back before forming the complier adjustment, so both
    orientations give the same effects.
    """

    mu_v: float = 0.0
    signed_lambda1: bool = True

    @property
    def lambda1_sign(self) -> float:
        return 1.0 if self.signed_lambda1 else -1.0

    def lambda0(self, p):
        return lambda0(p) - self.mu_v

    def lambda1(self, p):
        return self.lambda1_sign * (lambda1(p) - self.mu_v)
