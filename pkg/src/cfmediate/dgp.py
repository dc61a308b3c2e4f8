"""Roy-model simulator and a brute-force oracle over potential outcomes.

Outcome means are ``mu_d(z; x) = z + d + z*d + x`` with ``x ~ N(4, 1)``; the
mediator cost instrument is ``iv ~ Uniform(-1, 1)``; ``(U0, U1, UC)`` have
covariance ``sigma``. Units take the mediator when the gain
``Y(z, 1) - Y(z, 0)`` covers the cost, giving
``D(z) = 1{UC - (U1 - U0) <= t(z)}`` with the threshold ``t`` set by
``first_stage_variant``:

``roy_cost_reversed`` (default)
    cost mean ``-3z + x - iv``, so ``t(z) = 1 + 4z - x + iv``. This variant
    reproduces the target moments P(D=1) = 0.379 and 65.8% compliers.
``roy_derived``
    cost mean ``3z + x - iv``, so ``t(z) = 1 - 2z - x + iv``.
``direct_index``
    ``t(z) = -3z + x - iv`` taken as written, without deriving it from costs.

All three are monotone, so there are never defiers; only the direction can
differ.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import CellSupportError, ConfigError, NotPSDError
from .model import validate_dataset
from .stats import mvn_sample, normal_cdf, pivoted_cholesky, rng_split

DEFAULT_SIGMA = ((1.0, 0.75, 0.0), (0.75, 2.25, 0.0), (0.0, 0.0, 0.25))
ERROR_FAMILIES = ("normal", "uniform_copula")
FIRST_STAGE_VARIANTS = ("roy_cost_reversed", "roy_derived", "direct_index")


@dataclass(frozen=True)
class DGPConfig:
    n: int = 5000
    seed: int = 0
    sigma: tuple = DEFAULT_SIGMA
    error_family: str = "normal"
    z_prob: float = 0.5
    first_stage_variant: str = "roy_cost_reversed"

    def __post_init__(self):
        if isinstance(self.n, bool) or not isinstance(self.n, (int, np.integer)) or self.n < 2:
            raise ConfigError(f"n must be an integer >= 2, got {self.n!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        sig = np.asarray(self.sigma, dtype=float)
        if sig.shape != (3, 3):
            raise ConfigError("sigma must be 3x3")
        try:
            pivoted_cholesky(sig)
        except NotPSDError as exc:
            raise ConfigError(f"sigma: {exc}") from None
        object.__setattr__(self, "sigma", tuple(tuple(float(v) for v in row) for row in sig))
        if not 0.0 < float(self.z_prob) < 1.0:
            raise ConfigError("z_prob must lie in (0, 1)")
        if self.error_family not in ERROR_FAMILIES:
            raise ConfigError(f"error_family must be one of {ERROR_FAMILIES}")
        if self.first_stage_variant not in FIRST_STAGE_VARIANTS:
            raise ConfigError(f"first_stage_variant must be one of {FIRST_STAGE_VARIANTS}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sigma"] = [list(r) for r in self.sigma]
        return d

    def with_(self, **changes) -> "DGPConfig":
        d = asdict(self)
        d.update(changes)
        return DGPConfig(**d)


def outcome_mean(z, d, x):
    return z + d + z * d + x


def threshold(variant, z, x, iv):
    if variant == "roy_cost_reversed":
        return 1.0 + 4.0 * z - x + iv
    if variant == "roy_derived":
        return 1.0 - 2.0 * z - x + iv
    if variant == "direct_index":
        return -3.0 * z + x - iv
    raise ConfigError(f"unknown first-stage variant {variant!r}")


@dataclass(frozen=True, eq=False)
class PotentialTable:
    """Per-unit potential outcomes, potential mediator choices and error draws."""

    y00: np.ndarray
    y01: np.ndarray
    y10: np.ndarray
    y11: np.ndarray
    d0: np.ndarray
    d1: np.ndarray
    z: np.ndarray
    u0: np.ndarray | None = None
    u1: np.ndarray | None = None
    uc: np.ndarray | None = None

    @property
    def n(self):
        return int(self.z.shape[0])

    def y(self, z, d):
        """Y(z, d) for scalar z and scalar-or-vector d."""
        d = np.asarray(d, dtype=float)
        if z == 0:
            return np.where(d == 1.0, self.y01, self.y00)
        return np.where(d == 1.0, self.y11, self.y10)

    def d_of(self, z):
        return self.d1 if z == 1 else self.d0

    @property
    def d(self):
        return np.where(self.z == 1.0, self.d1, self.d0)

    @property
    def y_realized(self):
        return np.where(self.z == 1.0, self.y(1, self.d1), self.y(0, self.d0))

    @property
    def complier_class(self):
        return np.select(
            [
                (self.d0 == 1) & (self.d1 == 1),
                (self.d0 == 0) & (self.d1 == 0),
                (self.d0 == 0) & (self.d1 == 1),
            ],
            ["always", "never", "complier"],
            default="defier",
        )

    def class_counts(self) -> dict:
        return {
            "always": int(np.sum((self.d0 == 1) & (self.d1 == 1))),
            "never": int(np.sum((self.d0 == 0) & (self.d1 == 0))),
            "complier": int(np.sum((self.d0 == 0) & (self.d1 == 1))),
            "defier": int(np.sum((self.d0 == 1) & (self.d1 == 0))),
        }


def uniform_copula_errors(sigma, n, rng) -> np.ndarray:
    """Correlated errors with uniform U0, U1 margins and a normal UC.

    Draws N(0, sigma) and maps U0, U1 through their normal CDF onto uniforms
    rescaled to keep their original standard deviations.
    """
    sig = np.asarray(sigma, dtype=float)
    e = mvn_sample(np.zeros(3), sig, n, rng)
    for j in (0, 1):
        sd = math.sqrt(sig[j, j])
        if sd > 0:
            e[:, j] = sd * math.sqrt(3.0) * (2.0 * normal_cdf(e[:, j] / sd) - 1.0)
    return e


def simulate(config: DGPConfig, rng=None):
    """Draw one sample; returns ``(MediationDataset, PotentialTable)``."""
    if rng is None:
        rng = rng_split(config.seed, 0)
    n = config.n
    z = (rng.random(n) < config.z_prob).astype(float)
    x = rng.normal(4.0, 1.0, n)
    iv = rng.uniform(-1.0, 1.0, n)
    if config.error_family == "normal":
        e = mvn_sample(np.zeros(3), config.sigma, n, rng)
    else:
        e = uniform_copula_errors(config.sigma, n, rng)
    u0, u1, uc = e[:, 0], e[:, 1], e[:, 2]
    v = uc - (u1 - u0)
    d0 = (v <= threshold(config.first_stage_variant, 0.0, x, iv)).astype(float)
    d1 = (v <= threshold(config.first_stage_variant, 1.0, x, iv)).astype(float)
    table = PotentialTable(
        y00=outcome_mean(0.0, 0.0, x) + u0,
        y01=outcome_mean(0.0, 1.0, x) + u1,
        y10=outcome_mean(1.0, 0.0, x) + u0,
        y11=outcome_mean(1.0, 1.0, x) + u1,
        d0=d0,
        d1=d1,
        z=z,
        u0=u0,
        u1=u1,
        uc=uc,
    )
    data = validate_dataset(
        table.y_realized, z, table.d, x.reshape(-1, 1), iv.reshape(-1, 1)
    )
    return data, table


# ---------------------------------------------------------------- oracle


@dataclass(frozen=True)
class OracleTruths:
    ate: float
    ade: float
    aie: float
    p_d1: float
    complier_share: float
    ade_given_z0: float
    ade_given_z1: float
    aie_given_z0: float
    aie_given_z1: float
    first_stage: float
    direction: int
    p_z1: float
    n: int

    @property
    def aie_share(self):
        return self.aie / self.ate if self.ate != 0 else math.nan

    def statistic(self, name) -> float:
        return {
            "first_stage": self.first_stage,
            "ate": self.ate,
            "ade": self.ade,
            "aie": self.aie,
            "aie_share": self.aie_share,
        }[name]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["aie_share"] = None if not math.isfinite(self.aie_share) else self.aie_share
        return d


def oracle_truths(table: PotentialTable) -> OracleTruths:
    """True effects by averaging potential-outcome contrasts over every unit.

    Conditional-on-Z effects fix the treatment arm for the whole table;
    unconditional effects weight them by the realized treatment share.
    """
    if table.n == 0:
        raise CellSupportError("empty potential table")
    zbar = float(table.z.mean())
    ade_z = [float(np.mean(table.y(1, table.d_of(a)) - table.y(0, table.d_of(a)))) for a in (0, 1)]
    aie_z = [float(np.mean(table.y(a, table.d1) - table.y(a, table.d0))) for a in (0, 1)]
    ate = float(np.mean(table.y(1, table.d1) - table.y(0, table.d0)))
    fs = float(np.mean(table.d1 - table.d0))
    counts = table.class_counts()
    direction = 1 if counts["complier"] >= counts["defier"] else -1
    share = (counts["complier"] if direction == 1 else counts["defier"]) / table.n
    return OracleTruths(
        ate=ate,
        ade=(1 - zbar) * ade_z[0] + zbar * ade_z[1],
        aie=(1 - zbar) * aie_z[0] + zbar * aie_z[1],
        p_d1=float(table.d.mean()),
        complier_share=float(share),
        ade_given_z0=ade_z[0],
        ade_given_z1=ade_z[1],
        aie_given_z0=aie_z[0],
        aie_given_z1=aie_z[1],
        first_stage=fs,
        direction=direction,
        p_z1=zbar,
        n=table.n,
    )


@dataclass(frozen=True)
class DecompositionTerms:
    cm_estimand: float
    effect: float
    selection_bias: float
    group_differences: float
    realized_cm_estimand: float

    @property
    def residual(self) -> float:
        return self.cm_estimand - (self.effect + self.selection_bias + self.group_differences)


@dataclass(frozen=True)
class BiasDecomposition:
    direct: DecompositionTerms
    indirect: DecompositionTerms

    def to_dict(self) -> dict:
        return {"direct": asdict(self.direct), "indirect": asdict(self.indirect)}


def _cell_mean(values, mask, label):
    if not np.any(mask):
        raise CellSupportError(f"no units in conditioning cell {label}")
    return float(values[mask].mean())


def _realized_cm(table):
    z, d, y = table.z, table.d, table.y_realized

    def m(zz, dd):
        return _cell_mean(y, (z == zz) & (d == dd), f"Z={zz},D={dd}")

    pd1 = d.mean()
    direct = sum(w * (m(1, dd) - m(0, dd)) for dd, w in ((0, 1 - pd1), (1, pd1)))
    fs = _cell_mean(d, z == 1, "Z=1") - _cell_mean(d, z == 0, "Z=0")
    zbar = z.mean()
    indirect = fs * sum(w * (m(zz, 1) - m(zz, 0)) for zz, w in ((0, 1 - zbar), (1, zbar)))
    return direct, indirect


def bias_decomposition(table: PotentialTable) -> BiasDecomposition:
    """Split the two-stage mean-contrast estimands into effect, selection bias
    and group differences, all as population quantities of the table.

    Treatment is independent of potential outcomes, so ``E[Y | Z=z, D=d]`` is
    ``E[Y(z, d) | D(z) = d]`` over every unit.

    Direct, for each mediator level ``d`` weighted by P(D = d)::

        E[Y(1,d) | D(1)=d] - E[Y(0,d) | D(0)=d]
          = ADE
          + (E[Y(0,d) | D(1)=d] - E[Y(0,d) | D(0)=d])        selection bias
          + (E[Y(1,d) - Y(0,d) | D(1)=d] - ADE)               group differences

    Indirect, for each arm ``z`` weighted by P(Z = z), times the first stage::

        E[Y(z,1) | D(z)=1] - E[Y(z,0) | D(z)=0]
          = E[Y(z,1) - Y(z,0) | switcher]                     (AIE / first stage)
          + (E[Y(z,0) | D(z)=1] - E[Y(z,0) | D(z)=0])         selection bias
          + (E[Y(z,1) - Y(z,0) | D(z)=1]
             - E[Y(z,1) - Y(z,0) | switcher])                 group differences
    """
    truths = oracle_truths(table)
    d_real = table.d
    pd1 = float(d_real.mean())
    zbar = truths.p_z1

    cm = sb = gd = 0.0
    for dd, w in ((0.0, 1.0 - pd1), (1.0, pd1)):
        s1 = table.d1 == dd
        s0 = table.d0 == dd
        y1d = table.y(1, dd)
        y0d = table.y(0, dd)
        cm += w * (_cell_mean(y1d, s1, f"D(1)={dd:g}") - _cell_mean(y0d, s0, f"D(0)={dd:g}"))
        sb += w * (_cell_mean(y0d, s1, f"D(1)={dd:g}") - _cell_mean(y0d, s0, f"D(0)={dd:g}"))
        gd += w * (_cell_mean(y1d - y0d, s1, f"D(1)={dd:g}") - truths.ade)

    fs = truths.first_stage
    switch = table.d1 != table.d0
    icm = isb = igd = 0.0
    for zz, w in ((0, 1.0 - zbar), (1, zbar)):
        dz = table.d_of(zz)
        take, refuse = dz == 1, dz == 0
        yz1, yz0 = table.y(zz, 1.0), table.y(zz, 0.0)
        gain = yz1 - yz0
        icm += w * (_cell_mean(yz1, take, f"D({zz})=1") - _cell_mean(yz0, refuse, f"D({zz})=0"))
        isb += w * (_cell_mean(yz0, take, f"D({zz})=1") - _cell_mean(yz0, refuse, f"D({zz})=0"))
        igd += w * (_cell_mean(gain, take, f"D({zz})=1") - _cell_mean(gain, switch, "switchers"))

    r_direct, r_indirect = _realized_cm(table)
    direct = DecompositionTerms(cm, truths.ade, sb, gd, r_direct)
    indirect = DecompositionTerms(fs * icm, truths.aie, fs * isb, fs * igd, r_indirect)
    return BiasDecomposition(direct, indirect)


def ignorability_diagnostic(table: PotentialTable) -> float:
    """Sample correlation between realized take-up and unobserved gains U1 - U0."""
    if table.u0 is None or table.u1 is None:
        raise CellSupportError("table does not retain error draws")
    gain = table.u1 - table.u0
    d = table.d
    if gain.std() == 0 or d.std() == 0:
        return 0.0
    return float(np.corrcoef(d, gain)[0, 1])
