"""Domain containers: the observed sample, estimate records, propensity fits and
bootstrap summaries, plus the dataset CSV schema."""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DataValidationError

METHODS = ("conventional", "parametric_cf", "semiparametric_cf")
STATISTICS = ("first_stage", "ate", "ade", "aie", "aie_share")


def _readonly(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def _as_matrix(x, n, name):
    if x is None:
        return np.empty((n, 0))
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.ndim != 2:
        raise DataValidationError("bad-shape", f"{name} must be a vector or matrix")
    if x.shape[0] != n:
        raise DataValidationError(
            "length-mismatch", f"{name} has {x.shape[0]} rows, expected {n}"
        )
    return x


def _binary(v, name):
    v = np.asarray(v)
    if v.dtype == bool:
        return v.astype(float)
    if not np.issubdtype(v.dtype, np.number):
        raise DataValidationError(f"non-binary-{name}", f"{name} must be numeric 0/1")
    v = v.astype(float)
    if not np.all(np.isfinite(v)):
        raise DataValidationError("non-finite", f"{name} contains non-finite values")
    if not np.all((v == 0.0) | (v == 1.0)):
        raise DataValidationError(f"non-binary-{name}", f"{name} must contain only 0 and 1")
    return v


@dataclass(frozen=True, eq=False)
class MediationDataset:
    """Validated observed sample. Arrays are read-only.

    Attributes
    ----------
    y : outcome, length n
    z : binary treatment
    d : binary mediator
    x_controls : n x k matrix of controls entering both stages
    x_iv : n x m matrix of mediator-cost instruments (first stage only)
    """

    y: np.ndarray
    z: np.ndarray
    d: np.ndarray
    x_controls: np.ndarray
    x_iv: np.ndarray
    control_names: tuple = ()
    iv_names: tuple = ()

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def k(self) -> int:
        return int(self.x_controls.shape[1])

    @property
    def m(self) -> int:
        return int(self.x_iv.shape[1])

    def columns(self) -> dict:
        return {
            "y": self.y,
            "z": self.z,
            "d": self.d,
            "x_controls": self.x_controls,
            "x_iv": self.x_iv,
            "control_names": self.control_names,
            "iv_names": self.iv_names,
        }

    def take(self, index) -> "MediationDataset":
        """Row subset or resample (validated, so degenerate resamples raise)."""
        index = np.asarray(index)
        return validate_dataset(
            self.y[index],
            self.z[index],
            self.d[index],
            self.x_controls[index],
            self.x_iv[index],
            control_names=self.control_names,
            iv_names=self.iv_names,
        )

    def replace(self, **changes) -> "MediationDataset":
        cols = self.columns()
        cols.update(changes)
        return validate_dataset(**cols)

    def __eq__(self, other):
        if not isinstance(other, MediationDataset):
            return NotImplemented
        return (
            all(
                np.array_equal(getattr(self, a), getattr(other, a))
                for a in ("y", "z", "d", "x_controls", "x_iv")
            )
            and self.control_names == other.control_names
            and self.iv_names == other.iv_names
        )

    __hash__ = None


def validate_dataset(
    y,
    z=None,
    d=None,
    x_controls=None,
    x_iv=None,
    control_names=None,
    iv_names=None,
) -> MediationDataset:
    """Check raw column-aligned arrays and build an immutable dataset.

    Passing an existing :class:`MediationDataset` as ``y`` revalidates it.
    Inputs are copied, never modified.
    """
    if isinstance(y, MediationDataset):
        return validate_dataset(**y.columns())
    if z is None or d is None:
        raise DataValidationError("missing-column", "y, z and d are all required")
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise DataValidationError("bad-shape", "y must be one-dimensional")
    n = y.shape[0]
    for name, v in (("z", z), ("d", d)):
        if np.ndim(v) != 1 or len(v) != n:
            raise DataValidationError(
                "length-mismatch", f"{name} has length {len(np.atleast_1d(v))}, expected {n}"
            )
    z = _binary(z, "z")
    d = _binary(d, "d")
    xc = _as_matrix(x_controls, n, "x_controls")
    xi = _as_matrix(x_iv, n, "x_iv")
    for name, v in (("y", y), ("x_controls", xc), ("x_iv", xi)):
        if not np.all(np.isfinite(v)):
            raise DataValidationError("non-finite", f"{name} contains non-finite values")
    sz, sd = z.sum(), d.sum()
    if not 0 < sz < n:
        raise DataValidationError(
            "degenerate-treatment-arm", "both treatment arms (z=0 and z=1) must be present"
        )
    if not 0 < sd < n:
        raise DataValidationError(
            "degenerate-mediator-arm", "both mediator arms (d=0 and d=1) must be present"
        )
    control_names = tuple(control_names) if control_names else tuple(
        f"x{j + 1}" for j in range(xc.shape[1])
    )
    iv_names = tuple(iv_names) if iv_names else tuple(f"iv{j + 1}" for j in range(xi.shape[1]))
    if len(control_names) != xc.shape[1] or len(iv_names) != xi.shape[1]:
        raise DataValidationError("length-mismatch", "column names do not match matrix widths")
    return MediationDataset(
        y=_readonly(y),
        z=_readonly(z),
        d=_readonly(d),
        x_controls=_readonly(xc),
        x_iv=_readonly(xi),
        control_names=control_names,
        iv_names=iv_names,
    )


# ---------------------------------------------------------------- CSV schema

_CONTROL_RE = re.compile(r"^x(\d+)$")
_IV_RE = re.compile(r"^iv(\d+)$")


def read_columns(path) -> dict:
    """Read a dataset CSV into ``{name: float array}``, enforcing the header schema.

    Header: ``y,z,d`` then ``x1..xk`` then ``iv1..ivm``. Any empty cell rejects the file.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataValidationError("bad-header", "empty file, header row required") from None
        _check_header(header)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataValidationError(
                    "missing-cell", f"line {lineno}: expected {len(header)} cells, got {len(row)}"
                )
            try:
                rows.append([float(c) if c.strip() else math.nan for c in row])
            except ValueError:
                raise DataValidationError(
                    "non-numeric", f"line {lineno}: non-numeric cell"
                ) from None
            if any(not c.strip() for c in row):
                raise DataValidationError("missing-cell", f"line {lineno}: empty cell")
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    return {h: data[:, j] for j, h in enumerate(header)}


def _check_header(header):
    if header[:3] != ["y", "z", "d"]:
        raise DataValidationError("bad-header", "header must start with y,z,d")
    rest = header[3:]
    controls = [h for h in rest if _CONTROL_RE.match(h)]
    ivs = [h for h in rest if _IV_RE.match(h)]
    if rest != controls + ivs:
        raise DataValidationError(
            "bad-header", "after y,z,d only x1..xk followed by iv1..ivm are allowed"
        )
    if controls != [f"x{j + 1}" for j in range(len(controls))] or ivs != [
        f"iv{j + 1}" for j in range(len(ivs))
    ]:
        raise DataValidationError("bad-header", "control/instrument columns must be numbered from 1")


def dataset_from_columns(
    cols: Mapping[str, np.ndarray],
    controls: Sequence[str] | None = None,
    instruments: Sequence[str] | None = None,
) -> MediationDataset:
    """Assemble a dataset from named columns; default uses every x*/iv* column."""
    if controls is None:
        controls = [c for c in cols if _CONTROL_RE.match(c)]
    if instruments is None:
        instruments = [c for c in cols if _IV_RE.match(c)]
    for name in list(controls) + list(instruments):
        if name not in cols:
            raise DataValidationError("missing-column", f"column {name!r} not in data")
    n = len(cols["y"])
    xc = np.column_stack([cols[c] for c in controls]) if controls else np.empty((n, 0))
    xi = np.column_stack([cols[c] for c in instruments]) if instruments else np.empty((n, 0))
    return validate_dataset(
        cols["y"], cols["z"], cols["d"], xc, xi, control_names=controls, iv_names=instruments
    )


def read_dataset(path, controls=None, instruments=None) -> MediationDataset:
    return dataset_from_columns(read_columns(path), controls, instruments)


def write_dataset(data: MediationDataset, path) -> None:
    header = ["y", "z", "d"] + [f"x{j + 1}" for j in range(data.k)] + [
        f"iv{j + 1}" for j in range(data.m)
    ]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(data.n):
            w.writerow(
                [repr(float(data.y[i])), int(data.z[i]), int(data.d[i])]
                + [repr(float(v)) for v in data.x_controls[i]]
                + [repr(float(v)) for v in data.x_iv[i]]
            )


# ---------------------------------------------------------------- estimates


@dataclass(frozen=True)
class CMEstimates:
    """Point estimates of the five headline quantities for one method."""

    method: str
    first_stage: float
    ate: float
    ade: float
    aie: float
    coefficients: Mapping[str, float] = field(default_factory=dict)
    n_used: int = 0
    warnings: tuple = ()
    aie_share: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        for name in ("first_stage", "ate", "ade", "aie"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} is not finite")
            object.__setattr__(self, name, float(v))
        if not -1.0 <= self.first_stage <= 1.0:
            raise ValueError("first_stage outside [-1, 1]")
        share = self.aie / self.ate if self.ate != 0.0 else None
        object.__setattr__(self, "aie_share", share)
        object.__setattr__(self, "coefficients", {k: float(v) for k, v in self.coefficients.items()})
        object.__setattr__(self, "warnings", tuple(self.warnings))

    def statistic(self, name) -> float:
        v = getattr(self, name)
        return math.nan if v is None else v

    def vector(self) -> np.ndarray:
        return np.array([self.statistic(s) for s in STATISTICS])

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "first_stage": self.first_stage,
            "ate": self.ate,
            "ade": self.ade,
            "aie": self.aie,
            "aie_share": self.aie_share,
            "coefficients": dict(self.coefficients),
            "n_used": self.n_used,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d) -> "CMEstimates":
        return cls(
            method=d["method"],
            first_stage=d["first_stage"],
            ate=d["ate"],
            ade=d["ade"],
            aie=d["aie"],
            coefficients=d.get("coefficients", {}),
            n_used=d.get("n_used", 0),
            warnings=tuple(d.get("warnings", ())),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=False)

    @classmethod
    def from_json(cls, s) -> "CMEstimates":
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True, eq=False)
class PropensityFit:
    """Fitted mediator propensity score, clamped to the open unit interval.

    ``features(z, x_controls, x_iv)`` builds the first-stage design; ``predict``
    applies the probit link to it.
    """

    kind: str
    parameters: np.ndarray
    features: Callable
    pi0: np.ndarray
    pi1: np.ndarray
    pi_obs: np.ndarray
    n_clamped: int = 0
    covariance: np.ndarray | None = None
    feature_names: tuple = ()

    def predict(self, z, x_controls, x_iv) -> np.ndarray:
        from .cf import clamp_propensity
        from .stats import normal_cdf

        z = np.broadcast_to(np.asarray(z, dtype=float), (np.asarray(x_controls).shape[0],))
        p, _ = clamp_propensity(normal_cdf(self.features(z, x_controls, x_iv) @ self.parameters))
        return p


# ---------------------------------------------------------------- bootstrap


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    """Bootstrap draws (successful replications only) and their summaries."""

    draws: np.ndarray
    se: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    level: float
    failures: int
    statistics: tuple = STATISTICS
    failure_reasons: tuple = ()

    @property
    def b(self) -> int:
        return int(self.draws.shape[0])

    @classmethod
    def from_draws(cls, draws, level=0.95, failures=0, failure_reasons=(), statistics=STATISTICS):
        draws = np.asarray(draws, dtype=float).reshape(-1, len(statistics))
        alpha = (1.0 - level) / 2.0
        se = np.empty(draws.shape[1])
        lo = np.empty(draws.shape[1])
        hi = np.empty(draws.shape[1])
        for j in range(draws.shape[1]):
            col = draws[:, j]
            col = col[np.isfinite(col)]
            if col.size < 2:
                se[j] = lo[j] = hi[j] = math.nan
                continue
            se[j] = col.std(ddof=1)
            lo[j], hi[j] = np.quantile(col, [alpha, 1.0 - alpha])
        return cls(
            draws=draws,
            se=se,
            ci_lower=lo,
            ci_upper=hi,
            level=level,
            failures=failures,
            statistics=tuple(statistics),
            failure_reasons=tuple(failure_reasons),
        )

    def get(self, statistic):
        j = self.statistics.index(statistic)
        return self.se[j], self.ci_lower[j], self.ci_upper[j]

    def to_dict(self) -> dict:
        def clean(v):
            return None if not math.isfinite(v) else float(v)

        return {
            "b": self.b,
            "failures": self.failures,
            "level": self.level,
            "se": {s: clean(self.se[j]) for j, s in enumerate(self.statistics)},
            "ci": {
                s: [clean(self.ci_lower[j]), clean(self.ci_upper[j])]
                for j, s in enumerate(self.statistics)
            },
        }

    def write_draws(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["replication", *self.statistics])
            for r, row in enumerate(self.draws):
                w.writerow([r, *(repr(float(v)) for v in row)])
