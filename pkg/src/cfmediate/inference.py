"""Pairs bootstrap that reruns both estimation stages in every replication."""

from __future__ import annotations

from collections import Counter
from functools import partial

import numpy as np

from .errors import MediationError, UnstableBootstrapError
from .estimators import ESTIMATORS
from .model import BootstrapResult, MediationDataset
from .parallel import ordered_map
from .stats import rng_split

MAX_FAILURE_RATE = 0.20


def resample_index(n, seed, replication, stream=()):
    """Row indices for one replication; depends only on its arguments."""
    rng = rng_split(seed, (*stream, int(replication)))
    return rng.integers(0, n, size=n)


def _replicate(r, data, method, seed, stream, kwargs):
    idx = resample_index(data.n, seed, r, stream)
    try:
        est = ESTIMATORS[method](data.take(idx), **kwargs)
    except (MediationError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return None, type(exc).__name__
    return est.vector(), None


def bootstrap(
    data: MediationDataset,
    method: str,
    b: int,
    seed: int,
    level: float = 0.95,
    workers: int = 1,
    stream=(),
    estimator_kwargs=None,
) -> BootstrapResult:
    """Resample rows with replacement ``b`` times and re-estimate.

    Replication ``r`` draws its rows from ``rng_split(seed, (*stream, r))``, so
    the draws matrix is identical for any ``workers``. Failed replications are
    dropped and counted; more than 20% failures raises
    :class:`UnstableBootstrapError`.

    Parameters
    ----------
    data : MediationDataset
    method : str
        Key of :data:`cfmediate.estimators.ESTIMATORS` (dashes allowed).
    b : int
        Number of replications, at least 2.
    seed : int
    level : float
        Percentile interval coverage.
    workers : int
        Worker processes.
    stream : tuple of int
        Prefix for the per-replication stream ids, letting callers nest
        bootstraps inside outer simulations without overlapping streams.
    """
    method = method.replace("-", "_")
    if method not in ESTIMATORS:
        raise ValueError(f"unknown method {method!r}")
    if int(b) < 2:
        raise ValueError("bootstrap needs b >= 2")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    fn = partial(
        _replicate,
        data=data,
        method=method,
        seed=int(seed),
        stream=tuple(int(s) for s in stream),
        kwargs=dict(estimator_kwargs or {}),
    )
    results = ordered_map(fn, range(int(b)), workers=workers)
    draws = [v for v, _ in results if v is not None]
    reasons = Counter(err for _, err in results if err is not None)
    failures = sum(reasons.values())
    if failures > MAX_FAILURE_RATE * b:
        raise UnstableBootstrapError(
            f"{failures} of {b} bootstrap replications failed",
            diagnostics={"b": int(b), "failures": failures, "reasons": dict(reasons)},
        )
    return BootstrapResult.from_draws(
        np.array(draws).reshape(len(draws), -1),
        level=level,
        failures=failures,
        failure_reasons=tuple(sorted(reasons.items())),
    )
