"""Distances between empirical measures and the error aggregates used in the experiments."""
from __future__ import annotations

import math

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .errors import ConfigurationError, GridMismatchError

ASSIGNMENT_CAP = 512


def _as_samples(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[0] == 0:
        raise ConfigurationError("expected a non-empty (m, dim) sample array")
    if not np.all(np.isfinite(a)):
        raise ConfigurationError("samples must be finite")
    return a


def _check_q(q):
    if q < 1:
        raise ConfigurationError("Wasserstein order q must be >= 1")


def wasserstein_1d(a, b, q: float = 2.0) -> float:
    """W_q between equal-size 1-D samples via the sorted (monotone) coupling."""
    _check_q(q)
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise ConfigurationError("empty sample")
    if a.size != b.size:
        raise ConfigurationError("wasserstein_1d needs equal sample sizes; resample upstream")
    return float(np.mean(np.abs(a - b) ** q) ** (1.0 / q))


def _assignment_cost(a, b, q):
    cost = cdist(a, b) ** q
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum())


def subsampled_wasserstein(a, b, q=2.0, cap=ASSIGNMENT_CAP, n_rep=16, seed=0, paired=False):
    """Mean and standard error of exact W_q over ``n_rep`` random size-``cap`` subsamples.

    With ``paired=True`` both inputs are subsampled at the same row indices,
    which keeps any index coupling between them.
    """
    a = _as_samples(a)
    b = _as_samples(b)
    if a.shape != b.shape:
        raise ConfigurationError("equal-size inputs of equal dimension required")
    m = a.shape[0]
    cap = min(cap, m)
    rng = np.random.default_rng(seed)
    vals = np.empty(n_rep)
    for r in range(n_rep):
        ia = rng.choice(m, cap, replace=False)
        ib = ia if paired else rng.choice(m, cap, replace=False)
        vals[r] = (_assignment_cost(a[ia], b[ib], q) / cap) ** (1.0 / q)
    stderr = float(vals.std(ddof=1) / math.sqrt(n_rep)) if n_rep > 1 else float("nan")
    return float(vals.mean()), stderr


def wasserstein_assignment(a, b, q: float = 2.0, cap: int = ASSIGNMENT_CAP, subsample: bool = False, **kwargs) -> float:
    """W_q between equal-size empirical measures in any dimension.

    Solves the m x m assignment problem with costs |a_i - b_j|^q. Above ``cap``
    points this raises unless ``subsample`` is set, in which case the mean of
    ``subsampled_wasserstein`` is returned.
    """
    _check_q(q)
    a = _as_samples(a)
    b = _as_samples(b)
    if a.shape != b.shape:
        raise ConfigurationError("equal-size inputs of equal dimension required; resample upstream")
    m = a.shape[0]
    if m > cap:
        if not subsample:
            raise ConfigurationError(f"m={m} exceeds assignment cap {cap}; enable subsampling")
        return subsampled_wasserstein(a, b, q, cap, **kwargs)[0]
    return (_assignment_cost(a, b, q) / m) ** (1.0 / q)


def tv_error(a, b) -> float:
    """L1 distance between two histogram densities on the same grid."""
    if a.grid != b.grid:
        raise GridMismatchError("histograms live on different grids")
    return float(np.sum(np.abs(a.density - b.density)) * a.grid.cell_volume)


def mse_temperature(run_temps, ref_temp: float) -> float:
    t = np.asarray(run_temps, dtype=np.float64)
    if t.size == 0:
        raise ConfigurationError("no runs supplied")
    return float(np.mean((ref_temp - t) ** 2))


def mse_with_stderr(run_temps, ref_temps):
    """MSE of per-replicate temperatures and the standard error of that mean."""
    sq = (np.asarray(ref_temps, dtype=np.float64) - np.asarray(run_temps, dtype=np.float64)) ** 2
    if sq.size == 0:
        raise ConfigurationError("no runs supplied")
    se = float(sq.std(ddof=1) / math.sqrt(sq.size)) if sq.size > 1 else float("nan")
    return float(sq.mean()), se
