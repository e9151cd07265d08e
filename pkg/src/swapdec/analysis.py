"""Leggett-Garg correlators, decay-rate fitting and error bars."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import sqrt
from typing import Sequence

import numpy as np

from .dynamics import LG_PAIRS, DecayResult, LGTrajectories


class InsufficientDataError(ValueError):
    pass


def _products(pairs) -> np.ndarray:
    q = np.asarray(pairs, dtype=float).reshape(-1, 2)
    if q.size == 0:
        raise ValueError("correlator needs at least one outcome pair")
    if not np.isin(q, (0, 1)).all():
        raise ValueError("outcomes must be 0 or 1")
    s = 2 * q - 1
    return s[:, 0] * s[:, 1]


def correlator(pairs: Sequence[tuple[int, int]]) -> float:
    """Mean of the +-1 products after mapping 0 -> -1, 1 -> +1."""
    return float(_products(pairs).mean())


def correlator_stderr(pairs: Sequence[tuple[int, int]]) -> float:
    """Sample standard deviation of the products over sqrt(count)."""
    prod = _products(pairs)
    if prod.size < 2:
        return 0.0
    return float(prod.std(ddof=1) / sqrt(prod.size))


@dataclass
class LGStats:
    c21: float
    c32: float
    c31: float
    k_value: float
    std_errors: tuple[float, float, float] | None = None
    trials_per_pair: int | None = None
    violation: bool = False
    theta: float | None = None

    @property
    def k_stderr(self) -> float | None:
        if self.std_errors is None:
            return None
        return sqrt(sum(e * e for e in self.std_errors))


def lg_evaluate(
    c21: float,
    c32: float,
    c31: float,
    std_errors: tuple[float, float, float] | None = None,
    trials_per_pair: int | None = None,
    theta: float | None = None,
) -> LGStats:
    """K = C21 + C32 - C31, flagged as a violation when it exceeds 1
    (by more than three combined standard errors when errors are given)."""
    for name, c in (("c21", c21), ("c32", c32), ("c31", c31)):
        if not -1 - 1e-12 <= c <= 1 + 1e-12:
            raise ValueError(f"{name}={c!r} outside [-1, 1]")
    stats = LGStats(c21, c32, c31, c21 + c32 - c31, std_errors, trials_per_pair, theta=theta)
    threshold = 1.0 if std_errors is None else 1.0 + 3 * stats.k_stderr
    stats.violation = stats.k_value > threshold
    return stats


def lg_from_trajectories(traj: LGTrajectories) -> LGStats:
    cs = [correlator(traj.pairs[p]) for p in LG_PAIRS]
    errs = tuple(correlator_stderr(traj.pairs[p]) for p in LG_PAIRS)
    return lg_evaluate(*cs, std_errors=errs, trials_per_pair=traj.trials_per_pair, theta=traj.theta)


def lg_quantum_k(theta: float) -> float:
    """K for a qubit precessing by theta per interval: 2 cos(theta) - cos(2 theta)."""
    return 2 * np.cos(theta) - np.cos(2 * theta)


@dataclass
class DecayFit:
    rate_per_interval: float
    r_squared: float
    intervals_used: int
    slope: float
    intercept: float
    excluded_cycles: list[int] = field(default_factory=list)
    rate_stderr: float | None = None


def _loglinear_fit(x: np.ndarray, f: np.ndarray) -> tuple[float, float, float]:
    y = np.log(f)
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    if sxx == 0:
        raise InsufficientDataError("all usable points share one interval count")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    ss_res = float(np.sum((y - intercept - slope * x) ** 2))
    ss_tot = float(np.sum((y - ym) ** 2))
    # a flat line fitted exactly counts as a perfect fit
    r2 = 1.0 if ss_tot <= 1e-300 else max(0.0, 1.0 - ss_res / ss_tot)
    return slope, intercept, r2


def fit_decay_curve(cycles: Sequence[int], fraction_pure: Sequence[float], n: int) -> DecayFit:
    """Least squares of ln(fraction_pure) against cycle * (n - 1)."""
    cycles = np.asarray(cycles, dtype=float)
    f = np.asarray(fraction_pure, dtype=float)
    usable = f > 0
    if np.count_nonzero(usable) < 3:
        raise InsufficientDataError(
            f"need at least 3 cycles with fraction_pure > 0, have {int(np.count_nonzero(usable))}"
        )
    x = cycles[usable] * (n - 1)
    slope, intercept, r2 = _loglinear_fit(x, f[usable])
    return DecayFit(
        rate_per_interval=float(np.exp(slope)),
        r_squared=r2,
        intervals_used=int(np.count_nonzero(usable)),
        slope=slope,
        intercept=intercept,
        excluded_cycles=[int(c) for c in cycles[~usable]],
    )


def fit_decay(decay: DecayResult, bootstrap: int = 0, seed: int = 0) -> DecayFit:
    """Fit the decay rate; with ``bootstrap`` > 0 also resample trials to
    attach a standard error on the rate."""
    cyc = [c.cycle for c in decay.cycles]
    n = decay.config.n
    fit = fit_decay_curve(cyc, decay.fraction_pure, n)
    if bootstrap:
        fit.rate_stderr = bootstrap_rate_stderr(decay, bootstrap, seed)
    return fit


def fraction_pure_from_first_coupling(first: np.ndarray, m: int, n: int) -> np.ndarray:
    horizons = np.arange(1, m + 1) * (n - 1)
    still = (first[:, None] == 0) | (first[:, None] > horizons[None, :])
    return still.mean(axis=0)


def bootstrap_rate_stderr(decay: DecayResult, resamples: int = 1000, seed: int = 0) -> float:
    """Standard deviation of the fitted rate over trial resamples."""
    rng = np.random.default_rng(seed)
    first = decay.first_coupling
    m, n = decay.config.m, decay.config.n
    cyc = np.arange(1, m + 1)
    rates = []
    for _ in range(resamples):
        sample = first[rng.integers(0, first.size, first.size)]
        try:
            rates.append(fit_decay_curve(cyc, fraction_pure_from_first_coupling(sample, m, n), n).rate_per_interval)
        except InsufficientDataError:
            continue
    if len(rates) < 2:
        raise InsufficientDataError("too few bootstrap resamples produced a fit")
    return float(np.std(rates, ddof=1))


def binomial_sigma(p: float, trials: int) -> float:
    return sqrt(p * (1 - p) / trials)
