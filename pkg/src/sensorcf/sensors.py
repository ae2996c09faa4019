"""Noisy-sensor model fitting for one (sensor, target) rating pair.

Two fits are provided.  The full fit learns a linear relationship with
Gaussian error between the target's ratings (independent variable x) and
the sensor's ratings (dependent variable y) by closed-form maximum
likelihood.  The identity fit pins the line to y = x and learns only the
error variance.  Both accept K dummy observations spread over all m^2
rating pairs by a :class:`~sensorcf.ratings.PairPrior`, realized as
fractionally weighted pseudo-points folded into the sufficient statistics;
this keeps sparse co-rating samples from producing spuriously perfect,
deterministic sensors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .ratings import PairPrior, RatingScale

__all__ = [
    "PairedObservations",
    "SensorFit",
    "NoDataError",
    "UnfittableSensorError",
    "DegenerateSensorError",
    "fit_noisy1",
    "fit_noisy2",
    "predictive_density",
    "log_predictive_density",
]

#: Variance floor applied to dummy-regularized fits (K > 0).  Plain MLE
#: fits (K = 0) are left exact, so a perfect fit reports sigma2 == 0.
DEFAULT_SIGMA2_FLOOR = 1e-6


class NoDataError(ValueError):
    """No observations and no dummy weight: nothing to fit."""


class UnfittableSensorError(ValueError):
    """The independent variable is degenerate (all x equal after dummies)."""


class DegenerateSensorError(ValueError):
    """A zero-variance sensor cannot produce a predictive density."""


@dataclass(frozen=True)
class PairedObservations:
    """Co-rating observations (x = target's rating, y = sensor's rating)."""

    pairs: tuple[tuple[float, float], ...]

    @classmethod
    def of(cls, pairs: Iterable[tuple[float, float]]) -> "PairedObservations":
        return cls(tuple((float(x), float(y)) for x, y in pairs))

    @property
    def n(self) -> int:
        return len(self.pairs)

    def sums(self) -> tuple[float, float, float, float, float, float]:
        sx = sy = sxx = sxy = syy = sdd = 0.0
        for x, y in self.pairs:
            sx += x
            sy += y
            sxx += x * x
            sxy += x * y
            syy += y * y
            sdd += (y - x) * (y - x)
        return sx, sy, sxx, sxy, syy, sdd


@dataclass(frozen=True)
class SensorFit:
    """Fitted sensor parameters for one (sensor, target) pair.

    ``r2`` is the coefficient of determination of the full fit and is None
    for identity fits, where it plays no role.  ``n`` counts real co-rated
    observations; ``k`` is the dummy weight that was folded in.
    """

    alpha: float
    beta: float
    sigma2: float
    r2: float | None
    n: int
    k: float


def _coerce(obs) -> PairedObservations:
    if isinstance(obs, PairedObservations):
        return obs
    return PairedObservations.of(obs)


def _resolve_floor(sigma2_floor: float | None, k: float) -> float:
    if sigma2_floor is not None:
        return sigma2_floor
    return DEFAULT_SIGMA2_FLOOR if k > 0 else 0.0


def fit_noisy1_from_stats(
    n: float,
    sx: float,
    sy: float,
    sxx: float,
    sxy: float,
    syy: float,
    pair_prior: PairPrior | None,
    k: float,
    sigma2_floor: float | None = None,
    n_real: int | None = None,
) -> SensorFit:
    """Closed-form weighted MLE of the linear fit from sufficient statistics.

    The real observations enter through their raw sums; each dummy cell
    (x, y) contributes weight k * w_xy through the pair prior's moments.
    This is the hot path used when statistics are accumulated incrementally.
    """
    sw = n + k
    if sw <= 0:
        raise NoDataError("no observations and no dummy weight")
    if k > 0:
        if pair_prior is None:
            raise ValueError("a pair prior is required when k > 0")
        mom = pair_prior.moments()
        sx += k * mom["x"]
        sy += k * mom["y"]
        sxx += k * mom["xx"]
        sxy += k * mom["xy"]
        syy += k * mom["yy"]
    # centered second moments of the weighted population
    sxx_c = sxx - sx * sx / sw
    sxy_c = sxy - sx * sy / sw
    syy_c = syy - sy * sy / sw
    if sxx_c <= 1e-12:
        raise UnfittableSensorError("independent variable is constant; no line fits")
    beta = sxy_c / sxx_c
    alpha = (sy - beta * sx) / sw
    sse = syy_c - beta * sxy_c
    sigma2 = max(sse, 0.0) / sw
    if syy_c <= 1e-12:
        # all y equal: the best line is flat through the mean, which by the
        # goodness-of-fit convention explains none of the (zero) variation
        r2 = 0.0
    else:
        r2 = min(max(1.0 - sse / syy_c, 0.0), 1.0)
    sigma2 = max(sigma2, _resolve_floor(sigma2_floor, k))
    return SensorFit(alpha, beta, sigma2, r2, int(n_real if n_real is not None else n), k)


def fit_noisy1(
    obs: PairedObservations | Iterable[tuple[float, float]],
    pair_prior: PairPrior | None = None,
    k: float = 1.0,
    sigma2_floor: float | None = None,
) -> SensorFit:
    """Fit intercept, slope, and error variance by weighted maximum likelihood.

    Args:
        obs: co-rated observations, x = target rating, y = sensor rating.
        pair_prior: spread of the dummy weight over rating pairs (required
            when ``k > 0``).
        k: total dummy weight added to the n real observations.
        sigma2_floor: lower bound applied to the fitted variance; defaults
            to ``DEFAULT_SIGMA2_FLOOR`` when k > 0 and to 0 when k == 0.

    Raises:
        NoDataError: n + k == 0.
        UnfittableSensorError: all x equal and no dummy spread rescues them.
    """
    obs = _coerce(obs)
    sx, sy, sxx, sxy, syy, _ = obs.sums()
    return fit_noisy1_from_stats(
        obs.n, sx, sy, sxx, sxy, syy, pair_prior, k, sigma2_floor, n_real=obs.n
    )


def fit_noisy2_from_stats(
    n: float,
    sdd: float,
    pair_prior: PairPrior | None,
    k: float,
    sigma2_floor: float | None = None,
    n_real: int | None = None,
) -> SensorFit:
    """Identity-line fit from the sum of squared rating differences."""
    sw = n + k
    if sw <= 0:
        raise NoDataError("no observations and no dummy weight")
    if k > 0:
        if pair_prior is None:
            raise ValueError("a pair prior is required when k > 0")
        sdd += k * pair_prior.moments()["dd"]
    sigma2 = max(sdd / sw, _resolve_floor(sigma2_floor, k))
    return SensorFit(0.0, 1.0, sigma2, None, int(n_real if n_real is not None else n), k)


def fit_noisy2(
    obs: PairedObservations | Iterable[tuple[float, float]],
    pair_prior: PairPrior | None = None,
    k: float = 1.0,
    sigma2_floor: float | None = None,
) -> SensorFit:
    """Fit only the error variance, assuming sensors rate like the target.

    The regression line is pinned to alpha = 0, beta = 1, so the variance
    is the (dummy-weighted) mean squared difference between the sensor's
    and the target's ratings.
    """
    obs = _coerce(obs)
    sdd = sum((y - x) * (y - x) for x, y in obs.pairs)
    return fit_noisy2_from_stats(obs.n, sdd, pair_prior, k, sigma2_floor, n_real=obs.n)


def _clamped_mean(fit: SensorFit, x: float, scale: RatingScale) -> float:
    # the regression line may leave the rating domain; the predicted mean
    # is pinned to the scale bounds rather than extrapolated
    return scale.clamp(fit.alpha + fit.beta * x)


def predictive_density(
    fit: SensorFit, y: float, x: float, scale: RatingScale
) -> float:
    """Gaussian density of sensor reading y given a hypothesized rating x.

    The mean is ``clamp(alpha + beta * x)`` to the scale's range; the
    variance is the fitted sigma2.

    Raises:
        DegenerateSensorError: the fit has zero variance.
    """
    if fit.sigma2 <= 0:
        raise DegenerateSensorError("sensor has zero variance; density undefined")
    mu = _clamped_mean(fit, x, scale)
    return math.exp(-((y - mu) ** 2) / (2.0 * fit.sigma2)) / math.sqrt(
        2.0 * math.pi * fit.sigma2
    )


def log_predictive_density(
    fit: SensorFit, y: float, x: float, scale: RatingScale
) -> float:
    """Log of :func:`predictive_density`, for underflow-free accumulation."""
    if fit.sigma2 <= 0:
        raise DegenerateSensorError("sensor has zero variance; density undefined")
    mu = _clamped_mean(fit, x, scale)
    return -0.5 * math.log(2.0 * math.pi * fit.sigma2) - (y - mu) ** 2 / (
        2.0 * fit.sigma2
    )


def log_density_profile(
    fit: SensorFit, y: float, scale: RatingScale
) -> np.ndarray:
    """Log density of reading y for every hypothesized rating on the scale."""
    if fit.sigma2 <= 0:
        raise DegenerateSensorError("sensor has zero variance; density undefined")
    values = np.asarray(scale.values, dtype=float)
    mu = np.clip(fit.alpha + fit.beta * values, scale.min, scale.max)
    return -0.5 * math.log(2.0 * math.pi * fit.sigma2) - (y - mu) ** 2 / (
        2.0 * fit.sigma2
    )
