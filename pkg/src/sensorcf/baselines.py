"""Comparison predictors: Pearson-correlation neighbors and personality
diagnosis.

Both follow the standard formulations.  The correlation predictor takes a
mean-centered similarity-weighted sum over the training users who rated
the target item; personality diagnosis treats each training user as a
candidate true rating vector observed through Gaussian noise and averages
their target ratings by posterior weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from .predictor import PosteriorDistribution
from .ratings import RatingPrior, RatingScale, RatingsMatrix, rating_prior

__all__ = [
    "PDParams",
    "CorrelationPredictor",
    "PersonalityDiagnosis",
    "correlation_predict",
    "pd_predict",
]

#: A Pearson weight needs at least this many co-rated items to be defined.
MIN_CORATED_FOR_WEIGHT = 2


def pearson_weight(pairs_stats: list[float]) -> float | None:
    """Pearson correlation from sufficient stats [n, sx, sy, sxx, sxy, syy].

    Returns None when undefined: fewer than two co-rated observations or
    zero variance on either side.
    """
    n, sx, sy, sxx, sxy, syy = pairs_stats
    if n < MIN_CORATED_FOR_WEIGHT:
        return None
    var_x = n * sxx - sx * sx
    var_y = n * syy - sy * sy
    if var_x <= 1e-12 or var_y <= 1e-12:
        return None
    w = (n * sxy - sx * sy) / math.sqrt(var_x * var_y)
    return min(max(w, -1.0), 1.0)


class CorrelationPredictor:
    """Memory-based prediction by similarity-weighted rating deviations.

    The prediction is the active user's observed mean plus the weighted
    mean deviation of the neighbors' target ratings from their own means,
    with weights normalized by the sum of their absolute values so the
    prediction stays bounded.  Falls back to the active user's observed
    mean, then to the global training mean.
    """

    name = "correlation"

    def __init__(self):
        self._train: RatingsMatrix | None = None
        self._user_means: list[float] = []
        self._global_mean = 0.0

    def fit(self, train: RatingsMatrix) -> "CorrelationPredictor":
        if self._train is train:
            return self
        self._user_means = [
            sum(row.values()) / len(row) if row else 0.0 for row in train.by_user
        ]
        self._global_mean = train.mean_rating() if train.n_ratings else 0.0
        self._train = train
        return self

    def predict(self, observed: Mapping[int, int], target_item: int) -> float:
        train = self._train
        if train is None:
            raise RuntimeError("predictor is not fitted")
        scale = train.scale
        if not observed:
            return self._global_mean
        active_mean = sum(observed.values()) / len(observed)
        if not 0 <= target_item < train.n_items:
            return active_mean
        raters = train.by_item[target_item]
        by_item = train.by_item

        stats: dict[int, list[float]] = {}
        for item, x in observed.items():
            if item == target_item:
                continue
            fx = float(x)
            for u, y in by_item[item].items():
                if u not in raters:
                    continue
                s = stats.get(u)
                if s is None:
                    s = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
                    stats[u] = s
                fy = float(y)
                s[0] += 1.0
                s[1] += fx
                s[2] += fy
                s[3] += fx * fx
                s[4] += fx * fy
                s[5] += fy * fy

        num = 0.0
        denom = 0.0
        for u, s in stats.items():
            w = pearson_weight(s)
            if w is None or w == 0.0:
                continue
            num += w * (raters[u] - self._user_means[u])
            denom += abs(w)
        if denom == 0.0:
            return active_mean
        return scale.clamp(active_mean + num / denom)


def correlation_predict(
    train: RatingsMatrix,
    active_observed: Mapping[int, int],
    target_item: int,
) -> float:
    """One-shot correlation prediction (fits the predictor on the spot)."""
    return CorrelationPredictor().fit(train).predict(active_observed, target_item)


@dataclass(frozen=True)
class PDParams:
    """Personality-diagnosis model parameters.

    ``sigma`` is the standard deviation of the Gaussian rating noise.
    ``prior_smoothing`` mixes that fraction of the training rating prior
    into the posterior so no rating value is ever impossible.
    """

    sigma: float = 1.0
    prior_smoothing: float = 1e-3

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if not 0.0 <= self.prior_smoothing < 1.0:
            raise ValueError("prior_smoothing must be in [0, 1)")


class PersonalityDiagnosis:
    """Probabilistic baseline: each training user is a candidate personality.

    A training user's weight is the Gaussian likelihood of the active
    user's observed ratings given that user's ratings (taken over the
    items both rated, accumulated in log space).  The posterior over the
    target rating collects the normalized weights of the raters by their
    target rating, mixed with the rating prior.
    """

    name = "pd"

    def __init__(self, params: PDParams | None = None):
        self.params = params or PDParams()
        self._train: RatingsMatrix | None = None
        self._prior: RatingPrior | None = None

    def fit(self, train: RatingsMatrix) -> "PersonalityDiagnosis":
        if self._train is train:
            return self
        self._prior = rating_prior(train)
        self._train = train
        return self

    def predict_posterior(
        self, observed: Mapping[int, int], target_item: int
    ) -> PosteriorDistribution:
        train = self._train
        if train is None:
            raise RuntimeError("predictor is not fitted")
        scale = train.scale
        prior = self._prior
        raters = (
            train.by_item[target_item]
            if 0 <= target_item < train.n_items
            else {}
        )
        if not raters:
            return PosteriorDistribution(
                dict(prior.probs), sum(v * p for v, p in prior.probs.items())
            )

        inv = 1.0 / (2.0 * self.params.sigma ** 2)
        log_w = {u: 0.0 for u in raters}
        by_item = train.by_item
        for item, x in observed.items():
            if item == target_item:
                continue
            fx = float(x)
            for u, y in by_item[item].items():
                if u in log_w:
                    d = fx - y
                    log_w[u] -= d * d * inv

        peak = max(log_w.values())
        mass: dict[int, float] = {v: 0.0 for v in scale.values}
        total = 0.0
        for u, lw in log_w.items():
            w = math.exp(lw - peak)
            mass[raters[u]] += w
            total += w
        lam = self.params.prior_smoothing
        probs = {
            v: (1.0 - lam) * (mass[v] / total) + lam * prior[v]
            for v in scale.values
        }
        return PosteriorDistribution(probs, sum(v * p for v, p in probs.items()))

    def predict(self, observed: Mapping[int, int], target_item: int) -> float:
        return self.predict_posterior(observed, target_item).expected


def pd_predict(
    train: RatingsMatrix,
    active_observed: Mapping[int, int],
    target_item: int,
    params: PDParams | None = None,
    scale: RatingScale | None = None,
) -> tuple[PosteriorDistribution, float]:
    """One-shot personality-diagnosis posterior and expected rating."""
    del scale  # the training matrix carries its scale
    model = PersonalityDiagnosis(params).fit(train)
    dist = model.predict_posterior(active_observed, target_item)
    return dist, dist.expected
