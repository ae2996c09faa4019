"""Assemble and evaluate the fused sensor network for one prediction.

For an active user and a target item, every training user who rated the
target and every item the active user has rated is a candidate sensor.
Candidates are fitted, ranked by reliability (coefficient of determination
for the full linear fit, variance for the identity fit), truncated to the
best U user sensors and I item sensors, and fused with the rating prior by
Bayes' rule into a posterior distribution over the rating scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .ratings import PairPrior, RatingPrior, RatingScale, RatingsMatrix, rating_prior
from .sensors import (
    SensorFit,
    UnfittableSensorError,
    fit_noisy1_from_stats,
    fit_noisy2_from_stats,
)

__all__ = [
    "SensorRef",
    "FittedModel",
    "PosteriorDistribution",
    "InternalInvariantError",
    "build_model",
    "posterior",
    "predict",
    "save_model",
    "load_model",
]

VARIANTS = ("noisy1", "noisy2")

#: Minimum real co-rated observations for a candidate to be fitted.  A
#: slope learned from a single point plus dummies is dominated by the
#: prior, so the full fit demands two; the identity fit accepts one.
DEFAULT_MIN_CORATED = {"noisy1": 2, "noisy2": 1}


class InternalInvariantError(RuntimeError):
    """An internal consistency guarantee was violated."""


@dataclass(frozen=True)
class SensorRef:
    """One selected sensor: its fit and the reading it contributes.

    For a user sensor the evidence is that user's rating of the target
    item; for an item sensor it is the active user's rating of that item.
    """

    kind: str  # "user" | "item"
    id: int
    fit: SensorFit
    evidence: int


@dataclass(frozen=True)
class FittedModel:
    """Prediction context: prior plus ranked, truncated sensor lists."""

    variant: str
    k: float
    u_max: int
    i_max: int
    target_item: int
    prior: RatingPrior
    user_sensors: tuple[SensorRef, ...]
    item_sensors: tuple[SensorRef, ...]

    @property
    def params(self) -> tuple[float, int, int]:
        return (self.k, self.u_max, self.i_max)


@dataclass(frozen=True)
class PosteriorDistribution:
    """Posterior over the rating scale and its expected value."""

    probs: dict[int, float]
    expected: float

    def __post_init__(self):
        total = sum(self.probs.values())
        if abs(total - 1.0) > 1e-10 or any(p < 0 for p in self.probs.values()):
            raise ValueError("posterior must be a distribution")

    def mode(self) -> int:
        return max(self.probs, key=lambda v: self.probs[v])


def _user_sensor_candidates(
    train: RatingsMatrix,
    observed: Mapping[int, int],
    target_item: int,
    active_user: int | None,
    full_stats: bool,
) -> dict[int, list[float]]:
    """Accumulate per-candidate sufficient statistics over co-rated items.

    Traverses the item index of each observed item once, so the cost is the
    total number of ratings on the active user's observed items.
    Stat layout: [n, sx, sy, sxx, sxy, syy] for the full fit, [n, sdd] for
    the identity fit; x is the active user's rating, y the candidate's.
    """
    raters = train.by_item[target_item]
    by_item = train.by_item
    stats: dict[int, list[float]] = {}
    for item, x in observed.items():
        if item == target_item:
            continue
        fx = float(x)
        if full_stats:
            for u, y in by_item[item].items():
                if u not in raters or u == active_user:
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
        else:
            for u, y in by_item[item].items():
                if u not in raters or u == active_user:
                    continue
                s = stats.get(u)
                if s is None:
                    s = [0.0, 0.0]
                    stats[u] = s
                d = float(y) - fx
                s[0] += 1.0
                s[1] += d * d
    return stats


def _item_sensor_stats(
    train: RatingsMatrix,
    other_item: int,
    target_item: int,
    full_stats: bool,
) -> list[float]:
    """Sufficient statistics over users who rated both items.

    x is the rating received by the target item, y the rating received by
    the other item; iterates the smaller of the two rater sets.
    """
    col_j = train.by_item[target_item]
    col_k = train.by_item[other_item]
    target_is_small = len(col_j) <= len(col_k)
    small, big = (col_j, col_k) if target_is_small else (col_k, col_j)
    if full_stats:
        s = [0.0] * 6
        for w, r_small in small.items():
            r_big = big.get(w)
            if r_big is None:
                continue
            x = float(r_small) if target_is_small else float(r_big)
            y = float(r_big) if target_is_small else float(r_small)
            s[0] += 1.0
            s[1] += x
            s[2] += y
            s[3] += x * x
            s[4] += x * y
            s[5] += y * y
    else:
        s = [0.0, 0.0]
        for w, r_small in small.items():
            r_big = big.get(w)
            if r_big is None:
                continue
            d = float(r_big) - float(r_small) if target_is_small else float(r_small) - float(r_big)
            s[0] += 1.0
            s[1] += d * d
    return s


def _fit_candidate(
    variant: str,
    s: list[float],
    pair_prior: PairPrior,
    k: float,
    sigma2_floor: float | None,
) -> SensorFit | None:
    try:
        if variant == "noisy1":
            return fit_noisy1_from_stats(
                s[0], s[1], s[2], s[3], s[4], s[5], pair_prior, k, sigma2_floor
            )
        return fit_noisy2_from_stats(s[0], s[1], pair_prior, k, sigma2_floor)
    except UnfittableSensorError:
        return None


def _rank_key(variant: str):
    if variant == "noisy1":
        return lambda ref: (-ref.fit.r2, -ref.fit.n, ref.id)
    return lambda ref: (ref.fit.sigma2, -ref.fit.n, ref.id)


def build_model(
    train: RatingsMatrix,
    active_observed: Mapping[int, int],
    target_item: int,
    variant: str = "noisy2",
    k: float = 1.0,
    u_max: int = 50,
    i_max: int = 20,
    min_corated: int | None = None,
    prior: RatingPrior | None = None,
    pair_prior: PairPrior | None = None,
    active_user: int | None = None,
    sigma2_floor: float | None = None,
) -> FittedModel:
    """Fit, rank, and select the sensors for one (active user, item) query.

    Args:
        train: the training ratings matrix.
        active_observed: the active user's observed ratings, item -> rating.
        target_item: the item whose rating is being predicted.
        variant: 'noisy1' (full linear fit, ranked by r^2 descending) or
            'noisy2' (identity fit, ranked by variance ascending).
        k: dummy-observation weight folded into every fit.
        u_max: keep at most this many user sensors.
        i_max: keep at most this many item sensors.
        min_corated: minimum real co-rated observations per candidate;
            defaults to 2 for noisy1 and 1 for noisy2.
        prior: rating prior; computed from ``train`` when omitted.
        pair_prior: dummy spread; marginal product of ``prior`` when omitted.
        active_user: the active user's id in ``train``, if they are part of
            it, so their own row is excluded from the candidates.

    A model with zero sensors is valid; its posterior is the prior.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if prior is None:
        prior = rating_prior(train)
    if pair_prior is None:
        pair_prior = PairPrior.from_marginal(prior, train.scale)
    if min_corated is None:
        min_corated = DEFAULT_MIN_CORATED[variant]
    full = variant == "noisy1"
    key = _rank_key(variant)

    target_in_index = 0 <= target_item < train.n_items
    user_refs: list[SensorRef] = []
    if target_in_index and u_max > 0:
        raters = train.by_item[target_item]
        stats = _user_sensor_candidates(train, active_observed, target_item, active_user, full)
        for u, s in stats.items():
            if s[0] < min_corated:
                continue
            fit = _fit_candidate(variant, s, pair_prior, k, sigma2_floor)
            if fit is not None:
                user_refs.append(SensorRef("user", u, fit, raters[u]))
        user_refs.sort(key=key)
        del user_refs[u_max:]

    item_refs: list[SensorRef] = []
    if target_in_index and i_max > 0:
        for item, evidence in active_observed.items():
            if item == target_item or not 0 <= item < train.n_items:
                continue
            s = _item_sensor_stats(train, item, target_item, full)
            if s[0] < min_corated:
                continue
            fit = _fit_candidate(variant, s, pair_prior, k, sigma2_floor)
            if fit is not None:
                item_refs.append(SensorRef("item", item, fit, evidence))
        item_refs.sort(key=key)
        del item_refs[i_max:]

    return FittedModel(
        variant, k, u_max, i_max, target_item, prior,
        tuple(user_refs), tuple(item_refs),
    )


def posterior(model: FittedModel, scale: RatingScale) -> PosteriorDistribution:
    """Fuse the prior with every sensor's likelihood by Bayes' rule.

    Scores accumulate as sums of log densities and are normalized after
    subtracting the maximum, so dozens of small sensor densities cannot
    underflow the way a plain product would.
    """
    values = np.asarray(scale.values, dtype=float)
    with np.errstate(divide="ignore"):
        logp = np.log(
            np.array([model.prior.probs.get(v, 0.0) for v in scale.values], dtype=float)
        )
    sensors = model.user_sensors + model.item_sensors
    if sensors:
        alpha = np.array([s.fit.alpha for s in sensors])
        beta = np.array([s.fit.beta for s in sensors])
        sig2 = np.array([s.fit.sigma2 for s in sensors])
        y = np.array([float(s.evidence) for s in sensors])
        mu = np.clip(alpha[:, None] + beta[:, None] * values[None, :], scale.min, scale.max)
        logd = -0.5 * np.log(2.0 * np.pi * sig2)[:, None] - (y[:, None] - mu) ** 2 / (
            2.0 * sig2[:, None]
        )
        logp = logp + logd.sum(axis=0)
    peak = logp.max()
    if not np.isfinite(peak):
        raise InternalInvariantError("all rating hypotheses scored zero probability")
    p = np.exp(logp - peak)
    p /= p.sum()
    probs = {v: float(pv) for v, pv in zip(scale.values, p)}
    return PosteriorDistribution(probs, float(p @ values))


def predict(model: FittedModel, scale: RatingScale) -> float:
    """Expected rating under the model's posterior."""
    return posterior(model, scale).expected


class NoisySensorPredictor:
    """Stateful fit/predict wrapper around :func:`build_model`.

    Precomputes the rating and pair priors once per training matrix so
    repeated predictions share them.
    """

    def __init__(
        self,
        variant: str = "noisy2",
        k: float = 1.0,
        u_max: int = 50,
        i_max: int = 20,
        min_corated: int | None = None,
        sigma2_floor: float | None = None,
        pair_prior_mode: str = "marginal-product",
    ):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        self.variant = variant
        self.k = k
        self.u_max = u_max
        self.i_max = i_max
        self.min_corated = min_corated
        self.sigma2_floor = sigma2_floor
        self.pair_prior_mode = pair_prior_mode
        self._train: RatingsMatrix | None = None
        self._prior: RatingPrior | None = None
        self._pair_prior: PairPrior | None = None

    @property
    def name(self) -> str:
        return self.variant

    def fit(self, train: RatingsMatrix) -> "NoisySensorPredictor":
        if self._train is train:
            return self
        from .ratings import pair_prior as make_pair_prior

        self._prior = rating_prior(train)
        self._pair_prior = make_pair_prior(train, mode=self.pair_prior_mode)
        self._train = train
        return self

    def build(self, observed: Mapping[int, int], target_item: int) -> FittedModel:
        if self._train is None:
            raise RuntimeError("predictor is not fitted")
        return build_model(
            self._train,
            observed,
            target_item,
            variant=self.variant,
            k=self.k,
            u_max=self.u_max,
            i_max=self.i_max,
            min_corated=self.min_corated,
            prior=self._prior,
            pair_prior=self._pair_prior,
            sigma2_floor=self.sigma2_floor,
        )

    def predict_posterior(
        self, observed: Mapping[int, int], target_item: int
    ) -> PosteriorDistribution:
        return posterior(self.build(observed, target_item), self._train.scale)

    def predict(self, observed: Mapping[int, int], target_item: int) -> float:
        return self.predict_posterior(observed, target_item).expected


_FORMAT_NAME = "sensorcf-model"
_FORMAT_VERSION = "1"


def save_model(model: FittedModel, scale: RatingScale, path: str | Path) -> None:
    """Write the model as a versioned flat record file (tab-delimited).

    Header records carry the format version, variant, parameters, scale,
    and prior; each sensor is one record of
    kind, id, alpha, beta, sigma2, r2, n, evidence.
    """
    lines = [
        f"{_FORMAT_NAME}\t{_FORMAT_VERSION}",
        f"variant\t{model.variant}",
        f"k\t{model.k!r}",
        f"u_max\t{model.u_max}",
        f"i_max\t{model.i_max}",
        f"target_item\t{model.target_item}",
        "scale\t" + ",".join(str(v) for v in scale.values),
        "prior\t" + ",".join(f"{v}:{p!r}" for v, p in model.prior.probs.items()),
    ]
    for ref in model.user_sensors + model.item_sensors:
        f = ref.fit
        r2 = "-" if f.r2 is None else repr(f.r2)
        lines.append(
            f"sensor\t{ref.kind}\t{ref.id}\t{f.alpha!r}\t{f.beta!r}"
            f"\t{f.sigma2!r}\t{r2}\t{f.n}\t{ref.evidence}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> tuple[FittedModel, RatingScale]:
    """Read a model file written by :func:`save_model`."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].split("\t") != [_FORMAT_NAME, _FORMAT_VERSION]:
        raise ValueError(f"{path}: not a {_FORMAT_NAME} v{_FORMAT_VERSION} file")
    header: dict[str, str] = {}
    user_refs: list[SensorRef] = []
    item_refs: list[SensorRef] = []
    for line in lines[1:]:
        if not line.strip():
            continue
        fields = line.split("\t")
        if fields[0] == "sensor":
            _, kind, sid, alpha, beta, sigma2, r2, n, evidence = fields
            fit = SensorFit(
                float(alpha), float(beta), float(sigma2),
                None if r2 == "-" else float(r2),
                int(n), float(header["k"]),
            )
            ref = SensorRef(kind, int(sid), fit, int(evidence))
            (user_refs if kind == "user" else item_refs).append(ref)
        else:
            header[fields[0]] = fields[1]
    scale = RatingScale(tuple(int(v) for v in header["scale"].split(",")))
    probs = {}
    for entry in header["prior"].split(","):
        v, p = entry.split(":")
        probs[int(v)] = float(p)
    model = FittedModel(
        header["variant"], float(header["k"]), int(header["u_max"]),
        int(header["i_max"]), int(header["target_item"]), RatingPrior(probs),
        tuple(user_refs), tuple(item_refs),
    )
    return model, scale
