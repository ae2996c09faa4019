"""Sparse ratings storage, dataset ingestion, splits, and empirical priors.

The central object is :class:`RatingsMatrix`, an immutable sparse store of
integer-scale ratings with both a per-user and a per-item index.  On top of
it this module provides protocol-driven observed/hidden splitting of a
user's ratings, train/test partitioning of users, and the empirical rating
and rating-pair priors the prediction models consume.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence, TextIO

import numpy as np

from .seeding import substream

__all__ = [
    "RatingScale",
    "RatingsMatrix",
    "SplitSpec",
    "RatingPrior",
    "PairPrior",
    "RatingsFormatError",
    "InsufficientRatingsError",
    "load_ratings",
    "split_user",
    "rating_prior",
    "pair_prior",
    "partition_users",
]


class RatingsFormatError(ValueError):
    """A ratings file record is malformed, off-scale, or duplicated."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InsufficientRatingsError(ValueError):
    """A user has too few ratings to be split under the requested protocol."""


@dataclass(frozen=True)
class RatingScale:
    """The ordered cardinal domain of ratings (m distinct integer values)."""

    values: tuple[int, ...]

    def __post_init__(self):
        if any(float(v) != int(v) for v in self.values):
            raise ValueError("rating scale values must be integers")
        values = tuple(int(v) for v in self.values)
        object.__setattr__(self, "values", values)
        if len(values) < 2:
            raise ValueError("a rating scale needs at least two values")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("rating scale values must be strictly increasing")

    @classmethod
    def from_bounds(cls, lo: int, hi: int) -> "RatingScale":
        return cls(tuple(range(int(lo), int(hi) + 1)))

    @property
    def m(self) -> int:
        return len(self.values)

    @property
    def min(self) -> int:
        return self.values[0]

    @property
    def max(self) -> int:
        return self.values[-1]

    def __contains__(self, value: object) -> bool:
        return value in self.values

    def index(self, value: int) -> int:
        return self.values.index(value)

    def clamp(self, x: float) -> float:
        """Clamp a real value to the scale's closed range."""
        return min(max(x, self.values[0]), self.values[-1])


class RatingsMatrix:
    """Immutable sparse user-item rating store with dual indexes.

    ``by_user[u]`` maps item id -> rating and ``by_item[i]`` maps user id ->
    rating; the two indexes always hold the same set of (user, item, rating)
    triples.  Ids are dense 0-based integers; the optional label lists map
    them back to the ids found in the source file.
    """

    def __init__(
        self,
        scale: RatingScale,
        by_user: Sequence[dict[int, int]],
        by_item: Sequence[dict[int, int]],
        user_labels: Sequence[str] | None = None,
        item_labels: Sequence[str] | None = None,
    ):
        self.scale = scale
        self.by_user = list(by_user)
        self.by_item = list(by_item)
        self.user_labels = list(user_labels) if user_labels is not None else None
        self.item_labels = list(item_labels) if item_labels is not None else None
        self.n_ratings = sum(len(d) for d in self.by_user)

    @property
    def n_users(self) -> int:
        return len(self.by_user)

    @property
    def n_items(self) -> int:
        return len(self.by_item)

    @classmethod
    def from_triples(
        cls,
        triples: Iterable[tuple[int, int, int]],
        scale: RatingScale,
        n_users: int | None = None,
        n_items: int | None = None,
        user_labels: Sequence[str] | None = None,
        item_labels: Sequence[str] | None = None,
    ) -> "RatingsMatrix":
        """Build a matrix from (user, item, rating) triples with dense ids.

        Triples are canonicalized to (user, item) order so iteration over the
        indexes is deterministic regardless of input order.  Duplicate
        (user, item) pairs and off-scale ratings are rejected.
        """
        triples = sorted(triples)
        nu = n_users if n_users is not None else (triples[-1][0] + 1 if triples else 0)
        ni = n_items
        if ni is None:
            ni = max((t[1] for t in triples), default=-1) + 1
        by_user: list[dict[int, int]] = [dict() for _ in range(nu)]
        by_item: list[dict[int, int]] = [dict() for _ in range(ni)]
        for u, i, r in triples:
            if r not in scale:
                raise RatingsFormatError(f"rating {r} for ({u}, {i}) is not on the scale")
            row = by_user[u]
            if i in row:
                raise RatingsFormatError(f"duplicate rating for user {u}, item {i}")
            row[i] = r
            by_item[i][u] = r
        return cls(scale, by_user, by_item, user_labels, item_labels)

    def iter_triples(self) -> Iterator[tuple[int, int, int]]:
        """Yield (user, item, rating) in canonical (user, item) order."""
        for u, row in enumerate(self.by_user):
            for i, r in row.items():
                yield u, i, r

    def get(self, user: int, item: int) -> int | None:
        return self.by_user[user].get(item)

    def mean_rating(self) -> float:
        """Mean of all stored ratings."""
        if self.n_ratings == 0:
            raise ValueError("matrix holds no ratings")
        total = sum(r for row in self.by_user for r in row.values())
        return total / self.n_ratings

    def subset_users(self, users: Sequence[int]) -> "RatingsMatrix":
        """Matrix over the given users only, with user ids re-densified.

        Item ids (and labels) are preserved so the subset stays addressable
        in the same item space as the parent.
        """
        labels = None
        if self.user_labels is not None:
            labels = [self.user_labels[u] for u in users]
        triples = [
            (new_u, i, r)
            for new_u, old_u in enumerate(users)
            for i, r in self.by_user[old_u].items()
        ]
        return RatingsMatrix.from_triples(
            triples,
            self.scale,
            n_users=len(users),
            n_items=self.n_items,
            user_labels=labels,
            item_labels=self.item_labels,
        )

    def validate(self) -> None:
        """Check the transpose-consistency invariant (intended for tests)."""
        forward = {(u, i, r) for u, i, r in self.iter_triples()}
        backward = {
            (u, i, r) for i, col in enumerate(self.by_item) for u, r in col.items()
        }
        if forward != backward:
            raise AssertionError("by_user and by_item indexes disagree")
        for _, _, r in forward:
            if r not in self.scale:
                raise AssertionError(f"stored rating {r} is off the scale")


def _split_fields(line: str) -> list[str]:
    if "," in line:
        return [f.strip() for f in line.split(",")]
    return line.split()


def _parse_rating(token: str) -> int:
    value = float(token)
    if not value.is_integer():
        raise ValueError(f"rating {token!r} is not an integer")
    return int(value)


def load_ratings(
    source: str | Path | TextIO | io.IOBase,
    scale: RatingScale,
) -> RatingsMatrix:
    """Load delimited (user, item, rating) triples into a RatingsMatrix.

    Accepts a path or an open text/byte stream.  Fields may be separated by
    whitespace or commas; one header line is tolerated.  External user and
    item ids are remapped to dense 0-based ids in order of first appearance,
    with the original ids kept as labels.

    Raises:
        RatingsFormatError: on a malformed record, an off-scale rating, or a
            duplicate (user, item) pair; the message carries the line number.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return load_ratings(fh, scale)
    raw = source.read()
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")

    user_ids: dict[str, int] = {}
    item_ids: dict[str, int] = {}
    by_user: list[dict[int, int]] = []
    by_item: list[dict[int, int]] = []
    user_labels: list[str] = []
    item_labels: list[str] = []

    for lineno, line in enumerate(raw.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        fields = _split_fields(line)
        if len(fields) != 3:
            raise RatingsFormatError(
                f"expected 3 fields (user, item, rating), got {len(fields)}", lineno
            )
        try:
            rating = _parse_rating(fields[2])
        except ValueError:
            if lineno == 1:  # a single header line is allowed
                continue
            raise RatingsFormatError(f"unparseable rating {fields[2]!r}", lineno)
        if rating not in scale:
            raise RatingsFormatError(
                f"rating {rating} is off the scale {scale.values}", lineno
            )
        u = user_ids.setdefault(fields[0], len(user_ids))
        if u == len(by_user):
            by_user.append({})
            user_labels.append(fields[0])
        i = item_ids.setdefault(fields[1], len(item_ids))
        if i == len(by_item):
            by_item.append({})
            item_labels.append(fields[1])
        if i in by_user[u]:
            raise RatingsFormatError(
                f"duplicate rating for user {fields[0]!r}, item {fields[1]!r}", lineno
            )
        by_user[u][i] = rating
        by_item[i][u] = rating

    # canonicalize index iteration order
    by_user = [dict(sorted(d.items())) for d in by_user]
    by_item = [dict(sorted(d.items())) for d in by_item]
    return RatingsMatrix(scale, by_user, by_item, user_labels, item_labels)


@dataclass(frozen=True)
class SplitSpec:
    """Observed/hidden split protocol for one test user.

    ``all_but_1`` hides a single randomly chosen rating; ``given(x)`` keeps
    exactly ``x`` randomly chosen ratings observed and hides the rest.
    """

    kind: str
    x: int | None = None

    _KINDS = ("all_but_1", "given")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown split kind {self.kind!r}")
        if self.kind == "given":
            if self.x is None or self.x < 1:
                raise ValueError("given(x) requires x >= 1")

    @classmethod
    def all_but_1(cls) -> "SplitSpec":
        return cls("all_but_1")

    @classmethod
    def given(cls, x: int) -> "SplitSpec":
        return cls("given", x)

    @classmethod
    def parse(cls, text: str) -> "SplitSpec":
        """Parse 'allbut1' or 'givenX' (e.g. 'given10')."""
        label = text.strip().lower().replace("_", "").replace("-", "")
        if label == "allbut1":
            return cls.all_but_1()
        if label.startswith("given"):
            try:
                return cls.given(int(label[len("given"):]))
            except ValueError:
                pass
        raise ValueError(f"unrecognized protocol {text!r}")

    @property
    def label(self) -> str:
        return "allbut1" if self.kind == "all_but_1" else f"given{self.x}"

    def min_ratings(self) -> int:
        """Smallest rating count a user needs to be splittable."""
        return 2 if self.kind == "all_but_1" else self.x + 1


def split_user(
    user_ratings: Mapping[int, int] | Iterable[tuple[int, int]],
    spec: SplitSpec,
    seed: int | np.random.Generator,
) -> tuple[dict[int, int], dict[int, int]]:
    """Split one user's ratings into (observed, hidden) per the protocol.

    The input ratings are canonicalized by item id, so the same seed always
    produces the same split regardless of input ordering.

    Returns:
        (observed, hidden) dicts mapping item -> rating; their union is the
        input and their intersection is empty.

    Raises:
        InsufficientRatingsError: fewer ratings than the protocol needs.
    """
    items = sorted(dict(user_ratings).items())
    k = len(items)
    if k < spec.min_ratings():
        raise InsufficientRatingsError(
            f"{spec.label} needs at least {spec.min_ratings()} ratings, user has {k}"
        )
    rng = seed if isinstance(seed, np.random.Generator) else substream(seed, "split")
    if spec.kind == "all_but_1":
        hidden_idx = {int(rng.integers(k))}
    else:
        observed_idx = rng.choice(k, size=spec.x, replace=False)
        hidden_idx = set(range(k)) - {int(j) for j in observed_idx}
    observed = {it: r for j, (it, r) in enumerate(items) if j not in hidden_idx}
    hidden = {it: r for j, (it, r) in enumerate(items) if j in hidden_idx}
    return observed, hidden


@dataclass(frozen=True)
class RatingPrior:
    """Probability of each rating value, estimated from training data."""

    probs: dict[int, float]

    def __post_init__(self):
        total = sum(self.probs.values())
        if abs(total - 1.0) > 1e-12 or any(p < 0 for p in self.probs.values()):
            raise ValueError("prior probabilities must be nonnegative and sum to 1")

    def __getitem__(self, value: int) -> float:
        return self.probs[value]

    @property
    def expected(self) -> float:
        return sum(v * p for v, p in self.probs.items())


def rating_prior(
    train: RatingsMatrix,
    scale: RatingScale | None = None,
    smoothing: float = 1.0,
) -> RatingPrior:
    """Empirical distribution of rating values in the training matrix.

    ``smoothing`` adds that many pseudo-counts to every scale value
    (add-one by default), so no rating value ever has zero prior
    probability; physics of the downstream Bayes fusion require this,
    since a zero prior annihilates the posterior for that value.
    """
    scale = scale or train.scale
    if train.n_ratings == 0:
        raise ValueError("cannot estimate a prior from an empty training matrix")
    counts = {v: float(smoothing) for v in scale.values}
    for row in train.by_user:
        for r in row.values():
            counts[r] += 1.0
    total = sum(counts.values())
    return RatingPrior({v: c / total for v, c in counts.items()})


@dataclass(frozen=True)
class PairPrior:
    """Weight of each (x, y) rating pair; sums to 1 over the m x m grid.

    ``weights[ix, iy]`` is indexed by scale positions, with x the
    independent (target) rating and y the dependent (sensor) rating.
    """

    scale: RatingScale
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        m = self.scale.m
        if w.shape != (m, m):
            raise ValueError(f"weights must be {m}x{m} for this scale")
        if abs(float(w.sum()) - 1.0) > 1e-12 or (w < 0).any():
            raise ValueError("pair weights must be nonnegative and sum to 1")

    def weight(self, x: int, y: int) -> float:
        return float(self.weights[self.scale.index(x), self.scale.index(y)])

    @classmethod
    def uniform(cls, scale: RatingScale) -> "PairPrior":
        m = scale.m
        return cls(scale, np.full((m, m), 1.0 / (m * m)))

    @classmethod
    def from_marginal(cls, prior: RatingPrior, scale: RatingScale) -> "PairPrior":
        p = np.array([prior[v] for v in scale.values])
        return cls(scale, np.outer(p, p))

    @classmethod
    def from_events(
        cls,
        events: Iterable[tuple[int, int]],
        scale: RatingScale,
        smoothing: float = 1.0,
    ) -> "PairPrior":
        """Normalized (x, y) pair counts, add-one smoothed over all cells."""
        counts = np.full((scale.m, scale.m), float(smoothing))
        for x, y in events:
            counts[scale.index(x), scale.index(y)] += 1.0
        return cls(scale, counts / counts.sum())

    def moments(self) -> dict[str, float]:
        """Weighted moments of the pair grid, used for dummy-point fitting.

        Returns sums over cells of w * {x, y, x^2, xy, y^2, (y - x)^2},
        which is everything a unit-weight spread of dummy observations
        contributes to regression sufficient statistics.
        """
        v = np.array(self.scale.values, dtype=float)
        x = v[:, None]
        y = v[None, :]
        w = self.weights
        return {
            "x": float((w * x).sum()),
            "y": float((w * y).sum()),
            "xx": float((w * x * x).sum()),
            "xy": float((w * x * y).sum()),
            "yy": float((w * y * y).sum()),
            "dd": float((w * (y - x) ** 2).sum()),
        }


def _sample_corating_events(
    train: RatingsMatrix,
    max_events: int,
    seed: int,
) -> Iterator[tuple[int, int]]:
    """Yield (x, y) rating pairs from users who co-rated the same item.

    Enumerates all ordered pairs when that stays within ``max_events``;
    otherwise draws a bounded random sample (items weighted by their number
    of ordered co-rating pairs).
    """
    cols = [col for col in train.by_item if len(col) >= 2]
    pair_counts = np.array([len(c) * (len(c) - 1) for c in cols], dtype=float)
    total = int(pair_counts.sum())
    if total == 0:
        return
    if total <= max_events:
        for col in cols:
            ratings = list(col.values())
            for a in range(len(ratings)):
                for b in range(len(ratings)):
                    if a != b:
                        yield ratings[a], ratings[b]
        return
    rng = substream(seed, "pair-prior")
    weights = pair_counts / pair_counts.sum()
    picks = rng.choice(len(cols), size=max_events, p=weights)
    for idx in picks:
        ratings = list(cols[idx].values())
        a, b = rng.choice(len(ratings), size=2, replace=False)
        yield ratings[a], ratings[b]


def pair_prior(
    train: RatingsMatrix,
    scale: RatingScale | None = None,
    mode: str = "marginal-product",
    max_events: int = 200_000,
    seed: int = 0,
) -> PairPrior:
    """Prior over (x, y) rating pairs for spreading dummy observations.

    'marginal-product' (default) takes the outer product of the smoothed
    rating prior with itself.  'empirical-pairs' counts co-rating events
    (two users' ratings of the same item) over a bounded sample and
    add-one smooths the counts over all m^2 cells.
    """
    scale = scale or train.scale
    if train.n_ratings == 0:
        raise ValueError("cannot estimate a pair prior from an empty training matrix")
    if mode == "marginal-product":
        return PairPrior.from_marginal(rating_prior(train, scale), scale)
    if mode == "empirical-pairs":
        events = _sample_corating_events(train, max_events, seed)
        return PairPrior.from_events(events, scale)
    raise ValueError(f"unknown pair prior mode {mode!r}")


def partition_users(
    matrix: RatingsMatrix,
    train_fraction: float,
    seed: int,
) -> tuple[RatingsMatrix, dict[int, dict[int, int]]]:
    """Randomly partition users into a training matrix and test users.

    Returns the training submatrix (users re-densified, item space
    preserved) and a mapping from original user id to that user's full
    rating dict for every held-out test user.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    rng = substream(seed, "user-partition")
    order = rng.permutation(matrix.n_users)
    n_train = int(round(matrix.n_users * train_fraction))
    train_users = sorted(int(u) for u in order[:n_train])
    test_users = sorted(int(u) for u in order[n_train:])
    train = matrix.subset_users(train_users)
    test = {u: dict(matrix.by_user[u]) for u in test_users}
    return train, test
