"""Synthetic ratings corpora for benchmarks, demos, and tests.

Generates an integer-scale ratings population with the broad shape of the
classic movie-ratings benchmarks: many more users than items, long-tailed
item popularity, per-user activity spread over an order of magnitude,
item-quality effects stronger than personal bias, and a shared
taste-interaction component observed through independent rating noise.
"""

from __future__ import annotations

import numpy as np

from .ratings import RatingScale, RatingsMatrix
from .seeding import substream

__all__ = ["synthetic_ratings"]


def synthetic_ratings(
    n_users: int = 2000,
    n_items: int = 800,
    n_ratings: int = 100_000,
    scale: RatingScale | None = None,
    seed: int = 0,
    base: float = 2.9,
    user_bias_sd: float = 0.35,
    item_bias_sd: float = 0.75,
    taste_sd: float = 0.55,
    noise_sd: float = 0.85,
    latent_dim: int = 6,
    popularity_exponent: float = 0.8,
    min_ratings_per_user: int = 16,
) -> RatingsMatrix:
    """Draw a sparse ratings matrix from a latent-factor population model.

    Each rating is ``base + user bias + item bias + taste interaction +
    noise`` rounded and clipped to the scale.  Items are sampled per user
    without replacement under a Zipf-like popularity law; per-user rating
    counts follow a lognormal law rescaled to hit ``n_ratings`` in total.
    """
    scale = scale or RatingScale.from_bounds(0, 5)
    rng = substream(seed, "synthetic-ratings")

    user_bias = rng.normal(0.0, user_bias_sd, n_users)
    item_bias = rng.normal(0.0, item_bias_sd, n_items)
    u_vec = rng.normal(0.0, 1.0, (n_users, latent_dim)) / np.sqrt(latent_dim)
    v_vec = rng.normal(0.0, 1.0, (n_items, latent_dim)) / np.sqrt(latent_dim)

    popularity = (np.arange(n_items) + 1.0) ** -popularity_exponent
    rng.shuffle(popularity)
    popularity /= popularity.sum()

    activity = rng.lognormal(0.0, 0.6, n_users)
    counts = activity / activity.sum() * n_ratings
    counts = np.maximum(counts.round().astype(int), min_ratings_per_user)
    counts = np.minimum(counts, n_items)

    triples: list[tuple[int, int, int]] = []
    lo, hi = scale.min, scale.max
    for u in range(n_users):
        items = rng.choice(n_items, size=counts[u], replace=False, p=popularity)
        means = (
            base
            + user_bias[u]
            + item_bias[items]
            + taste_sd * (v_vec[items] @ u_vec[u])
        )
        raw = np.rint(means + rng.normal(0.0, noise_sd, items.size))
        ratings = np.clip(raw, lo, hi).astype(int)
        triples.extend(
            (u, it, r) for it, r in zip(items.tolist(), ratings.tolist())
        )

    return RatingsMatrix.from_triples(triples, scale)
