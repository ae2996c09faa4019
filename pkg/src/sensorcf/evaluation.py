"""Benchmark harness: protocols, error metrics, and significance testing.

Scoring follows the train/test-user methodology: each test user's ratings
are split into an observed set and a hidden set per protocol, every hidden
rating is predicted from the observed set plus the training matrix, and
accuracy is the per-user mean absolute deviation averaged over users.
Extreme-rating subsets and a sign-flip randomization test over paired
sample means complete the report.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from .baselines import CorrelationPredictor, PDParams, PersonalityDiagnosis
from .predictor import NoisySensorPredictor
from .ratings import (
    InsufficientRatingsError,
    RatingsMatrix,
    SplitSpec,
    split_user,
)
from .seeding import substream

__all__ = [
    "PredictionRecord",
    "EvalRow",
    "EvalReport",
    "RatingAlgorithm",
    "make_algorithm",
    "mae",
    "extreme_filter",
    "extreme_band",
    "randomization_test",
    "paired_sample_diffs",
    "significance_pair",
    "run_protocol",
    "write_records",
    "read_records",
    "format_report",
]

ALGORITHM_NAMES = ("noisy1", "noisy2", "pd", "correlation")

#: Number of equal-size paired samples for the randomization test.
DEFAULT_SAMPLES = 60
DEFAULT_PERMUTATIONS = 10_000

#: Half-width of the band around the training mean outside which an actual
#: rating counts as extreme.
EXTREME_MARGIN = 0.5


@dataclass(frozen=True)
class PredictionRecord:
    """One scored prediction: the target pair, truth, and model output."""

    user: int
    item: int
    actual: int
    predicted: float

    def __post_init__(self):
        if not math.isfinite(self.predicted):
            raise ValueError(f"non-finite prediction for ({self.user}, {self.item})")


class RatingAlgorithm(Protocol):
    """Anything that can be fitted to a matrix and predict single ratings."""

    name: str

    def fit(self, train: RatingsMatrix) -> "RatingAlgorithm": ...

    def predict(self, observed: Mapping[int, int], target_item: int) -> float: ...


def make_algorithm(
    name: str,
    k: float = 1.0,
    u_max: int = 50,
    i_max: int = 20,
    min_corated: int | None = None,
    pd_sigma: float = 1.0,
) -> RatingAlgorithm:
    """Instantiate one of the four benchmark algorithms by name."""
    if name in ("noisy1", "noisy2"):
        return NoisySensorPredictor(
            variant=name, k=k, u_max=u_max, i_max=i_max, min_corated=min_corated
        )
    if name == "pd":
        return PersonalityDiagnosis(PDParams(sigma=pd_sigma))
    if name == "correlation":
        return CorrelationPredictor()
    raise ValueError(f"unknown algorithm {name!r}; expected one of {ALGORITHM_NAMES}")


def mae(records: Iterable[PredictionRecord]) -> float:
    """Average absolute deviation: per-user mean error, averaged over users.

    The two-level order matters; pooling all records first would weight
    heavy raters more.
    """
    per_user: dict[int, list[float]] = {}
    for rec in records:
        per_user.setdefault(rec.user, []).append(abs(rec.predicted - rec.actual))
    if not per_user:
        raise ValueError("mae of no records is undefined")
    return sum(sum(devs) / len(devs) for devs in per_user.values()) / len(per_user)


def extreme_band(train_mean: float) -> tuple[float, float]:
    return train_mean - EXTREME_MARGIN, train_mean + EXTREME_MARGIN


def extreme_filter(
    records: Iterable[PredictionRecord], global_mean: float
) -> list[PredictionRecord]:
    """Keep records whose actual rating is strictly outside mean +- 0.5."""
    lo, hi = extreme_band(global_mean)
    return [r for r in records if r.actual < lo or r.actual > hi]


def randomization_test(
    diffs: Sequence[float] | np.ndarray,
    permutations: int = DEFAULT_PERMUTATIONS,
    seed: int = 0,
) -> float:
    """Randomization paired-sample test on per-sample mean differences.

    Each resample flips the sign of every difference independently with
    probability one half; the returned significance level is the fraction
    of resampled means less than or equal to the observed mean (ties
    included).  Small values mean the observed mean is unusually low under
    the null that the two score sequences are exchangeable.
    """
    d = np.asarray(diffs, dtype=float)
    if d.size == 0:
        raise ValueError("no differences to test")
    if permutations < 1:
        raise ValueError("need at least one permutation")
    observed = float(d.mean())
    rng = substream(seed, "randomization")
    signs = rng.integers(0, 2, size=(permutations, d.size)) * 2 - 1
    means = (signs * d).mean(axis=1)
    return float(np.count_nonzero(means <= observed) / permutations)


def _bucket(user: int, item: int, seed: int, n_samples: int) -> int:
    # stable across runs and platforms, unlike the builtin salted hash()
    digest = hashlib.blake2b(
        f"{seed}:{user}:{item}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big") % n_samples


def paired_sample_diffs(
    records_a: Sequence[PredictionRecord],
    records_b: Sequence[PredictionRecord],
    n_samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
) -> np.ndarray:
    """Per-sample mean differences of absolute deviation, A minus B.

    Predictions are hashed by (user, item) into ``n_samples`` near-equal
    buckets; both record sets must cover exactly the same (user, item)
    pairs.  Buckets that received no records are dropped.
    """
    b_index = {(r.user, r.item): r for r in records_b}
    if len(b_index) != len(records_b):
        raise ValueError("duplicate (user, item) pairs in records")
    a_keys = {(r.user, r.item) for r in records_a}
    if len(a_keys) != len(records_a) or a_keys != set(b_index):
        raise ValueError("record sets do not cover identical (user, item) pairs")
    sums = np.zeros(n_samples)
    counts = np.zeros(n_samples, dtype=int)
    for ra in records_a:
        rb = b_index[(ra.user, ra.item)]
        idx = _bucket(ra.user, ra.item, seed, n_samples)
        sums[idx] += abs(ra.predicted - ra.actual) - abs(rb.predicted - rb.actual)
        counts[idx] += 1
    filled = counts > 0
    return sums[filled] / counts[filled]


def significance_pair(
    records_a: Sequence[PredictionRecord],
    records_b: Sequence[PredictionRecord],
    n_samples: int = DEFAULT_SAMPLES,
    permutations: int = DEFAULT_PERMUTATIONS,
    seed: int = 0,
) -> tuple[float, float]:
    """Significance levels in both directions (A vs B, then B vs A)."""
    diffs = paired_sample_diffs(records_a, records_b, n_samples, seed)
    return (
        randomization_test(diffs, permutations, seed),
        randomization_test(-diffs, permutations, seed),
    )


@dataclass(frozen=True)
class EvalRow:
    """One (algorithm, protocol) cell of the benchmark report."""

    algorithm: str
    protocol: str
    mae: float | None
    mae_extreme: float | None
    n_users: int
    n_predictions: int
    n_extreme: int
    n_skipped_users: int


@dataclass
class EvalReport:
    """Collected rows plus the training statistics they were scored against."""

    train_mean: float
    rows: list[EvalRow] = field(default_factory=list)
    significance: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        lo, hi = extreme_band(self.train_mean)
        out = {
            "train_mean": self.train_mean,
            "extreme_band": [lo, hi],
            "rows": [
                {
                    "algorithm": r.algorithm,
                    "protocol": r.protocol,
                    "mae": r.mae,
                    "mae_extreme": r.mae_extreme,
                    "n_users": r.n_users,
                    "n_predictions": r.n_predictions,
                    "n_extreme": r.n_extreme,
                    "n_skipped_users": r.n_skipped_users,
                }
                for r in self.rows
            ],
        }
        if self.significance:
            out["significance"] = self.significance
        return out


_WORKER: dict | None = None


def _init_worker(train, algorithm, spec, seed):
    global _WORKER
    algorithm.fit(train)
    _WORKER = {"algorithm": algorithm, "spec": spec, "seed": seed}


def _score_user_task(args):
    user, ratings = args
    ctx = _WORKER
    return _score_user(user, ratings, ctx["algorithm"], ctx["spec"], ctx["seed"])


def _score_user(user, ratings, algorithm, spec, seed):
    try:
        observed, hidden = split_user(
            ratings, spec, substream(seed, "split", spec.label, user)
        )
    except InsufficientRatingsError:
        return None
    return [
        PredictionRecord(user, item, actual, algorithm.predict(observed, item))
        for item, actual in hidden.items()
    ]


def run_protocol(
    train: RatingsMatrix,
    test_users: Mapping[int, Mapping[int, int]],
    spec: SplitSpec,
    algorithm: RatingAlgorithm,
    seed: int,
    threads: int = 1,
) -> tuple[list[PredictionRecord], EvalRow]:
    """Score one algorithm under one protocol over all test users.

    Splits are derived only from (seed, protocol, user), so different
    algorithms run on identical observed/hidden partitions and their
    records are pairwise comparable.  Users with too few ratings for the
    protocol are skipped and counted, not scored.
    """
    algorithm.fit(train)
    users = sorted(test_users)
    tasks = [(u, test_users[u]) for u in users]
    if threads > 1:
        with ProcessPoolExecutor(
            max_workers=threads,
            initializer=_init_worker,
            initargs=(train, algorithm, spec, seed),
        ) as pool:
            results = list(pool.map(_score_user_task, tasks, chunksize=16))
    else:
        results = [_score_user(u, r, algorithm, spec, seed) for u, r in tasks]

    records: list[PredictionRecord] = []
    skipped = 0
    for res in results:
        if res is None:
            skipped += 1
        else:
            records.extend(res)

    train_mean = train.mean_rating()
    extreme = extreme_filter(records, train_mean)
    row = EvalRow(
        algorithm=algorithm.name,
        protocol=spec.label,
        mae=mae(records) if records else None,
        mae_extreme=mae(extreme) if extreme else None,
        n_users=len({r.user for r in records}),
        n_predictions=len(records),
        n_extreme=len(extreme),
        n_skipped_users=skipped,
    )
    return records, row


RECORD_FIELDS = ("user", "item", "actual", "predicted", "algorithm", "protocol")


def write_records(
    path: str | Path,
    tagged_records: Iterable[tuple[str, str, PredictionRecord]],
) -> None:
    """Dump (algorithm, protocol, record) rows as CSV with a header."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_FIELDS)
        for algorithm, protocol, rec in tagged_records:
            writer.writerow(
                [rec.user, rec.item, rec.actual, f"{rec.predicted!r}", algorithm, protocol]
            )


def read_records(
    path: str | Path,
) -> dict[tuple[str, str], list[PredictionRecord]]:
    """Read a records dump, grouped by (algorithm, protocol)."""
    groups: dict[tuple[str, str], list[PredictionRecord]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(RECORD_FIELDS):
            raise ValueError(f"{path}: not a prediction records file")
        for row in reader:
            user, item, actual, predicted, algorithm, protocol = row
            groups.setdefault((algorithm, protocol), []).append(
                PredictionRecord(int(user), int(item), int(actual), float(predicted))
            )
    return groups


def format_report(report: EvalReport) -> str:
    """Render the report as aligned text tables (overall, then extreme)."""
    algorithms: list[str] = []
    protocols: list[str] = []
    for row in report.rows:
        if row.algorithm not in algorithms:
            algorithms.append(row.algorithm)
        if row.protocol not in protocols:
            protocols.append(row.protocol)
    cells = {(r.algorithm, r.protocol): r for r in report.rows}

    def table(title: str, value) -> str:
        width = max(12, *(len(p) + 2 for p in protocols)) if protocols else 12
        name_w = max(len("algorithm"), *(len(a) for a in algorithms)) if algorithms else 9
        lines = [title, "algorithm".ljust(name_w) + "".join(p.rjust(width) for p in protocols)]
        for a in algorithms:
            line = a.ljust(name_w)
            for p in protocols:
                row = cells.get((a, p))
                v = value(row) if row else None
                line += (f"{v:.4f}" if v is not None else "-").rjust(width)
            lines.append(line)
        return "\n".join(lines)

    lo, hi = extreme_band(report.train_mean)
    out = io.StringIO()
    out.write(table("Average absolute deviation (all predictions)", lambda r: r.mae))
    out.write("\n\n")
    out.write(
        table(
            f"Average absolute deviation (extreme: actual outside [{lo:.3f}, {hi:.3f}])",
            lambda r: r.mae_extreme,
        )
    )
    out.write("\n")
    skipped = {
        (r.algorithm, r.protocol): r.n_skipped_users
        for r in report.rows
        if r.n_skipped_users
    }
    if skipped:
        out.write("\nSkipped users (too few ratings for the protocol):\n")
        for (a, p), n in sorted(skipped.items()):
            out.write(f"  {a} / {p}: {n}\n")
    return out.getvalue()
