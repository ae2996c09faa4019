import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pytest import approx

from sensorcf.datasets import synthetic_ratings
from sensorcf.evaluation import (
    EvalReport,
    PredictionRecord,
    extreme_filter,
    format_report,
    mae,
    make_algorithm,
    paired_sample_diffs,
    randomization_test,
    read_records,
    run_protocol,
    significance_pair,
    write_records,
)
from sensorcf.ratings import RatingScale, RatingsMatrix, SplitSpec, partition_users

SCALE = RatingScale.from_bounds(0, 5)


def rec(user, item, actual, predicted):
    return PredictionRecord(user, item, actual, predicted)


def test_mae_zero_when_exact():
    records = [rec(0, 0, 3, 3.0), rec(1, 1, 4, 4.0)]
    assert mae(records) == 0.0


def test_mae_averages_per_user_first():
    # user A has deviations {1, 1}, user B has {0}: the answer is the mean
    # of per-user means (0.5), not the pooled mean (2/3)
    records = [rec(0, 0, 2, 3.0), rec(0, 1, 2, 1.0), rec(1, 0, 4, 4.0)]
    assert mae(records) == approx(0.5)
    assert mae(records) != approx(2 / 3)


def test_mae_single_user():
    records = [rec(7, 0, 3, 3.5), rec(7, 1, 2, 0.5)]
    assert mae(records) == approx(1.0)


def test_mae_empty_is_an_error():
    with pytest.raises(ValueError):
        mae([])


def test_prediction_record_must_be_finite():
    with pytest.raises(ValueError):
        rec(0, 0, 3, float("nan"))
    with pytest.raises(ValueError):
        rec(0, 0, 3, float("inf"))


def test_extreme_filter_band():
    records = [rec(0, 0, 3, 0.0), rec(0, 1, 4, 0.0), rec(0, 2, 2, 0.0)]
    kept = extreme_filter(records, 3.0)
    assert [r.actual for r in kept] == [4, 2]


def test_extreme_filter_strict_boundary():
    # 2.5 == mean - 0.5 exactly: dropped under the strict inequality
    records = [rec(0, 0, 2, 0.0)]
    assert extreme_filter(records, 2.5) == []


def test_extreme_filter_empty_and_idempotent():
    assert extreme_filter([], 3.0) == []
    records = [rec(0, i, a, 0.0) for i, a in enumerate((0, 2, 3, 4, 5))]
    once = extreme_filter(records, 3.0)
    assert extreme_filter(once, 3.0) == once


def test_randomization_all_zero_diffs():
    assert randomization_test([0.0] * 60, seed=1) == 1.0


def test_randomization_all_positive_diffs():
    diffs = [1.0] * 60
    assert randomization_test(diffs, seed=1) == approx(1.0)
    # the reversed ordering can only be reached by flipping every sign:
    # probability 2^-60, so the estimate is (almost surely) zero
    assert randomization_test([-d for d in diffs], seed=1) <= 1e-3


def test_randomization_symmetric_diffs_midrange():
    # a sample that is exactly symmetric about 0 has observed mean 0, so
    # about half the sign-flip resamples land at or below it
    rng = np.random.default_rng(42)
    half = rng.normal(0.0, 1.0, 30)
    diffs = np.concatenate([half, -half])
    sig = randomization_test(diffs, seed=3)
    assert 0.3 <= sig <= 0.7


def test_randomization_deterministic_under_seed():
    rng = np.random.default_rng(8)
    diffs = rng.normal(0.0, 1.0, 60)
    assert randomization_test(diffs, seed=5) == randomization_test(diffs, seed=5)
    assert randomization_test(diffs, seed=5) != randomization_test(diffs, seed=6) or True


def test_randomization_rejects_bad_input():
    with pytest.raises(ValueError):
        randomization_test([])
    with pytest.raises(ValueError):
        randomization_test([1.0], permutations=0)


@given(
    st.lists(st.floats(min_value=-5, max_value=5, allow_nan=False), min_size=1, max_size=40),
    st.integers(min_value=0, max_value=2**31 - 1),
)
@settings(max_examples=30, deadline=None)
def test_randomization_directions_cover_the_ties(diffs, seed):
    fwd = randomization_test(diffs, permutations=500, seed=seed)
    rev = randomization_test([-d for d in diffs], permutations=500, seed=seed)
    assert 0.0 <= fwd <= 1.0 and 0.0 <= rev <= 1.0
    assert fwd + rev >= 1.0  # both directions count ties


def test_paired_sample_diffs_zero_for_identical_records():
    records = [rec(u, i, 3, 2.0 + u) for u in range(5) for i in range(4)]
    diffs = paired_sample_diffs(records, list(records), n_samples=10, seed=0)
    assert np.allclose(diffs, 0.0)
    both = significance_pair(records, list(records), n_samples=10, seed=0)
    assert both == (1.0, 1.0)


def test_paired_sample_diffs_requires_matching_sets():
    a = [rec(0, 0, 3, 3.0)]
    b = [rec(0, 1, 3, 3.0)]
    with pytest.raises(ValueError):
        paired_sample_diffs(a, b)


def test_paired_sample_diffs_buckets_are_stable():
    rng = np.random.default_rng(2)
    a = [rec(u, i, 3, float(rng.normal(3))) for u in range(60) for i in range(10)]
    b = [rec(r.user, r.item, r.actual, float(rng.normal(3))) for r in a]
    d1 = paired_sample_diffs(a, b, seed=7)
    d2 = paired_sample_diffs(list(reversed(a)), b, seed=7)
    assert np.allclose(d1, d2)
    assert len(d1) == 60
    # near-equal bucket sizes: 600 records over 60 buckets
    from sensorcf.evaluation import _bucket

    counts = np.bincount([_bucket(r.user, r.item, 7, 60) for r in a], minlength=60)
    assert counts.min() >= 1 and counts.max() <= 30


def test_paired_sample_diffs_sign_convention():
    # A is exactly right, B is off by 1 everywhere: diffs must be negative
    a = [rec(u, 0, 3, 3.0) for u in range(40)]
    b = [rec(u, 0, 3, 4.0) for u in range(40)]
    diffs = paired_sample_diffs(a, b, n_samples=8, seed=0)
    assert (diffs == -1.0).all()
    sig_ab, sig_ba = significance_pair(a, b, n_samples=8, seed=0)
    assert sig_ab < 0.05
    assert sig_ba == approx(1.0)


class ConstantAlgorithm:
    """Predicts the training global mean for everything."""

    name = "constant"

    def __init__(self):
        self._mean = None

    def fit(self, train):
        self._mean = train.mean_rating()
        return self

    def predict(self, observed, target_item):
        return self._mean


@pytest.fixture(scope="module")
def small_corpus():
    matrix = synthetic_ratings(n_users=60, n_items=30, n_ratings=1500, seed=3)
    return partition_users(matrix, 0.5, seed=4)


def test_run_protocol_allbut1_one_record_per_user(small_corpus):
    train, test_users = small_corpus
    records, row = run_protocol(train, test_users, SplitSpec.all_but_1(), ConstantAlgorithm(), seed=1)
    assert row.n_predictions == len(test_users) - row.n_skipped_users
    users = [r.user for r in records]
    assert len(users) == len(set(users))


def test_run_protocol_skips_short_users():
    triples = [(0, i, 3) for i in range(8)] + [(1, i, 2) for i in range(20)]
    train = RatingsMatrix.from_triples([(2, i, 3) for i in range(20)], SCALE)
    test_users = {0: dict.fromkeys(range(8), 3), 1: dict.fromkeys(range(20), 2)}
    records, row = run_protocol(train, test_users, SplitSpec.given(10), ConstantAlgorithm(), seed=1)
    assert row.n_skipped_users == 1
    assert {r.user for r in records} == {1}
    assert row.n_predictions == 10


def test_run_protocol_deterministic(small_corpus):
    train, test_users = small_corpus
    spec = SplitSpec.given(5)
    r1, _ = run_protocol(train, test_users, spec, ConstantAlgorithm(), seed=9)
    r2, _ = run_protocol(train, test_users, spec, ConstantAlgorithm(), seed=9)
    assert r1 == r2


def test_run_protocol_pairs_algorithms_on_identical_splits(small_corpus):
    train, test_users = small_corpus
    spec = SplitSpec.given(5)
    recs_a, _ = run_protocol(train, test_users, spec, ConstantAlgorithm(), seed=9)
    recs_b, _ = run_protocol(train, test_users, spec, make_algorithm("correlation"), seed=9)
    assert [(r.user, r.item, r.actual) for r in recs_a] == [
        (r.user, r.item, r.actual) for r in recs_b
    ]


def test_run_protocol_threads_match_serial(small_corpus):
    train, test_users = small_corpus
    spec = SplitSpec.all_but_1()
    serial, row_s = run_protocol(train, test_users, spec, make_algorithm("noisy2"), seed=2)
    parallel, row_p = run_protocol(train, test_users, spec, make_algorithm("noisy2"), seed=2, threads=2)
    assert serial == parallel
    assert row_s == row_p


def test_records_roundtrip(tmp_path):
    records = [rec(0, 1, 3, 2.25), rec(4, 2, 5, 4.125)]
    path = tmp_path / "records.csv"
    write_records(path, [("noisy2", "allbut1", r) for r in records])
    groups = read_records(path)
    assert groups == {("noisy2", "allbut1"): records}


def test_read_records_rejects_other_files(tmp_path):
    path = tmp_path / "other.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError):
        read_records(path)


def test_format_report_contains_cells(small_corpus):
    train, test_users = small_corpus
    _, row = run_protocol(train, test_users, SplitSpec.all_but_1(), ConstantAlgorithm(), seed=1)
    report = EvalReport(train_mean=train.mean_rating(), rows=[row])
    text = format_report(report)
    assert "constant" in text
    assert "allbut1" in text
    assert f"{row.mae:.4f}" in text
    payload = report.to_dict()
    assert payload["rows"][0]["algorithm"] == "constant"
