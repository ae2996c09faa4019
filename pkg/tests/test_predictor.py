import math

import numpy as np
import pytest
from pytest import approx

from sensorcf.predictor import (
    FittedModel,
    NoisySensorPredictor,
    SensorRef,
    build_model,
    load_model,
    posterior,
    predict,
    save_model,
)
from sensorcf.ratings import (
    PairPrior,
    RatingPrior,
    RatingScale,
    RatingsMatrix,
    rating_prior,
)
from sensorcf.sensors import SensorFit

SCALE = RatingScale.from_bounds(0, 5)


def empty_model(prior, variant="noisy2"):
    return FittedModel(variant, 1.0, 50, 20, 0, prior, (), ())


def test_zero_sensors_posterior_equals_prior():
    prior = RatingPrior({2: 0.3, 4: 0.7})
    dist = posterior(empty_model(prior), RatingScale((2, 4)))
    assert dist.probs[2] == approx(0.3)
    assert dist.probs[4] == approx(0.7)
    assert dist.expected == approx(3.4)


def test_single_identity_sensor_two_value_scale():
    scale = RatingScale((0, 1))
    prior = RatingPrior({0: 0.5, 1: 0.5})
    fit = SensorFit(0.0, 1.0, 1.0, None, 3, 0.0)
    model = FittedModel(
        "noisy2", 0.0, 50, 20, 0, prior, (SensorRef("user", 1, fit, 1),), ()
    )
    dist = posterior(model, scale)
    assert dist.probs[1] == approx(1 / (1 + math.exp(-0.5)))
    assert dist.probs[0] == approx(1 - 1 / (1 + math.exp(-0.5)))


def test_predict_expected_values():
    assert predict(empty_model(RatingPrior({3: 1.0})), RatingScale((2, 3, 4))) == approx(3.0)
    uniform = RatingPrior({v: 1 / 6 for v in SCALE.values})
    assert predict(empty_model(uniform), SCALE) == approx(2.5)
    skewed = RatingPrior({0: 0.25, 5: 0.75})
    assert predict(empty_model(skewed), RatingScale((0, 5))) == approx(3.75)


def test_point_mass_prior_survives_log_space():
    # zero prior cells must stay exactly zero in the posterior
    prior = RatingPrior({v: (1.0 if v == 3 else 0.0) for v in SCALE.values})
    dist = posterior(empty_model(prior), SCALE)
    assert dist.probs[3] == approx(1.0)
    assert dist.expected == approx(3.0)


def micro_instance(rng):
    n_users = int(rng.integers(2, 5))
    n_items = int(rng.integers(2, 5))
    m_values = int(rng.integers(2, 7))
    scale = RatingScale(tuple(range(m_values)))
    triples = []
    for u in range(n_users):
        for i in range(n_items):
            if rng.random() < 0.75:
                triples.append((u, i, int(rng.integers(0, m_values))))
    train = RatingsMatrix.from_triples(triples, scale, n_users=n_users, n_items=n_items)
    target = int(rng.integers(0, n_items))
    observed = {
        i: int(rng.integers(0, m_values))
        for i in range(n_items)
        if i != target and rng.random() < 0.8
    }
    return train, observed, target, scale


def brute_force_posterior(model, scale):
    """Direct product-form evaluation of the fused posterior (no logs)."""
    weights = []
    for v in scale.values:
        w = model.prior[v]
        for ref in model.user_sensors + model.item_sensors:
            f = ref.fit
            mu = min(max(f.alpha + f.beta * v, scale.min), scale.max)
            w *= math.exp(-((ref.evidence - mu) ** 2) / (2 * f.sigma2)) / math.sqrt(
                2 * math.pi * f.sigma2
            )
        weights.append(w)
    total = sum(weights)
    return {v: w / total for v, w in zip(scale.values, weights)}


@pytest.mark.parametrize("variant", ["noisy1", "noisy2"])
def test_posterior_matches_brute_force_on_micro_instances(variant):
    rng = np.random.default_rng(7)
    done = 0
    while done < 120:
        train, observed, target, scale = micro_instance(rng)
        if train.n_ratings == 0:
            continue
        model = build_model(train, observed, target, variant=variant, u_max=10, i_max=10)
        dist = posterior(model, scale)
        direct = brute_force_posterior(model, scale)
        tv = 0.5 * sum(abs(dist.probs[v] - direct[v]) for v in scale.values)
        assert tv <= 1e-9
        done += 1


def test_sensor_order_independence():
    rng = np.random.default_rng(21)
    while True:
        train, observed, target, scale = micro_instance(rng)
        if train.n_ratings == 0:
            continue
        model = build_model(train, observed, target, variant="noisy1", u_max=10, i_max=10)
        if len(model.user_sensors) + len(model.item_sensors) >= 3:
            break
    shuffled = FittedModel(
        model.variant, model.k, model.u_max, model.i_max, model.target_item,
        model.prior, tuple(reversed(model.item_sensors)),
        tuple(reversed(model.user_sensors)),
    )
    a = posterior(model, scale)
    b = posterior(shuffled, scale)
    for v in scale.values:
        assert a.probs[v] == approx(b.probs[v], abs=1e-12)


def test_monotone_evidence_mode_at_sensor_reading():
    prior = RatingPrior({v: 1 / 6 for v in SCALE.values})
    for evidence in SCALE.values:
        fit = SensorFit(0.0, 1.0, 0.7, None, 4, 1.0)
        model = FittedModel(
            "noisy2", 1.0, 50, 20, 0, prior,
            (SensorRef("user", 0, fit, evidence),), (),
        )
        assert posterior(model, SCALE).mode() == evidence


def fan_matrix(n_candidates, rng, scale=SCALE):
    """Target item 0 rated by everyone; co-ratings with noise on items 1..3."""
    triples = []
    for u in range(n_candidates):
        triples.append((u, 0, int(rng.integers(0, 6))))
        for i in (1, 2, 3):
            triples.append((u, i, int(rng.integers(0, 6))))
    return RatingsMatrix.from_triples(triples, scale)


def test_truncation_keeps_best_ranked():
    rng = np.random.default_rng(3)
    train = fan_matrix(100, rng)
    observed = {1: 3, 2: 1, 3: 4}
    model = build_model(train, observed, 0, variant="noisy1", u_max=50, i_max=20)
    assert len(model.user_sensors) == 50
    kept = min(ref.fit.r2 for ref in model.user_sensors)
    all_model = build_model(train, observed, 0, variant="noisy1", u_max=10_000, i_max=20)
    dropped = [ref for ref in all_model.user_sensors if ref.id not in {s.id for s in model.user_sensors}]
    assert all(ref.fit.r2 <= kept + 1e-12 for ref in dropped)


def test_truncation_noop_when_few_candidates():
    rng = np.random.default_rng(4)
    train = fan_matrix(7, rng)
    model = build_model(train, {1: 3, 2: 1, 3: 4}, 0, variant="noisy1", u_max=50)
    assert len(model.user_sensors) == 7


def test_zero_candidates_gives_prior_model():
    train = RatingsMatrix.from_triples([(0, 0, 3), (1, 0, 4), (0, 1, 2), (1, 1, 5)], SCALE)
    # target item 5 does not exist in the index; nothing observed
    model = build_model(train, {}, 5, variant="noisy2")
    assert model.user_sensors == () and model.item_sensors == ()
    dist = posterior(model, SCALE)
    prior = rating_prior(train)
    for v in SCALE.values:
        assert dist.probs[v] == approx(prior[v])


def test_noisy2_ranking_by_variance_ascending():
    rng = np.random.default_rng(11)
    train = fan_matrix(30, rng)
    model = build_model(train, {1: 3, 2: 1, 3: 4}, 0, variant="noisy2", u_max=10)
    variances = [ref.fit.sigma2 for ref in model.user_sensors]
    assert variances == sorted(variances)


def test_noisy1_ranking_by_r2_descending():
    rng = np.random.default_rng(12)
    train = fan_matrix(30, rng)
    model = build_model(train, {1: 3, 2: 1, 3: 4}, 0, variant="noisy1", u_max=10)
    r2s = [ref.fit.r2 for ref in model.user_sensors]
    assert r2s == sorted(r2s, reverse=True)


def test_active_user_excluded_from_candidates():
    rng = np.random.default_rng(13)
    train = fan_matrix(5, rng)
    observed = dict(train.by_user[2])
    del observed[0]
    with_self = build_model(train, observed, 0, variant="noisy2", active_user=None)
    without_self = build_model(train, observed, 0, variant="noisy2", active_user=2)
    assert 2 in {ref.id for ref in with_self.user_sensors}
    assert 2 not in {ref.id for ref in without_self.user_sensors}


def test_min_corated_threshold():
    # candidate 1 co-rates two items, candidate 2 only one
    triples = [
        (0, 0, 5), (1, 0, 4), (2, 0, 3),
        (1, 1, 2), (1, 2, 3),
        (2, 1, 4),
    ]
    train = RatingsMatrix.from_triples(triples, SCALE)
    observed = {1: 2, 2: 3}
    strict = build_model(train, observed, 0, variant="noisy2", min_corated=2)
    assert {ref.id for ref in strict.user_sensors} == {1}
    loose = build_model(train, observed, 0, variant="noisy2", min_corated=1)
    assert {ref.id for ref in loose.user_sensors} == {1, 2}


def test_item_sensor_evidence_is_active_rating():
    rng = np.random.default_rng(14)
    train = fan_matrix(10, rng)
    observed = {1: 3, 2: 1}
    model = build_model(train, observed, 0, variant="noisy2", min_corated=1)
    by_id = {ref.id: ref for ref in model.item_sensors}
    assert by_id[1].evidence == 3
    assert by_id[2].evidence == 1


def test_posterior_normalizes(tmp_path):
    rng = np.random.default_rng(15)
    train = fan_matrix(40, rng)
    model = build_model(train, {1: 3, 2: 1, 3: 4}, 0, variant="noisy1")
    dist = posterior(model, SCALE)
    assert sum(dist.probs.values()) == approx(1.0, abs=1e-10)
    assert SCALE.min <= dist.expected <= SCALE.max


def test_model_roundtrip(tmp_path):
    rng = np.random.default_rng(16)
    train = fan_matrix(12, rng)
    model = build_model(train, {1: 3, 2: 1, 3: 4}, 0, variant="noisy1", u_max=5, i_max=3)
    path = tmp_path / "model.tsv"
    save_model(model, SCALE, path)
    loaded, scale = load_model(path)
    assert scale == SCALE
    assert loaded == model
    a = posterior(model, SCALE)
    b = posterior(loaded, scale)
    assert a.probs == b.probs


def test_model_file_rejects_other_files(tmp_path):
    path = tmp_path / "junk.tsv"
    path.write_text("something else\n")
    with pytest.raises(ValueError):
        load_model(path)


def test_predictor_wrapper_matches_functional_path():
    rng = np.random.default_rng(17)
    train = fan_matrix(25, rng)
    observed = {1: 3, 2: 1, 3: 4}
    wrapper = NoisySensorPredictor(variant="noisy2").fit(train)
    direct = predict(
        build_model(train, observed, 0, variant="noisy2",
                    prior=wrapper._prior, pair_prior=wrapper._pair_prior),
        SCALE,
    )
    assert wrapper.predict(observed, 0) == approx(direct)
