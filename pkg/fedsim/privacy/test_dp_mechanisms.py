import math

import numpy as np
import pytest
from scipy import stats

from fedsim.aggregation.param_store import CollaboratorUpdate
from fedsim.aggregation.simagg import AggregationConfig, simagg_round
from fedsim.conftest import make_update, random_params
from fedsim.errors import InvalidBudget, InvalidCalibration
from fedsim.privacy.dp_mechanisms import (
    Mechanism,
    NoiseCalibration,
    PrivacyConfig,
    PrivacyLedger,
    calibrate,
    dp_simagg_round,
    perturb,
    sample_noise,
)
from fedsim.privacy.gamma_sampler import sample_gamma
from fedsim.privacy.rng_streams import rng_stream_for


def cohort_of(rng, n=5, counts=(10, 20, 30, 15, 25)):
    return [CollaboratorUpdate(f"col-{i:03d}", random_params(rng), counts[i % len(counts)]) for i in range(n)]


def test_calibration_matches_hand_values():
    cal = calibrate(100, 5, PrivacyConfig(epsilon=10.0, delta=1e-5))
    assert cal.sensitivity == 2000.0
    assert cal.scale == 200.0
    assert cal.shape == 0.2
    assert calibrate(100, 5, PrivacyConfig(epsilon=0.1)).scale == pytest.approx(20000.0, rel=1e-15)


def test_smaller_epsilon_means_larger_scale():
    scales = [calibrate(500, 7, PrivacyConfig(eps)).scale for eps in (10.0, 1.0, 0.1)]
    assert scales == sorted(scales)


@pytest.mark.parametrize("kwargs", [{"epsilon": 0.0}, {"epsilon": -1.0}, {"epsilon": float("inf")},
                                    {"epsilon": 1.0, "delta": 0.0}, {"epsilon": 1.0, "delta": 1.0},
                                    {"epsilon": 1.0, "seed": -1}])
def test_invalid_budgets(kwargs):
    with pytest.raises(InvalidBudget):
        PrivacyConfig(**kwargs)


def test_mechanism_names_parse():
    assert PrivacyConfig(1.0, mechanism="distributed_laplace").mechanism is Mechanism.DISTRIBUTED_LAPLACE
    with pytest.raises(ValueError):
        PrivacyConfig(1.0, mechanism="laplace-ish")


def test_non_positive_calibration_rejected():
    rng = np.random.default_rng(0)
    with pytest.raises(InvalidCalibration):
        sample_noise(rng, NoiseCalibration(1.0, 0.0, 0.2), Mechanism.GAUSSIAN, 3)
    with pytest.raises(InvalidCalibration):
        sample_gamma(rng, 0.0, 1.0, 3)


@pytest.mark.slow
def test_gamma_moments():
    draws = sample_gamma(np.random.default_rng(7), shape=0.2, scale=2.0, size=1_000_000)
    assert np.all(draws >= 0)
    k, theta, n = 0.2, 2.0, draws.size
    mean_se = math.sqrt(k * theta**2 / n)
    # fourth central moment of Gamma(k, theta) is 3k(k + 2)theta^4
    var_se = math.sqrt((3 * k * (k + 2) * theta**4 - (k * theta**2) ** 2) / n)
    assert abs(draws.mean() - 0.4) < 3 * mean_se
    assert abs(draws.var() - 0.8) < 3 * var_se


@pytest.mark.parametrize("shape", [0.05, 0.5, 1.0, 3.0])
def test_gamma_distribution_fits(shape):
    draws = sample_gamma(np.random.default_rng(11), shape=shape, scale=1.5, size=20_000)
    assert stats.kstest(draws, stats.gamma(shape, scale=1.5).cdf).pvalue > 1e-3


@pytest.mark.slow
def test_distributed_laplace_sums_to_laplace_variance():
    n, size, scale = 5, 1_000_000, 1.0
    cal = NoiseCalibration(sensitivity=scale, scale=scale, shape=1.0 / n)
    total = np.zeros(size)
    for i in range(n):
        total += sample_noise(rng_stream_for(1, f"col-{i:03d}", 3), cal, Mechanism.DISTRIBUTED_LAPLACE, size)
    assert abs(total.mean()) < 3 * math.sqrt(2 * scale**2 / size)
    assert total.var() == pytest.approx(2 * scale**2, rel=0.03)


def test_gaussian_noise_scale():
    noise = sample_noise(np.random.default_rng(5), NoiseCalibration(1.0, 3.0, 0.5), Mechanism.GAUSSIAN, 200_000)
    assert noise.std() == pytest.approx(3.0, rel=0.02)


def test_none_mechanism_returns_the_update_untouched(rng):
    up = cohort_of(rng, n=1)[0]
    cal = calibrate(10, 1, PrivacyConfig(1.0))
    assert perturb(up, cal, PrivacyConfig(1.0, mechanism=Mechanism.NONE), rng_stream_for(1, up.collaborator_id, 0)) is up


def test_gamma_additive_noise_only_increases_params(rng):
    up = cohort_of(rng, n=1)[0]
    cfg = PrivacyConfig(1.0)
    noised = perturb(up, calibrate(10, 1, cfg), cfg, rng_stream_for(1, up.collaborator_id, 0))
    assert noised.params.is_congruent(up.params)
    assert np.all(noised.params.flat() >= up.params.flat())
    assert noised.sample_count == up.sample_count


def test_dp_round_without_noise_equals_simagg(rng):
    cohort = cohort_of(rng)
    agg = AggregationConfig()
    master, w, record = dp_simagg_round(cohort, agg, PrivacyConfig(1.0, mechanism="none"), round_num=2)
    clean_master, clean_w = simagg_round(cohort, agg)
    assert master.bitwise_equal(clean_master)
    assert w == clean_w
    assert record.mechanism is Mechanism.NONE


def test_dp_weights_come_from_clean_params(rng):
    cohort = cohort_of(rng)
    _, w, _ = dp_simagg_round(cohort, AggregationConfig(), PrivacyConfig(0.1, seed=9), round_num=1)
    _, clean_w = simagg_round(cohort)
    assert w == clean_w


def test_dp_round_is_reproducible_and_seed_dependent(rng):
    cohort = cohort_of(rng)
    privacy = PrivacyConfig(1.0, seed=123)
    first, _, rec1 = dp_simagg_round(cohort, AggregationConfig(), privacy, round_num=3)
    again, _, rec2 = dp_simagg_round(cohort[::-1], AggregationConfig(), privacy, round_num=3)
    assert first.bitwise_equal(again)
    assert rec1.to_dict() == rec2.to_dict()
    other_round, _, _ = dp_simagg_round(cohort, AggregationConfig(), privacy, round_num=4)
    other_seed, _, _ = dp_simagg_round(cohort, AggregationConfig(), PrivacyConfig(1.0, seed=124), round_num=3)
    assert not other_round.bitwise_equal(first)
    assert not other_seed.bitwise_equal(first)


def test_noise_record_contents(rng):
    cohort = cohort_of(rng, n=2, counts=(40, 60))
    _, _, record = dp_simagg_round(cohort, AggregationConfig(), PrivacyConfig(10.0), round_num=1)
    doc = record.to_dict()
    assert doc["mechanism"] == "gamma_additive"
    assert doc["sensitivity"] == 2000.0
    assert doc["scale"] == 200.0
    assert doc["shape"] == 0.5
    assert list(doc["streams"]) == ["col-000", "col-001"]


def test_gamma_additive_bias_grows_as_epsilon_shrinks():
    cohort = [make_update(f"c{i}", np.zeros(50), 200) for i in range(4)]
    shifts = []
    for eps in (10.0, 1.0, 0.1):
        master, _, _ = dp_simagg_round(cohort, AggregationConfig(), PrivacyConfig(eps, seed=1), round_num=1)
        shifts.append(master.flat().mean())
    assert 0 < shifts[0] < shifts[1] < shifts[2]


def test_ledger_composes_additively():
    ledger = PrivacyLedger()
    for _ in range(3):
        ledger.record_round(PrivacyConfig(0.5, delta=1e-5))
    spent = ledger.spent()
    assert spent["rounds"] == 3
    assert spent["epsilon"] == pytest.approx(1.5)
    assert spent["delta"] == pytest.approx(3e-5)
