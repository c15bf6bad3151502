"""
Tests for the exponential-threshold detector and neighbour screening
"""
import numpy as np
import pytest
from hypothesis import given, strategies as st

from src.detector import (
    DETECT, EXCLUDE, DetectorConfig, detect, draw_threshold, flag_probability, residual_norm, screen_neighbors,
)
from src.errors import ConfigurationError


def test_zero_residual_is_always_accepted(rng):
    cfg = DetectorConfig(0.5)
    x = np.array([1.0, -2.0])
    assert all(detect(cfg, x, x, rng) == 1 for _ in range(1000))


def test_flag_probability_closed_form():
    assert flag_probability(DetectorConfig(0.5), 2.0) == pytest.approx(1 - np.exp(-1), abs=1e-12)
    assert flag_probability(DetectorConfig(1.0), np.log(2)) == pytest.approx(0.5)
    assert flag_probability(DetectorConfig(0.5), 0.0) == 0.0
    assert flag_probability(DetectorConfig(0.5), 1e6) == pytest.approx(1.0)


sharpness = st.floats(1e-3, 50.0, allow_nan=False, allow_infinity=False)
residuals = st.floats(0.0, 1e3, allow_nan=False, allow_infinity=False)


@given(sharpness, residuals, residuals)
def test_flag_probability_grows_with_residual(upsilon_inv, r1, r2):
    lo, hi = sorted((r1, r2))
    cfg = DetectorConfig(upsilon_inv)
    assert flag_probability(cfg, lo) <= flag_probability(cfg, hi) + 1e-15


@given(sharpness, sharpness, residuals)
def test_flag_probability_grows_with_sharpness(u1, u2, residual):
    lo, hi = sorted((u1, u2))
    assert flag_probability(DetectorConfig(lo), residual) <= flag_probability(DetectorConfig(hi), residual) + 1e-15


def test_flag_probability_rejects_negative_residual():
    with pytest.raises(ConfigurationError):
        flag_probability(DetectorConfig(0.5), -1.0)


@pytest.mark.parametrize("upsilon_inv, residual", [
    (0.1, 0.5), (0.1, 3.0), (0.1, 10.0),
    (0.5, 0.5), (0.5, 2.0), (0.5, 6.0),
    (1.0, 0.2), (1.0, 1.0), (1.0, 3.0),
])
def test_empirical_flag_rate_matches_closed_form(upsilon_inv, residual):
    rng = np.random.default_rng(int(upsilon_inv * 100 + residual * 10))
    cfg = DetectorConfig(upsilon_inv)
    x = np.zeros(2)
    payload = np.array([residual, 0.0])
    trials = 100_000
    flagged = sum(1 - detect(cfg, x, payload, rng) for _ in range(trials))
    assert flagged / trials == pytest.approx(flag_probability(cfg, residual), abs=0.005)


def test_shared_threshold_gives_consistent_verdicts():
    cfg = DetectorConfig(1.0)
    x = np.zeros(1)
    assert detect(cfg, x, [0.9], xi=1.0) == 1
    assert detect(cfg, x, [1.0], xi=1.0) == 1
    assert detect(cfg, x, [1.1], xi=1.0) == 0


def test_detect_needs_a_threshold_source():
    with pytest.raises(ConfigurationError):
        detect(DetectorConfig(0.5), [0.0], [1.0])


def test_per_sensor_override():
    cfg = DetectorConfig(0.5, {3: 2.0})
    assert cfg.for_sensor(3) == 2.0
    assert cfg.for_sensor(1) == 0.5
    # residual 1 passes xi = 0.6 at 0.5 but not at 2.0
    assert detect(cfg, [0.0], [1.0], xi=0.6, sensor=1) == 1
    assert detect(cfg, [0.0], [1.0], xi=0.6, sensor=3) == 0


@pytest.mark.parametrize("upsilon_inv, overrides", [(0.0, {}), (-1.0, {}), (0.5, {2: 0.0})])
def test_detector_config_validation(upsilon_inv, overrides):
    with pytest.raises(ConfigurationError):
        DetectorConfig(upsilon_inv, overrides)


def test_threshold_mean_is_one(rng):
    draws = np.array([draw_threshold(rng) for _ in range(50_000)])
    assert np.all(draws >= 0)
    assert draws.mean() == pytest.approx(1.0, abs=4 / np.sqrt(50_000))


def test_residual_norm_shapes():
    assert residual_norm([0.0, 0.0], [3.0, 4.0]) == pytest.approx(5.0)
    with pytest.raises(ConfigurationError):
        residual_norm([0.0, 0.0], [1.0])


RECEIVED = {2: np.array([0.1, 0.0]), 4: np.array([10.0, 0.0]), 6: np.array([0.0, 0.0])}


def test_screen_trusts_unselected_neighbours():
    mask, flagged = screen_neighbors(DetectorConfig(0.5), 1, np.zeros(2), RECEIVED, frozenset(), xi=0.01)
    assert mask == {2: 1, 4: 1, 6: 1}
    assert flagged == frozenset()


def test_screen_detect_keeps_verdicts_for_selected():
    mask, flagged = screen_neighbors(DetectorConfig(0.5), 1, np.zeros(2), RECEIVED, {2, 4}, xi=1.0, verification=DETECT)
    assert mask == {2: 1, 4: 0, 6: 1}
    assert flagged == {4}


def test_screen_exclude_drops_every_selected():
    mask, flagged = screen_neighbors(DetectorConfig(0.5), 1, np.zeros(2), RECEIVED, {2, 6}, xi=1.0,
                                     verification=EXCLUDE)
    assert mask == {2: 0, 4: 1, 6: 0}
    assert flagged == {2, 6}


def test_screen_rejects_unknown_neighbours_and_policies():
    with pytest.raises(ConfigurationError):
        screen_neighbors(DetectorConfig(0.5), 1, np.zeros(2), RECEIVED, {3}, xi=1.0)
    with pytest.raises(ConfigurationError):
        screen_neighbors(DetectorConfig(0.5), 1, np.zeros(2), RECEIVED, {2}, xi=1.0, verification="ignore")
