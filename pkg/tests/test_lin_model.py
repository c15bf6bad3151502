"""
Tests for plant, sensor and topology primitives
"""
import numpy as np
import pytest

from config.presets import CSTR_MODEL
from src.errors import ConfigurationError, SamplingError
from src.lin_model import (
    SensorModel, SystemModel, Topology, build_geometric_topology, cstr_observation, measure,
    sample_bounded_gaussian, step_state,
)


def test_step_state_first_column(cstr_model):
    assert step_state(cstr_model, [1.0, 0.0]) == pytest.approx([0.9719, -0.0340])


def test_step_state_second_column(cstr_model):
    assert step_state(cstr_model, [0.0, 1.0]) == pytest.approx([-0.0013, 0.8628])


def test_step_state_identity_keeps_state():
    model = SystemModel(np.eye(3), np.eye(3))
    x = np.array([1.5, -2.0, 0.25])
    assert np.array_equal(step_state(model, x), x)


def test_step_state_rejects_wrong_dimension(cstr_model):
    with pytest.raises(ConfigurationError):
        step_state(cstr_model, [1.0, 2.0, 3.0])


def test_step_state_noise_respects_bound(cstr_model, rng):
    x = np.array([0.3, -0.2])
    for _ in range(200):
        w = step_state(cstr_model, x, rng) - cstr_model.A @ x
        assert np.linalg.norm(w) <= cstr_model.omega_bound + 1e-15


def test_measure_cstr_sensor_five():
    sensor = SensorModel(5, cstr_observation(5), [[0.5]])
    assert measure(sensor, [0.0, 2.0]) == pytest.approx([0.6])


def test_measure_zero_observation():
    sensor = SensorModel(1, np.zeros((1, 2)), [[0.5]])
    assert measure(sensor, [4.0, -3.0]) == pytest.approx([0.0])


def test_measure_cstr_sensor_one():
    sensor = SensorModel(1, cstr_observation(1), [[0.5]])
    assert measure(sensor, [3.0, 1.0]) == pytest.approx([1.1])


def test_measure_rejects_wrong_dimension():
    sensor = SensorModel(1, cstr_observation(1), [[0.5]])
    with pytest.raises(ConfigurationError):
        measure(sensor, [1.0])


def test_models_validate_covariances():
    with pytest.raises(ConfigurationError):
        SystemModel([[1.0, 0.0], [0.0, 1.0]], [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(ConfigurationError):
        SystemModel([[1.0, 0.0], [0.0, 1.0]], [[1.0]])
    with pytest.raises(ConfigurationError):
        SensorModel(1, [[0.0, 1.0]], [[0.5, 0.0], [0.0, 0.5]])
    with pytest.raises(ConfigurationError):
        SensorModel(0, [[0.0, 1.0]], [[0.5]])


def test_bounded_samples_stay_within_cap(rng):
    cov = 0.5 * np.eye(2)
    samples = np.array([sample_bounded_gaussian(cov, 0.05, rng) for _ in range(10_000)])
    assert np.all(np.linalg.norm(samples, axis=1) <= 0.05)


def test_unbounded_sample_mean_is_near_zero(rng):
    cov = 0.5 * np.eye(2)
    count = 100_000
    samples = np.array([sample_bounded_gaussian(cov, np.inf, rng) for _ in range(count)])
    sigma = np.sqrt(0.5)
    assert np.all(np.abs(samples.mean(axis=0)) <= 4 * sigma / np.sqrt(count))


def test_unbounded_sample_covariance_converges(rng):
    cov = np.array([[0.5, 0.1], [0.1, 0.3]])
    samples = np.array([sample_bounded_gaussian(cov, np.inf, rng) for _ in range(50_000)])
    empirical = np.cov(samples.T)
    assert np.linalg.norm(empirical - cov) / np.linalg.norm(cov) < 0.05


def test_sampler_gives_up_on_impossible_bound(rng):
    with pytest.raises(SamplingError):
        sample_bounded_gaussian(np.eye(2), 1e-9, rng, max_rejections=1000)
    with pytest.raises(SamplingError):
        sample_bounded_gaussian(np.eye(2), 0.0, rng)


def test_sampler_is_deterministic_given_seed():
    a = [sample_bounded_gaussian(0.5 * np.eye(2), 0.05, np.random.default_rng(3)) for _ in range(3)]
    b = [sample_bounded_gaussian(0.5 * np.eye(2), 0.05, np.random.default_rng(3)) for _ in range(3)]
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_same_seed_gives_identical_trajectory(cstr_model):
    def trajectory(seed):
        rng = np.random.default_rng(seed)
        x = np.zeros(2)
        out = []
        for _ in range(50):
            x = step_state(cstr_model, x, rng)
            out.append(x)
        return np.array(out)

    assert np.array_equal(trajectory(11), trajectory(11))
    assert not np.array_equal(trajectory(11), trajectory(12))


def test_topology_from_edges_is_symmetric():
    topology = Topology.from_edges(4, [(1, 2), (3, 1)])
    assert topology.neighbors(1) == (2, 3)
    assert topology.neighbors(2) == (1,)
    assert topology.neighbors(4) == ()
    assert topology.has_edge(3, 1) and topology.has_edge(1, 3)
    assert topology.edges() == [(1, 2), (1, 3)]
    assert set(topology.links()) == {(1, 2), (1, 3), (2, 1), (3, 1)}


@pytest.mark.parametrize("adjacency", [
    ((2,), ()),          # asymmetric
    ((1,),),             # self loop
    ((3,), (1,)),        # out of range
])
def test_topology_rejects_bad_adjacency(adjacency):
    with pytest.raises(ConfigurationError):
        Topology(len(adjacency), adjacency)


def test_geometric_topology_radius_zero_has_no_edges():
    topology = build_geometric_topology([(0, 0), (1, 0), (0, 1)], 0.0)
    assert topology.edges() == []


def test_geometric_topology_large_radius_is_complete():
    points = [(0, 0), (3, 1), (-2, 4), (5, 5)]
    topology = build_geometric_topology(points, 100.0)
    assert len(topology.edges()) == 6


def test_geometric_topology_collinear_path():
    topology = build_geometric_topology([(0, 0), (1, 0), (2, 0)], 1.0)
    assert topology.edges() == [(1, 2), (2, 3)]


def test_cstr_observation_family():
    assert cstr_observation(5) == pytest.approx(np.array([[0.0, 0.3]]))
    assert np.array(CSTR_MODEL["A"]).shape == (2, 2)
