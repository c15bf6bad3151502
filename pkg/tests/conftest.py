"""
Shared fixtures for the simulation test suite
"""
import copy

import numpy as np
import pytest

import src.scheduler as scheduler_module
import src.simulation as simulation_module
from config.presets import CSTR_MODEL, SIGNAL_FAMILIES
from src.lin_model import SensorModel, SystemModel, Topology, cstr_observation

_select_suspicious = scheduler_module.select_suspicious


def _counted_select(summary, expert, q, mode=scheduler_module.SORTED, rng=None):
    result = _select_suspicious(summary, expert, q, mode, rng)
    assert result.evaluations <= q * summary.size, (
        f"{result.evaluations} objective evaluations exceed q|N| = {q * summary.size}"
    )
    return result


@pytest.fixture(autouse=True)
def evaluation_budget(monkeypatch):
    """Every scheduler call made through the simulation stays within q |N| evaluations"""
    monkeypatch.setattr(scheduler_module, "select_suspicious", _counted_select)
    monkeypatch.setattr(simulation_module, "select_suspicious", _counted_select)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def cstr_model():
    return SystemModel(CSTR_MODEL["A"], CSTR_MODEL["Q"], CSTR_MODEL["omega_bound"])


@pytest.fixture
def ring_topology():
    return Topology.from_edges(4, [(1, 2), (2, 3), (3, 4), (4, 1)])


@pytest.fixture
def ring_sensors():
    return [SensorModel(i, cstr_observation(i), [[0.5]], 0.05) for i in range(1, 5)]


def small_spec(horizon=20, runs=2, links=((1, 2),), start=1, end=None, family="unstealthy", **scheduler):
    """Four-sensor ring scenario dict with one attack interval (links may be empty)"""
    signal = copy.deepcopy(SIGNAL_FAMILIES[family])
    intervals = []
    if links:
        intervals.append({"start": start, "end": end or horizon, "links": [list(l) for l in links], "family": family})
    return {
        "name": "ring",
        "model": {
            "A": CSTR_MODEL["A"],
            "Q": CSTR_MODEL["Q"],
            "omega_bound": 0.05,
            "x0": [0.0, 0.0],
            "consensus": 0.1,
            "sensors": {"count": 4, "observation": "cstr", "R": [[0.5]], "nu_bound": 0.05},
        },
        "topology": {"edges": [[1, 2], [2, 3], [3, 4], [4, 1]]},
        "attacks": {"families": {family: signal}, "intervals": intervals},
        "scheduler": {"beta": 0.5, "mode": "sorted", "verification": "detect", **scheduler},
        "detector": {"upsilon_inv": 0.5},
        "run": {"horizon": horizon, "runs": runs, "seed": 7, "gain_iters": 2000},
    }


@pytest.fixture
def ring_spec():
    return small_spec()


@pytest.fixture
def make_spec():
    return small_spec
