"""
Scenario Loading Module

Scenario files are JSON with sections model, topology, attacks, scheduler,
detector and run. Presets go through the same validation as files.
"""
import copy
import json
import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from config import settings
from config.presets import CSTR_MODEL, CSTR_SENSORS, PRESETS, SCHEDULER_DEFAULTS, DETECTOR_DEFAULTS, SIGNAL_FAMILIES
from src.attack_engine import UNSTEALTHY, AttackInterval, AttackSchedule, SignalFamily
from src.detector import VERIFICATION_POLICIES, DetectorConfig
from src.errors import ConfigurationError, ScenarioError
from src.estimator import validate_consensus
from src.lin_model import SensorModel, SensorNetwork, SystemModel, Topology, build_geometric_topology, cstr_observation
from src.scheduler import MODES

logger = logging.getLogger(__name__)


class SensorsSpec(BaseModel):
    count: int
    C: Optional[List[List[float]]] = None
    observation: Optional[Literal["cstr"]] = None
    R: List[List[float]]
    nu_bound: Optional[float] = None
    positions: Optional[List[Tuple[float, float]]] = None


class ModelSpec(BaseModel):
    A: List[List[float]]
    Q: List[List[float]]
    omega_bound: Optional[float] = None
    x0: Optional[List[float]] = None
    consensus: float
    sensors: SensorsSpec


class TopologySpec(BaseModel):
    edges: Optional[List[Tuple[int, int]]] = None
    radius: Optional[float] = None


class FamilySpec(BaseModel):
    kind: Literal["unstealthy", "stealthy"]
    amplitude_low: float
    amplitude_high: float
    z_tilde: Optional[float] = None
    active_fraction: float = 1.0
    quiet_high: float = 0.05
    scale: float = 1.0


class IntervalSpec(BaseModel):
    start: int
    end: int
    links: List[Tuple[int, int]]
    family: str


class AttacksSpec(BaseModel):
    families: Dict[str, FamilySpec] = {}
    intervals: List[IntervalSpec] = []


class SchedulerSpec(BaseModel):
    beta: float = SCHEDULER_DEFAULTS["beta"]
    mode: str = SCHEDULER_DEFAULTS["mode"]
    q: Optional[int] = None
    verification: str = SCHEDULER_DEFAULTS["verification"]


class DetectorSpec(BaseModel):
    upsilon_inv: float = DETECTOR_DEFAULTS["upsilon_inv"]
    overrides: Dict[int, float] = {}


class RunSpec(BaseModel):
    horizon: int
    runs: int = settings.RUNS
    seed: int = settings.SEED
    focus_sensors: Optional[List[int]] = None
    gain_iters: int = settings.GAIN_ITERS
    track_augmented_error: bool = True


class ScenarioSpec(BaseModel):
    name: str = "custom"
    model: ModelSpec
    topology: TopologySpec
    attacks: AttacksSpec = Field(default_factory=AttacksSpec)
    scheduler: SchedulerSpec = Field(default_factory=SchedulerSpec)
    detector: DetectorSpec = Field(default_factory=DetectorSpec)
    run: RunSpec


@dataclass(frozen=True)
class SchedulerConfig:
    beta: float
    mode: str
    q: int = None
    verification: str = "detect"


@dataclass(frozen=True)
class Scenario:
    name: str
    model: SystemModel
    network: SensorNetwork
    x0: np.ndarray
    lam: float
    schedule: AttackSchedule
    scheduler: SchedulerConfig
    detector: DetectorConfig
    horizon: int
    runs: int
    seed: int
    focus_sensors: tuple
    gain_iters: int
    track_augmented_error: bool
    spec: ScenarioSpec

    @property
    def topology(self):
        return self.network.topology

    @property
    def sensors(self):
        return self.network.sensors

    def q_for(self, i):
        """Cardinality budget of sensor i, capped by the scheduler's q when set"""
        q = self.topology.degree(i) // 2
        return q if self.scheduler.q is None else min(q, self.scheduler.q)

    def manifest(self):
        return self.spec.model_dump(mode="json")


def _inf(value):
    return np.inf if value is None else value


def _collect(violations, label, build):
    """Run build(); on a configuration error record it and return None"""
    try:
        return build()
    except ConfigurationError as e:
        violations.append(f"{label}: {e}")
        return None


def _build_sensors(spec, violations):
    s = spec.model.sensors
    if s.C is None and s.observation is None:
        violations.append("model.sensors: give either C or observation")
        return None
    if s.positions is not None and len(s.positions) != s.count:
        violations.append(f"model.sensors.positions: {len(s.positions)} positions for {s.count} sensors")
    sensors = []
    for i in range(1, s.count + 1):
        C = cstr_observation(i) if s.observation == "cstr" else s.C
        position = tuple(s.positions[i - 1]) if s.positions and len(s.positions) == s.count else None
        sensor = _collect(
            violations, f"model.sensors[{i}]",
            lambda: SensorModel(i, C, s.R, _inf(s.nu_bound), position),
        )
        if sensor is not None:
            sensors.append(sensor)
    return sensors if len(sensors) == s.count else None


def _build_topology(spec, violations):
    t = spec.topology
    count = spec.model.sensors.count
    if t.edges is not None:
        return _collect(violations, "topology.edges", lambda: Topology.from_edges(count, t.edges))
    if t.radius is not None:
        positions = spec.model.sensors.positions
        if positions is None:
            violations.append("topology.radius: a geometric topology needs model.sensors.positions")
            return None
        return _collect(violations, "topology.radius", lambda: build_geometric_topology(positions, t.radius))
    violations.append("topology: give either edges or radius")
    return None


def _build_schedule(spec, topology, violations):
    families = {}
    for name, family in spec.attacks.families.items():
        built = _collect(violations, f"attacks.families.{name}", lambda: SignalFamily(**family.model_dump()))
        if built is not None:
            families[name] = built
    intervals = []
    for idx, interval in enumerate(spec.attacks.intervals):
        built = _collect(
            violations, f"attacks.intervals[{idx}]",
            lambda: AttackInterval(interval.start, interval.end, frozenset(interval.links), interval.family),
        )
        if built is not None:
            intervals.append(built)
    schedule = _collect(violations, "attacks", lambda: AttackSchedule(tuple(intervals), families))
    if schedule is not None and topology is not None:
        for problem in schedule.violations(topology, spec.run.horizon):
            violations.append(f"attacks: {problem}")
    return schedule


def build_scenario(spec, source=None):
    """
    Validate a parsed ScenarioSpec and assemble the Scenario. Every violation is
    collected before a single ScenarioError is raised.
    """
    violations = []
    model = _collect(
        violations, "model",
        lambda: SystemModel(spec.model.A, spec.model.Q, _inf(spec.model.omega_bound)),
    )
    sensors = _build_sensors(spec, violations)
    topology = _build_topology(spec, violations)

    if model is not None and sensors:
        for sensor in sensors:
            if sensor.C.shape[1] != model.n:
                violations.append(f"model.sensors[{sensor.id}]: C has {sensor.C.shape[1]} columns, state has {model.n}")
    x0 = np.zeros(model.n if model is not None else 0)
    if spec.model.x0 is not None:
        x0 = np.asarray(spec.model.x0, dtype=float)
        if model is not None and x0.shape != (model.n,):
            violations.append(f"model.x0: expected {model.n} entries, got {len(x0)}")

    if topology is not None:
        _collect(violations, "model.consensus", lambda: validate_consensus(spec.model.consensus, topology))

    schedule = _build_schedule(spec, topology, violations)

    sch = spec.scheduler
    if not 0 <= sch.beta <= 1:
        violations.append(f"scheduler.beta: {sch.beta} outside [0, 1]")
    if sch.mode not in MODES:
        violations.append(f"scheduler.mode: '{sch.mode}' is not one of {list(MODES)}")
    if sch.verification not in VERIFICATION_POLICIES:
        violations.append(f"scheduler.verification: '{sch.verification}' is not one of {list(VERIFICATION_POLICIES)}")
    if sch.q is not None and sch.q < 0:
        violations.append(f"scheduler.q: {sch.q} is negative")

    count = spec.model.sensors.count
    detector = _collect(
        violations, "detector",
        lambda: DetectorConfig(spec.detector.upsilon_inv, dict(spec.detector.overrides)),
    )
    unknown = sorted(s for s in spec.detector.overrides if not 1 <= s <= count)
    if unknown:
        violations.append(f"detector.overrides: sensors {unknown} do not exist")

    run = spec.run
    if run.horizon < 1:
        violations.append(f"run.horizon: {run.horizon} must be >= 1")
    if run.runs < 1:
        violations.append(f"run.runs: {run.runs} must be >= 1")
    if run.gain_iters < 1:
        violations.append(f"run.gain_iters: {run.gain_iters} must be >= 1")
    if run.focus_sensors is not None:
        missing = sorted(s for s in run.focus_sensors if not 1 <= s <= count)
        if missing:
            violations.append(f"run.focus_sensors: sensors {missing} do not exist")

    if violations:
        logger.error(f"Scenario {source or spec.name} rejected with {len(violations)} violation(s)")
        raise ScenarioError(violations, source)

    network = SensorNetwork(tuple(sensors), topology)
    scheduler = SchedulerConfig(sch.beta, sch.mode, sch.q, sch.verification)
    candidates = run.focus_sensors or range(1, count + 1)
    focus = tuple(sorted(
        i for i in set(candidates)
        if topology.degree(i) // 2 >= 1 and (sch.q is None or sch.q >= 1)
    ))
    scenario = Scenario(
        name=spec.name,
        model=model,
        network=network,
        x0=x0,
        lam=spec.model.consensus,
        schedule=schedule,
        scheduler=scheduler,
        detector=detector,
        horizon=run.horizon,
        runs=run.runs,
        seed=run.seed,
        focus_sensors=focus,
        gain_iters=run.gain_iters,
        track_augmented_error=run.track_augmented_error,
        spec=spec,
    )
    logger.info(
        f"Scenario {spec.name}: {count} sensors, {len(topology.edges())} edges, "
        f"T={run.horizon}, Z={run.runs}, focus {list(focus)}"
    )
    return scenario


def preset_spec(name, family=UNSTEALTHY, beta=None, mode=None, upsilon_inv=None,
                horizon=None, runs=None, seed=None, verification=None):
    """
    Scenario dict for a named preset with the requested attack family and overrides
    """
    if name not in PRESETS:
        raise ScenarioError([f"unknown preset '{name}', expected one of {sorted(PRESETS)}"])
    if family not in SIGNAL_FAMILIES:
        raise ScenarioError([f"unknown attack family '{family}', expected one of {sorted(SIGNAL_FAMILIES)}"])
    preset = PRESETS[name]

    model = {k: v for k, v in CSTR_MODEL.items()}
    model["sensors"] = dict(CSTR_SENSORS)
    signal = copy.deepcopy(SIGNAL_FAMILIES[family])
    if signal["kind"] == UNSTEALTHY:
        signal["scale"] = preset["unstealthy_scale"]
    intervals = [dict(interval, family=family) for interval in preset["intervals"]]

    scheduler = dict(SCHEDULER_DEFAULTS)
    for key, value in (("beta", beta), ("mode", mode), ("verification", verification)):
        if value is not None:
            scheduler[key] = value
    return {
        "name": f"{name}-{family}",
        "model": model,
        "topology": {"edges": preset["edges"]},
        "attacks": {"families": {family: signal}, "intervals": intervals},
        "scheduler": scheduler,
        "detector": {"upsilon_inv": DETECTOR_DEFAULTS["upsilon_inv"] if upsilon_inv is None else upsilon_inv},
        "run": {
            "horizon": preset["horizon"] if horizon is None else horizon,
            "runs": preset["runs"] if runs is None else runs,
            "seed": settings.SEED if seed is None else seed,
            "focus_sensors": preset["focus_sensors"],
            "gain_iters": settings.GAIN_ITERS,
        },
    }


def _parse(data, source):
    try:
        return ScenarioSpec.model_validate(data)
    except ValidationError as e:
        violations = [
            f"{'.'.join(str(part) for part in err['loc'])}: {err['msg']}" for err in e.errors()
        ]
        logger.error(f"Scenario {source} failed schema validation")
        raise ScenarioError(violations, source) from e


def build_preset(name, **overrides):
    return build_scenario(_parse(preset_spec(name, **overrides), name), name)


def load_scenario(source, **overrides):
    """
    Load a scenario from a preset name or a JSON file path.
    Preset keyword overrides (family, beta, mode, ...) apply to presets only.
    """
    if source in PRESETS:
        return build_preset(source, **overrides)
    if not os.path.exists(source):
        raise ScenarioError([f"no preset or file named '{source}'"], source)

    with open(source, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError([f"line {e.lineno}, column {e.colno}: {e.msg}"], source) from e
    return build_scenario(_parse(data, source), source)
