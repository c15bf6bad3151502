"""
Exponential-Threshold Residual Detector Module

A neighbour's payload passes when its residual against the local estimate
stays below a random threshold: gamma = 1 iff ||xhat_i - xa_ij|| <= xi / upsilon_inv,
with xi ~ Exp(1) drawn once per sensor and step.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from src.errors import ConfigurationError

logger = logging.getLogger(__name__)

DETECT = "detect"
EXCLUDE = "exclude"
VERIFICATION_POLICIES = (DETECT, EXCLUDE)


@dataclass(frozen=True)
class DetectorConfig:
    """Detection sharpness upsilon_inv, with optional per-sensor overrides"""
    upsilon_inv: float
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        bad = {s: v for s, v in self.overrides.items() if not v > 0}
        if not self.upsilon_inv > 0 or bad:
            raise ConfigurationError(
                f"upsilon_inv must be positive, got {self.upsilon_inv} (overrides {bad or 'ok'})"
            )
        object.__setattr__(self, "overrides", {int(s): float(v) for s, v in self.overrides.items()})

    def for_sensor(self, i):
        return self.overrides.get(i, self.upsilon_inv)


def draw_threshold(rng):
    """One xi ~ Exp(1)"""
    return rng.exponential(1.0)


def residual_norm(xhat_i, received):
    xhat_i = np.asarray(xhat_i, dtype=float)
    received = np.asarray(received, dtype=float)
    if xhat_i.shape != received.shape:
        raise ConfigurationError(f"residual operands differ in shape: {xhat_i.shape} vs {received.shape}")
    return float(np.linalg.norm(xhat_i - received))


def detect(cfg, xhat_i, received, rng=None, xi=None, sensor=None):
    """
    Verdict for one received payload: 1 = accepted, 0 = flagged as attacked.

    Pass xi to share one threshold across a sensor's neighbour tests; otherwise
    a fresh one is drawn from rng.
    """
    if xi is None:
        if rng is None:
            raise ConfigurationError("detect needs either a random stream or a drawn threshold")
        xi = draw_threshold(rng)
    upsilon_inv = cfg.upsilon_inv if sensor is None else cfg.for_sensor(sensor)
    # r <= xi / upsilon_inv, written without the division
    return int(upsilon_inv * residual_norm(xhat_i, received) <= xi)


def flag_probability(cfg, residual, sensor=None):
    """Pr(gamma = 0) = 1 - exp(-upsilon_inv * residual)"""
    if residual < 0:
        raise ConfigurationError(f"residual norm must be nonnegative, got {residual}")
    upsilon_inv = cfg.upsilon_inv if sensor is None else cfg.for_sensor(sensor)
    return float(-np.expm1(-upsilon_inv * residual))


def screen_neighbors(cfg, i, xhat_i, received, selection, xi, verification=DETECT):
    """
    Inclusion mask for sensor i after verifying its suspicious set.

    Unselected neighbours are trusted (gamma = 1). Under "detect" a selected
    neighbour keeps the detector's verdict; under "exclude" it is dropped.
    Returns (mask, flagged) with flagged the selected neighbours given gamma = 0.
    """
    if verification not in VERIFICATION_POLICIES:
        raise ConfigurationError(f"unknown verification policy '{verification}'")
    mask = {j: 1 for j in received}
    flagged = set()
    for j in sorted(selection):
        if j not in received:
            raise ConfigurationError(f"sensor {i}: selected neighbour {j} sent no payload")
        if verification == EXCLUDE:
            gamma = 0
        else:
            gamma = detect(cfg, xhat_i, received[j], xi=xi, sensor=i)
        mask[j] = gamma
        if not gamma:
            flagged.add(j)
    return mask, frozenset(flagged)
