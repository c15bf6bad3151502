"""
False Data Injection Module

Time-indexed attack schedules over directed links and the signal families
that generate the injected vectors.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from config.presets import ERROR_MESSAGES
from src.errors import ConfigurationError, InvariantViolation

logger = logging.getLogger(__name__)

UNSTEALTHY = "unstealthy"
STEALTHY = "stealthy"


@dataclass(frozen=True)
class SignalFamily:
    """
    Magnitude law for injected vectors; the direction is always uniform on the unit sphere.

    unstealthy: with probability active_fraction the magnitude is U[low, high] * scale,
    otherwise U[0, quiet_high]. stealthy: U[low, high], never above z_tilde.
    """
    kind: str
    amplitude_low: float
    amplitude_high: float
    z_tilde: float = None
    active_fraction: float = 1.0
    quiet_high: float = 0.05
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in (UNSTEALTHY, STEALTHY):
            raise ConfigurationError(f"unknown signal family kind '{self.kind}'")
        if not 0 <= self.amplitude_low <= self.amplitude_high:
            raise ConfigurationError(
                f"amplitudes must satisfy 0 <= low <= high, got [{self.amplitude_low}, {self.amplitude_high}]"
            )
        if not 0 < self.active_fraction <= 1:
            raise ConfigurationError(f"active_fraction must lie in (0, 1], got {self.active_fraction}")
        if self.kind == STEALTHY:
            if self.z_tilde is None:
                raise ConfigurationError("a stealthy family needs z_tilde")
            if self.amplitude_high > self.z_tilde:
                raise ConfigurationError(
                    f"stealthy amplitude_high {self.amplitude_high} exceeds z_tilde {self.z_tilde}"
                )
        if self.scale <= 0:
            raise ConfigurationError(f"scale must be positive, got {self.scale}")

    @property
    def cap(self):
        """Largest magnitude this family can emit"""
        if self.kind == STEALTHY:
            return self.z_tilde
        return max(self.amplitude_high * self.scale, self.quiet_high)

    def magnitude(self, rng):
        if self.kind == STEALTHY:
            return rng.uniform(self.amplitude_low, self.amplitude_high)
        if rng.random() < self.active_fraction:
            return self.scale * rng.uniform(self.amplitude_low, self.amplitude_high)
        return rng.uniform(0.0, self.quiet_high)

    def draw(self, dim, rng):
        direction = rng.standard_normal(dim)
        direction /= np.linalg.norm(direction)
        z = self.magnitude(rng) * direction
        if self.kind == STEALTHY and np.linalg.norm(z) > self.z_tilde * (1 + 1e-12):
            raise InvariantViolation(f"stealthy draw {np.linalg.norm(z)} exceeds z_tilde {self.z_tilde}")
        return z


@dataclass(frozen=True)
class AttackInterval:
    start: int
    end: int
    links: frozenset
    family: str

    def __post_init__(self):
        if self.start < 1 or self.end < self.start:
            raise ConfigurationError(f"attack interval [{self.start}, {self.end}] is empty or starts before k = 1")
        object.__setattr__(self, "links", frozenset((int(i), int(j)) for i, j in self.links))

    def active(self, k):
        return self.start <= k <= self.end


@dataclass(frozen=True)
class AttackSchedule:
    intervals: tuple = ()
    families: dict = field(default_factory=dict)

    def __post_init__(self):
        intervals = tuple(sorted(self.intervals, key=lambda iv: (iv.start, iv.end)))
        for iv in intervals:
            if iv.family not in self.families:
                raise ConfigurationError(f"attack interval [{iv.start}, {iv.end}] uses unknown family '{iv.family}'")
        object.__setattr__(self, "intervals", intervals)

    @property
    def is_empty(self):
        return not any(iv.links for iv in self.intervals)

    def active_links(self, k):
        """Attacked links at step k with the family that drives each one"""
        links = {}
        for iv in self.intervals:
            if iv.active(k):
                for link in iv.links:
                    links.setdefault(link, iv.family)
        return links

    def max_cap(self):
        return max((self.families[iv.family].cap for iv in self.intervals), default=0.0)

    def violations(self, topology, horizon=None):
        """
        Every problem with this schedule on the given topology: links that are
        not edges and (sensor, step) pairs breaking the at-most-half rule.
        """
        problems = []
        for iv in self.intervals:
            for i, j in sorted(iv.links):
                if not topology.has_edge(i, j):
                    problems.append(ERROR_MESSAGES["missing_link"].format(i=i, j=j))

        # counts only change at interval boundaries
        breakpoints = sorted({iv.start for iv in self.intervals})
        if horizon is not None:
            breakpoints = [k for k in breakpoints if k <= horizon]
        for k in breakpoints:
            for i in range(1, topology.sensor_count + 1):
                attacked = attacked_set(self, i, k)
                q = topology.degree(i) // 2
                if len(attacked) > q:
                    problems.append(ERROR_MESSAGES["assumption"].format(sensor=i, step=k, count=len(attacked), q=q))
        return problems

    def validate(self, topology, horizon=None):
        problems = self.violations(topology, horizon)
        if problems:
            raise ConfigurationError("; ".join(problems))


def injections_at(schedule, k, rng, dim, links=None):
    """
    Injected vectors z_ij(k). Active links get a draw from their family in
    sorted link order; when links is given every other link maps to zero.
    """
    active = schedule.active_links(k)
    out = {}
    if links is not None:
        zero = np.zeros(dim)
        out = {link: zero for link in links}
    for link in sorted(active):
        out[link] = schedule.families[active[link]].draw(dim, rng)
    return out


def attacked_set(schedule, i, k):
    """Ground-truth attacked in-neighbours of sensor i at step k"""
    return frozenset(j for (target, j) in schedule.active_links(k) if target == i)


def delta_T(schedule, i, T):
    """
    Number of attack-strategy changes seen by sensor i over steps 1..T:
    the summed sizes of symmetric differences between consecutive attacked sets.
    """
    if T < 1:
        raise ConfigurationError(f"horizon must be >= 1, got {T}")
    total = 0
    previous = attacked_set(schedule, i, 1)
    for k in range(2, T + 1):
        current = attacked_set(schedule, i, k)
        total += len(previous ^ current)
        previous = current
    return total
