"""
Plant, Sensor and Topology Module
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, squareform

from src.errors import ConfigurationError, SamplingError

logger = logging.getLogger(__name__)

MAX_REJECTIONS = 1_000_000


def _as_matrix(value, name):
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    if arr.ndim != 2:
        raise ConfigurationError(f"{name} must be a matrix, got {arr.ndim} dimensions")
    return arr


def _check_covariance(cov, name):
    if cov.shape[0] != cov.shape[1]:
        raise ConfigurationError(f"{name} must be square, got {cov.shape}")
    if not np.allclose(cov, cov.T):
        raise ConfigurationError(f"{name} must be symmetric")
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as e:
        raise ConfigurationError(f"{name} must be positive definite") from e


@dataclass(frozen=True)
class SystemModel:
    """
    Linear plant x(k+1) = A x(k) + w(k) with norm-capped Gaussian process noise.
    """
    A: np.ndarray
    Q: np.ndarray
    omega_bound: float = np.inf

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        Q = _as_matrix(self.Q, "Q")
        if A.shape[0] != A.shape[1] or A.shape[0] < 1:
            raise ConfigurationError(f"A must be square with n >= 1, got {A.shape}")
        if Q.shape != A.shape:
            raise ConfigurationError(f"Q must match A: expected {A.shape}, got {Q.shape}")
        _check_covariance(Q, "Q")
        if self.omega_bound < 0:
            raise ConfigurationError(f"omega_bound must be nonnegative, got {self.omega_bound}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "Q", Q)

    @property
    def n(self):
        return self.A.shape[0]


@dataclass(frozen=True)
class SensorModel:
    """
    Sensor i measures y_i = C x + v with norm-capped Gaussian noise.
    """
    id: int
    C: np.ndarray
    R: np.ndarray
    nu_bound: float = np.inf
    position: tuple = None

    def __post_init__(self):
        if self.id < 1:
            raise ConfigurationError(f"sensor ids start at 1, got {self.id}")
        C = _as_matrix(self.C, f"C_{self.id}")
        R = _as_matrix(self.R, f"R_{self.id}")
        if R.shape != (C.shape[0], C.shape[0]):
            raise ConfigurationError(
                f"R_{self.id} must be {C.shape[0]}x{C.shape[0]}, got {R.shape}"
            )
        _check_covariance(R, f"R_{self.id}")
        if self.nu_bound < 0:
            raise ConfigurationError(f"nu_bound of sensor {self.id} must be nonnegative")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "R", R)

    @property
    def m(self):
        return self.C.shape[0]


@dataclass(frozen=True)
class Topology:
    """
    Undirected sensor graph. Sensors are numbered 1..sensor_count and
    adjacency[i - 1] holds the sorted neighbour ids of sensor i.
    """
    sensor_count: int
    adjacency: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.sensor_count < 1:
            raise ConfigurationError("a topology needs at least one sensor")
        adjacency = tuple(tuple(sorted(set(int(j) for j in row))) for row in self.adjacency)
        if len(adjacency) != self.sensor_count:
            raise ConfigurationError(
                f"adjacency has {len(adjacency)} rows for {self.sensor_count} sensors"
            )
        for i, row in enumerate(adjacency, start=1):
            for j in row:
                if not 1 <= j <= self.sensor_count:
                    raise ConfigurationError(f"sensor {i} lists neighbour {j} outside [1, {self.sensor_count}]")
                if j == i:
                    raise ConfigurationError(f"sensor {i} lists itself as a neighbour")
                if i not in adjacency[j - 1]:
                    raise ConfigurationError(f"edge ({i}, {j}) is not symmetric")
        object.__setattr__(self, "adjacency", adjacency)

    @classmethod
    def from_edges(cls, sensor_count, edges):
        """
        Build from an undirected edge list; each pair is added in both directions
        """
        rows = [set() for _ in range(sensor_count)]
        for i, j in edges:
            i, j = int(i), int(j)
            for a, b in ((i, j), (j, i)):
                if not 1 <= a <= sensor_count:
                    raise ConfigurationError(f"edge ({i}, {j}) references a sensor outside [1, {sensor_count}]")
                rows[a - 1].add(b)
        return cls(sensor_count, tuple(tuple(r) for r in rows))

    def neighbors(self, i):
        return self.adjacency[i - 1]

    def degree(self, i):
        return len(self.adjacency[i - 1])

    @property
    def max_degree(self):
        return max((len(row) for row in self.adjacency), default=0)

    def has_edge(self, i, j):
        return 1 <= i <= self.sensor_count and j in self.adjacency[i - 1]

    def links(self):
        """All directed links (i, j): sensor i receives from neighbour j"""
        return [(i, j) for i in range(1, self.sensor_count + 1) for j in self.adjacency[i - 1]]

    def edges(self):
        return [(i, j) for i, j in self.links() if i < j]


@dataclass(frozen=True)
class SensorNetwork:
    sensors: tuple
    topology: Topology

    def __post_init__(self):
        sensors = tuple(sorted(self.sensors, key=lambda s: s.id))
        ids = [s.id for s in sensors]
        if ids != list(range(1, self.topology.sensor_count + 1)):
            raise ConfigurationError(
                f"sensor ids must be exactly 1..{self.topology.sensor_count}, got {ids}"
            )
        object.__setattr__(self, "sensors", sensors)

    def sensor(self, i):
        return self.sensors[i - 1]

    def __len__(self):
        return len(self.sensors)


def cstr_observation(i):
    """Observation row of sensor i in the reactor network: [0, 0.1 + 1/i]"""
    return np.array([[0.0, 0.1 + 1.0 / i]])


def sample_bounded_gaussian(cov, bound, rng, max_rejections=MAX_REJECTIONS):
    """
    Zero-mean Gaussian sample with covariance cov, resampled until its norm is <= bound.

    Candidates are drawn in growing batches and the first accepted one is returned,
    so the result depends only on the generator state.
    """
    cov = _as_matrix(cov, "cov")
    n = cov.shape[0]
    chol = np.linalg.cholesky(cov)
    if np.isinf(bound):
        return chol @ rng.standard_normal(n)
    if bound <= 0:
        raise SamplingError(f"bound must be positive, got {bound}")

    drawn = 0
    batch = 64
    while drawn < max_rejections:
        size = min(batch, max_rejections - drawn)
        candidates = rng.standard_normal((size, n)) @ chol.T
        accepted = np.flatnonzero(np.linalg.norm(candidates, axis=1) <= bound)
        if accepted.size:
            return candidates[accepted[0]]
        drawn += size
        batch = min(batch * 2, 65536)

    raise SamplingError(
        f"no sample with norm <= {bound} after {max_rejections} draws; the bound is too tight for the covariance"
    )


def step_state(model, x, rng=None):
    """
    Propagate the plant one step. With rng=None the process noise is zero.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n,):
        raise ConfigurationError(f"state must have shape ({model.n},), got {x.shape}")
    nxt = model.A @ x
    if rng is not None:
        nxt = nxt + sample_bounded_gaussian(model.Q, model.omega_bound, rng)
    return nxt


def measure(sensor, x, rng=None):
    """
    Measurement of one sensor. With rng=None the measurement noise is zero.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (sensor.C.shape[1],):
        raise ConfigurationError(
            f"sensor {sensor.id} expects a state of shape ({sensor.C.shape[1]},), got {x.shape}"
        )
    y = sensor.C @ x
    if rng is not None:
        y = y + sample_bounded_gaussian(sensor.R, sensor.nu_bound, rng)
    return y


def build_geometric_topology(positions, radius):
    """
    Disk graph: sensors i and j are linked when their distance is at most radius
    """
    if radius < 0:
        raise ConfigurationError(f"radius must be nonnegative, got {radius}")
    points = np.asarray(positions, dtype=float).reshape(-1, 2)
    count = len(points)
    if count == 1:
        return Topology(1, ((),))
    dist = squareform(pdist(points))
    within = (dist <= radius) & ~np.eye(count, dtype=bool)
    adjacency = tuple(tuple(int(j) + 1 for j in np.flatnonzero(row)) for row in within)
    logger.info(f"Geometric topology: {count} sensors, radius {radius}, {int(within.sum()) // 2} edges")
    return Topology(count, adjacency)
