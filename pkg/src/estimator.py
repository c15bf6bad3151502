"""
Distributed Consensus Estimator Module

Per-sensor update with detector masking, the detector-free (virtual) variant,
and the stacked difference dynamics between the two.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigvals, solve

from config.presets import ERROR_MESSAGES
from src.errors import ConfigurationError, ProtocolError, SynthesisError

logger = logging.getLogger(__name__)

RICCATI_TOL = 1e-10
RICCATI_DIVERGENCE = 1e12


def consensus_limit(topology):
    """Upper end of the admissible consensus parameter range, min_i 1/|N_i|"""
    degree = topology.max_degree
    return np.inf if degree == 0 else 1.0 / degree


def validate_consensus(lam, topology):
    limit = consensus_limit(topology)
    if not 0 < lam < limit:
        raise ConfigurationError(
            ERROR_MESSAGES["consensus"].format(lam=lam, limit=limit, degree=topology.max_degree)
        )


@dataclass
class EstimatorState:
    """
    Estimates of all sensors (row i-1 is sensor i) with their gains and the consensus parameter.
    """
    xhat: np.ndarray
    gains: list
    lam: float
    topology: object

    def __post_init__(self):
        self.xhat = np.array(self.xhat, dtype=float)
        if self.xhat.ndim != 2 or self.xhat.shape[0] != self.topology.sensor_count:
            raise ConfigurationError(
                f"xhat must have one row per sensor ({self.topology.sensor_count}), got {self.xhat.shape}"
            )
        if len(self.gains) != self.topology.sensor_count:
            raise ConfigurationError(f"expected {self.topology.sensor_count} gains, got {len(self.gains)}")
        validate_consensus(self.lam, self.topology)

    def copy(self):
        return EstimatorState(self.xhat.copy(), self.gains, self.lam, self.topology)


def _riccati_gain(A, Q, C, R, iters, sensor_id):
    P = Q.copy()
    for _ in range(iters):
        S = C @ P @ C.T + R
        APCt = A @ P @ C.T
        P_next = A @ P @ A.T + Q - APCt @ solve(S, APCt.T, assume_a="pos")
        P_next = 0.5 * (P_next + P_next.T)
        norm = np.linalg.norm(P_next)
        if not np.isfinite(norm) or norm > RICCATI_DIVERGENCE:
            raise SynthesisError(sensor_id, f"Riccati recursion diverged (norm {norm:.3g})")
        change = np.linalg.norm(P_next - P) / max(norm, np.finfo(float).tiny)
        P = P_next
        if change < RICCATI_TOL:
            break
    else:
        logger.warning(f"Riccati recursion for sensor {sensor_id} hit the {iters}-iteration cap")

    S = C @ P @ C.T + R
    return solve(S, (A @ P @ C.T).T, assume_a="pos").T, P


def synthesize_gains(model, sensors, iters=10000):
    """
    Steady-state predictor gain K_i = A P C^T (C P C^T + R)^-1 for every sensor.
    """
    gains = []
    for sensor in sensors:
        if sensor.C.shape[1] != model.n:
            raise ConfigurationError(
                f"C_{sensor.id} has {sensor.C.shape[1]} columns but the state has {model.n}"
            )
        K, _ = _riccati_gain(model.A, model.Q, sensor.C, sensor.R, iters, sensor.id)
        gains.append(K)
    logger.info(f"Synthesized steady-state gains for {len(gains)} sensors")
    return gains


def _check_payloads(i, neighbors, received, mask):
    expected = set(neighbors)
    if set(received) != expected:
        missing = sorted(expected - set(received))
        extra = sorted(set(received) - expected)
        raise ProtocolError(f"sensor {i}: received payloads missing {missing}, unexpected {extra}")
    if mask is not None and set(mask) != expected:
        raise ProtocolError(f"sensor {i}: mask must cover exactly neighbours {sorted(expected)}")


def estimator_step(state, y_i, received, mask, model, sensor):
    """
    One update of sensor i's estimate with detector masking:

        x_i+ = A x_i + K_i (y_i - C_i x_i) - lam A sum_j gamma_ij (x_i - xa_ij)

    received maps each neighbour j to the (possibly tampered) estimate xa_ij,
    mask maps each neighbour j to gamma_ij in {0, 1}.
    """
    i = sensor.id
    neighbors = state.topology.neighbors(i)
    _check_payloads(i, neighbors, received, mask)

    x_i = state.xhat[i - 1]
    y_i = np.atleast_1d(np.asarray(y_i, dtype=float))
    if y_i.shape != (sensor.m,):
        raise ConfigurationError(f"sensor {i}: measurement must have shape ({sensor.m},), got {y_i.shape}")

    disagreement = np.zeros_like(x_i)
    for j in neighbors:
        if mask[j]:
            disagreement += x_i - np.asarray(received[j], dtype=float)

    K = state.gains[i - 1]
    return model.A @ x_i + K @ (y_i - sensor.C @ x_i) - state.lam * (model.A @ disagreement)


def virtual_estimator_step(state, y_i, received, model, sensor):
    """Detector-free update: every received payload is consumed (gamma_ij = 1)."""
    mask = {j: 1 for j in state.topology.neighbors(sensor.id)}
    return estimator_step(state, y_i, received, mask, model, sensor)


def received_estimates(xhat, topology, injections=None):
    """
    Payloads each sensor receives: xa_ij = x_j + z_ij for every neighbour j.
    """
    injections = injections or {}
    payloads = {}
    for i in range(1, topology.sensor_count + 1):
        row = {}
        for j in topology.neighbors(i):
            z = injections.get((i, j))
            row[j] = xhat[j - 1] if z is None else xhat[j - 1] + z
        payloads[i] = row
    return payloads


def network_step(state, measurements, received, masks, model, sensors):
    """
    Advance every sensor's estimate. masks=None runs the detector-free variant.
    """
    updated = np.empty_like(state.xhat)
    for sensor in sensors:
        i = sensor.id
        if masks is None:
            updated[i - 1] = virtual_estimator_step(state, measurements[i - 1], received[i], model, sensor)
        else:
            updated[i - 1] = estimator_step(state, measurements[i - 1], received[i], masks[i], model, sensor)
    return updated


def delta_step(delta, mask, payloads, gains, model, topology, lam, sensors):
    """
    Difference between the detector-free and detector-equipped estimates, one step ahead:

        d_i+ = (A - K_i C_i) d_i - lam A sum_j gamma_ij (d_i - d_j) + lam A sum_j (1 - gamma_ij) u_ij

    payloads[(i, j)] = u_ij is the residual xa'_ij - x'_i consumed by the
    detector-free estimator on link (i, j); excluded links are the only ones
    that drive the difference.
    """
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (topology.sensor_count, model.n):
        raise ConfigurationError(
            f"delta must have shape ({topology.sensor_count}, {model.n}), got {delta.shape}"
        )
    A = model.A
    nxt = np.empty_like(delta)
    for sensor in sensors:
        i = sensor.id
        d_i = delta[i - 1]
        coupling = np.zeros(model.n)
        drive = np.zeros(model.n)
        for j in topology.neighbors(i):
            gamma = mask[i][j]
            coupling += gamma * (d_i - delta[j - 1])
            if not gamma:
                drive += np.asarray(payloads.get((i, j), 0.0), dtype=float)
        closed_loop = A - gains[i - 1] @ sensor.C
        nxt[i - 1] = closed_loop @ d_i - lam * (A @ coupling) + lam * (A @ drive)
    return nxt


@dataclass
class AugmentedError:
    """
    Stacked difference dynamics Dx(k+1) = F Dx(k) + lam (Upsilon' kron A) Z(k).

    Gamma_mat stores -gamma_ij off the diagonal and -sum_j gamma_ij on it; it
    plays no part in the numerics.
    """
    delta_xhat: np.ndarray
    F: np.ndarray
    Gamma_mat: np.ndarray
    Upsilon: np.ndarray
    input_matrix: np.ndarray

    def propagate(self, Z):
        """Next stacked difference given the stacked per-link payload vector Z"""
        return self.F @ self.delta_xhat + self.input_matrix @ Z


def assemble_F(mask, gains, model, topology, lam, sensors, delta_xhat=None):
    """
    Build F(k), Gamma(k) and the input matrix reproducing delta_step in stacked form.

    Block (i, i) of F is A - K_i C_i - lam A sum_j gamma_ij and block (i, j) is
    lam A gamma_ij. Upsilon row i holds 1 - gamma_ij for every j, so the
    stacked payload Z lists u_ij for j = 1..|N| within each i (zero off the edges).
    """
    N = topology.sensor_count
    n = model.n
    A = model.A
    gamma = np.zeros((N, N))
    for i, j in topology.links():
        gamma[i - 1, j - 1] = mask[i][j]

    F = np.zeros((N * n, N * n))
    for sensor in sensors:
        i = sensor.id - 1
        F[i * n:(i + 1) * n, i * n:(i + 1) * n] = (
            A - gains[i] @ sensor.C - lam * gamma[i].sum() * A
        )
        for j in np.flatnonzero(gamma[i]):
            F[i * n:(i + 1) * n, j * n:(j + 1) * n] = lam * A

    Gamma_mat = -gamma.copy()
    np.fill_diagonal(Gamma_mat, -gamma.sum(axis=1))

    adjacency = np.zeros((N, N))
    for i, j in topology.links():
        adjacency[i - 1, j - 1] = 1.0
    excluded = adjacency * (1.0 - gamma)
    Upsilon = np.zeros((N, N * N))
    for i in range(N):
        Upsilon[i, i * N:(i + 1) * N] = excluded[i]
    input_matrix = lam * np.kron(Upsilon, A)

    if delta_xhat is None:
        delta_xhat = np.zeros(N * n)
    return AugmentedError(np.asarray(delta_xhat, dtype=float).reshape(-1), F, Gamma_mat, Upsilon, input_matrix)


def stack_payloads(payloads, topology, n):
    """Stack per-link payloads u_ij into the Z(k) vector used by the input matrix"""
    N = topology.sensor_count
    Z = np.zeros(N * N * n)
    for (i, j), u in payloads.items():
        if topology.has_edge(i, j):
            start = ((i - 1) * N + (j - 1)) * n
            Z[start:start + n] = u
    return Z


def spectral_radius(F):
    """Largest eigenvalue modulus of a square matrix, from a dense eigensolve"""
    F = np.asarray(F, dtype=float)
    if F.ndim != 2 or F.shape[0] != F.shape[1]:
        raise ConfigurationError(f"spectral radius needs a square matrix, got {F.shape}")
    if F.shape[0] == 0:
        return 0.0
    return float(np.max(np.abs(eigvals(F))))
