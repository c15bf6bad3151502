"""
Attack-Detection Scheduler Module

Each sensor picks at most q_i = floor(|N_i| / 2) suspicious neighbours per step
by sequential maximization of f(A) = sqrt(sum_{j in A} d_j^2), where d_j is the
residual between its own estimate and neighbour j's payload. Candidates are
weighted by their current marginal gain blended with a decaying history of
past first-round weights.
"""
import logging
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from src.errors import ConfigurationError

logger = logging.getLogger(__name__)

SAMPLED = "sampled"
SORTED = "sorted"
MODES = (SAMPLED, SORTED)

ORACLE_GUARD = 25
# exp() argument cap keeping the accumulated history finite
EXP_CAP = 600.0


@dataclass(frozen=True)
class ErrorSummary:
    """
    Diagonal of the error matrix for sensor i at step k: one residual norm per
    neighbour, in ascending neighbour id order.
    """
    sensor: int
    step: int
    neighbors: tuple
    entries: np.ndarray

    def __post_init__(self):
        neighbors = tuple(int(j) for j in self.neighbors)
        entries = np.asarray(self.entries, dtype=float).reshape(-1)
        if len(neighbors) != len(entries):
            raise ConfigurationError(
                f"sensor {self.sensor}: {len(entries)} entries for {len(neighbors)} neighbours"
            )
        if list(neighbors) != sorted(set(neighbors)):
            raise ConfigurationError(f"sensor {self.sensor}: neighbours must be unique and ascending")
        if np.any(entries < 0) or not np.all(np.isfinite(entries)):
            raise ConfigurationError(f"sensor {self.sensor}: entries must be finite and nonnegative")
        object.__setattr__(self, "neighbors", neighbors)
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_estimates(cls, sensor, step, xhat_i, received):
        """Residual norms ||xhat_i - xa_ij|| for every neighbour in received"""
        neighbors = tuple(sorted(received))
        xhat_i = np.asarray(xhat_i, dtype=float)
        entries = [np.linalg.norm(xhat_i - np.asarray(received[j], dtype=float)) for j in neighbors]
        return cls(sensor, step, neighbors, np.array(entries, dtype=float))

    @property
    def size(self):
        return len(self.neighbors)

    @property
    def budget(self):
        return self.size // 2

    def indices(self, subset):
        position = {j: idx for idx, j in enumerate(self.neighbors)}
        missing = sorted(set(subset) - set(position))
        if missing:
            raise ConfigurationError(f"sensor {self.sensor}: {missing} are not neighbours")
        return [position[j] for j in sorted(subset)]


@dataclass(frozen=True)
class SuspiciousSet:
    sensor: int
    step: int
    members: frozenset
    budget: int

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(int(j) for j in self.members))
        if len(self.members) > self.budget:
            raise ConfigurationError(
                f"sensor {self.sensor} at step {self.step}: {len(self.members)} suspects exceed q = {self.budget}"
            )

    def __contains__(self, j):
        return j in self.members

    def __len__(self):
        return len(self.members)


@dataclass(frozen=True)
class ExpertState:
    """
    Cross-step memory of one sensor's scheduler.

    W[idx] accumulates exp(-1/k) * v^(1) for neighbours[idx]; history_count is
    the number of steps folded in so far; v_first keeps the latest v^(1).
    """
    beta: float
    neighbors: tuple
    W: np.ndarray
    history_count: int = 0
    v_first: np.ndarray = None

    def __post_init__(self):
        if not 0 <= self.beta <= 1:
            raise ConfigurationError(f"beta must lie in [0, 1], got {self.beta}")
        W = np.asarray(self.W, dtype=float)
        if W.shape != (len(self.neighbors),):
            raise ConfigurationError(f"W must have one entry per neighbour, got shape {W.shape}")
        if np.any(W < 0):
            raise ConfigurationError("historical weights must be nonnegative")
        object.__setattr__(self, "W", W)

    @classmethod
    def initial(cls, beta, neighbors):
        neighbors = tuple(sorted(neighbors))
        return cls(beta, neighbors, np.zeros(len(neighbors)))

    def historical_term(self):
        """W / (k - 1) for the upcoming step k; zero at k = 1"""
        if self.history_count == 0:
            return np.zeros_like(self.W)
        return self.W / self.history_count


@dataclass(frozen=True)
class RoundRecord:
    """What one selection round saw: candidates, their distribution and gains"""
    f_base: float
    candidates: tuple
    probabilities: np.ndarray
    gains: np.ndarray
    chosen: int

    @property
    def expected_gain(self):
        return float(self.probabilities @ self.gains)

    @property
    def best_gain(self):
        return float(self.gains.max()) if self.gains.size else 0.0


@dataclass(frozen=True)
class SelectionResult:
    selection: SuspiciousSet
    expert: ExpertState
    evaluations: int
    rounds: tuple = field(default_factory=tuple)


def _value(entries, idx):
    return float(np.sqrt(np.sum(entries[idx] ** 2)))


def objective(summary, subset):
    """f(A) = sqrt(sum of squared residuals over A); f(empty) = 0"""
    return _value(summary.entries, summary.indices(subset))


def marginal_gain(summary, base, j):
    """f(base + j) - f(base), the positive form of the round gain"""
    if j in base:
        raise ConfigurationError(f"neighbour {j} is already in the base set")
    return objective(summary, set(base) | {j}) - objective(summary, base)


def _check_budget(summary, q):
    if q < 0 or q > summary.budget:
        raise ConfigurationError(
            f"sensor {summary.sensor}: q = {q} outside [0, floor(|N_i|/2) = {summary.budget}]"
        )


def _normalize(w, sensor, step):
    w = np.asarray(w, dtype=float)
    if np.any(np.isinf(w)):
        hot = np.isinf(w).astype(float)
        return hot / hot.sum()
    total = w.sum()
    if not np.isfinite(total) or total <= 0:
        logger.warning(f"Sensor {sensor} step {step}: all candidate weights vanished, drawing uniformly")
        return np.full(len(w), 1.0 / len(w))
    return w / total


def select_suspicious(summary, expert, q, mode=SORTED, rng=None):
    """
    Pick q suspicious neighbours in q rounds and fold the first-round weights
    into the expert history.

    Round l scores each unselected j by G = f(A) - f(A + j) <= 0 and
    v = w_prev * exp(-G). With beta > 0 the round weight becomes
    beta * W / (k - 1) + (1 - beta) * v. Sorted mode takes the heaviest
    candidate (lowest id on ties); sampled mode draws from the normalized weights.
    """
    if mode not in MODES:
        raise ConfigurationError(f"unknown selection mode '{mode}'")
    if mode == SAMPLED and rng is None:
        raise ConfigurationError("sampled mode needs a random stream")
    if expert.neighbors != summary.neighbors:
        raise ConfigurationError(
            f"sensor {summary.sensor}: expert tracks {expert.neighbors}, summary covers {summary.neighbors}"
        )
    _check_budget(summary, q)

    k = expert.history_count + 1
    entries = summary.entries
    historical = expert.historical_term()
    beta = expert.beta

    round_weights = np.ones(summary.size)
    unselected = list(range(summary.size))
    chosen = []
    base_sq = 0.0
    f_base = 0.0
    evaluations = 0
    v_first = None
    rounds = []

    for _ in range(q):
        cand = np.array(unselected)
        values = np.sqrt(base_sq + entries[cand] ** 2)
        evaluations += len(cand)
        G = f_base - values
        v = round_weights[cand] * np.exp(np.minimum(-G, EXP_CAP))
        if v_first is None:
            v_first = v.copy()
        w = v if beta == 0 else beta * historical[cand] + (1 - beta) * v
        round_weights[cand] = w
        p = _normalize(w, summary.sensor, summary.step)

        if mode == SORTED:
            pick = int(np.argmax(p))
        else:
            pick = int(rng.choice(len(cand), p=p))

        idx = int(cand[pick])
        rounds.append(RoundRecord(f_base, tuple(summary.neighbors[c] for c in cand), p, -G, summary.neighbors[idx]))
        chosen.append(idx)
        unselected.remove(idx)
        base_sq += entries[idx] ** 2
        f_base = float(values[pick])

    if v_first is None:
        updated = ExpertState(beta, expert.neighbors, expert.W, k, expert.v_first)
    else:
        W = expert.W + np.exp(-1.0 / k) * v_first
        updated = ExpertState(beta, expert.neighbors, W, k, v_first)

    members = frozenset(summary.neighbors[idx] for idx in chosen)
    selection = SuspiciousSet(summary.sensor, summary.step, members, summary.budget)
    return SelectionResult(selection, updated, evaluations, tuple(rounds))


def oracle_optimal(summary, q):
    """
    Exhaustive maximizer of f over subsets of size <= q. Above ORACLE_GUARD
    neighbours the q largest entries are returned instead.
    """
    if not 0 <= q <= summary.size:
        raise ConfigurationError(f"sensor {summary.sensor}: q = {q} outside [0, {summary.size}]")
    if summary.size > ORACLE_GUARD:
        logger.warning(
            f"Sensor {summary.sensor}: {summary.size} neighbours exceed the exhaustive guard, using top-q"
        )
        return SuspiciousSet(summary.sensor, summary.step, top_q(summary, q), max(q, summary.budget))

    best, best_value = (), 0.0
    for size in range(q, -1, -1):
        for combo in combinations(range(summary.size), size):
            value = _value(summary.entries, list(combo))
            if value > best_value or (size == q and not best):
                best, best_value = combo, value
    members = frozenset(summary.neighbors[idx] for idx in best)
    return SuspiciousSet(summary.sensor, summary.step, members, max(q, summary.budget))


def top_q(summary, q):
    """The q largest entries, lowest id first on ties"""
    order = np.argsort(-summary.entries, kind="stable")[:q]
    return frozenset(summary.neighbors[idx] for idx in order)


def optimal_value(summary, q):
    """f(A*) for cardinality q; monotonicity makes it the top-q value"""
    order = np.argsort(-summary.entries, kind="stable")[:q]
    return _value(summary.entries, order)


def find_submodularity_violations(summary, trials, rng, slack=1e-12):
    """
    Random nested pairs A <= B and j outside B; returns every trial breaking
    monotonicity f(B) >= f(A) or diminishing returns.
    """
    violations = []
    if summary.size == 0:
        return violations
    for trial in range(trials):
        j_idx = int(rng.integers(summary.size))
        others = [idx for idx in range(summary.size) if idx != j_idx]
        in_B = [idx for idx in others if rng.random() < 0.5]
        in_A = [idx for idx in in_B if rng.random() < 0.5]
        A = {summary.neighbors[idx] for idx in in_A}
        B = {summary.neighbors[idx] for idx in in_B}
        j = summary.neighbors[j_idx]

        f_A, f_B = objective(summary, A), objective(summary, B)
        gain_A = objective(summary, A | {j}) - f_A
        gain_B = objective(summary, B | {j}) - f_B
        if f_B < f_A - slack or gain_A < gain_B - slack:
            violations.append({
                "trial": trial,
                "entries": summary.entries.tolist(),
                "A": sorted(A),
                "B": sorted(B),
                "j": j,
                "gain_A": gain_A,
                "gain_B": gain_B,
            })
    return violations


def check_submodularity(summary, trials, rng, slack=1e-12):
    return not find_submodularity_violations(summary, trials, rng, slack)
