"""
Evaluation Metrics Module
"""
import logging
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import pandas as pd

from src.errors import ConfigurationError, InvariantViolation

logger = logging.getLogger(__name__)

ORACLE_TOL = 1e-9
ONE_MINUS_INV_E = 1.0 - math.exp(-1.0)


def optimization_rate(f_sel, f_opt, tol=ORACLE_TOL):
    """
    f_sel / f_opt, with 0/0 taken as 1 (nothing to find).
    """
    if f_sel < 0 or f_opt < 0:
        raise ConfigurationError(f"objective values must be nonnegative, got {f_sel}, {f_opt}")
    if f_sel > f_opt + tol:
        raise InvariantViolation(f"selected value {f_sel} exceeds the optimum {f_opt}")
    if f_opt == 0:
        return 1.0
    return min(1.0, f_sel / f_opt)


def average_optimization_rate(rates):
    rates = np.asarray(rates, dtype=float)
    if rates.size == 0:
        return None
    return float(rates.mean())


def regret_bound(q, T, N_size, delta_T):
    """2 sqrt(q T (2 (delta_T + q ln(|N| T)) + q ln T)), natural logs"""
    if T < 1 or N_size < 1:
        raise ConfigurationError(f"regret bound needs T >= 1 and |N| >= 1, got T={T}, |N|={N_size}")
    inner = 2 * (delta_T + q * math.log(N_size * T)) + q * math.log(T)
    return 2.0 * math.sqrt(q * T * inner)


def regret_and_bound(f_selected, f_optimal, q, N_size, delta_T):
    """
    lhs = (1 - 1/e) sum_k f(A*_k) - sum_k f(A_k) over one run; rhs from regret_bound
    with T the run length. A static schedule (delta_T = 0) gives the static-attack bound.
    """
    f_selected = np.asarray(f_selected, dtype=float)
    f_optimal = np.asarray(f_optimal, dtype=float)
    if f_selected.shape != f_optimal.shape:
        raise ConfigurationError("selected and optimal series differ in length")
    T = len(f_selected)
    lhs = ONE_MINUS_INV_E * float(f_optimal.sum()) - float(f_selected.sum())
    return lhs, regret_bound(q, T, N_size, delta_T)


@dataclass
class FlagCounts:
    """Per-link verdict tallies against the ground-truth attacked links"""
    attacked: int = 0
    missed: int = 0
    clean: int = 0
    false_alarms: int = 0

    def record(self, is_attacked, is_flagged):
        if is_attacked:
            self.attacked += 1
            self.missed += int(not is_flagged)
        else:
            self.clean += 1
            self.false_alarms += int(is_flagged)

    def merge(self, other):
        return FlagCounts(
            self.attacked + other.attacked,
            self.missed + other.missed,
            self.clean + other.clean,
            self.false_alarms + other.false_alarms,
        )


def fn_fp_rates(counts):
    """
    (FN, FP). A rate whose denominator is zero is None.
    """
    fn = counts.missed / counts.attacked if counts.attacked else None
    fp = counts.false_alarms / counts.clean if counts.clean else None
    return fn, fp


def binomial_se(p, n):
    if p is None or n <= 0:
        return None
    return math.sqrt(p * (1.0 - p) / n)


def rmse(errors_per_run):
    """
    RMSE(k) = sqrt(mean_z ||e(k, z)||^2) from an array shaped (runs, steps, n)
    of across-sensor mean errors.
    """
    errors = np.asarray(errors_per_run, dtype=float)
    if errors.ndim == 2:
        errors = errors[:, :, None]
    if errors.ndim != 3 or errors.shape[0] < 1:
        raise ConfigurationError(f"expected (runs, steps, n) errors, got shape {errors.shape}")
    return np.sqrt(np.mean(np.sum(errors ** 2, axis=2), axis=0))


def per_sensor_squared_error(xhat, x):
    """
    ||xhat_i - x||^2 for every sensor row. xhat may carry leading step axes,
    (T, N, n) against states (T, n), giving one row per step.
    """
    xhat = np.asarray(xhat, dtype=float)
    x = np.asarray(x, dtype=float)
    return np.sum((xhat - x[..., None, :]) ** 2, axis=-1)


def round_diagnostics(rounds_per_step, f_selected, f_optimal, q):
    """
    Round-wise regret quantities over a run:

        delta_l = sum_k (f(A*_k) - f(A^(l)_k))          l = 0..q
        B^(l)   = q sum_k (best gain - expected gain)   l = 1..q

    and both sides of delta_q - (1 - 1/q)^q delta_0 <= (1/q) sum_l (1 - 1/q)^(q-l) B^(l).
    Report only; nothing is asserted.
    """
    if q == 0:
        return {"deltas": [0.0], "B": [], "lhs": 0.0, "rhs": 0.0}
    deltas = np.zeros(q + 1)
    B = np.zeros(q)
    for rounds, f_sel, f_opt in zip(rounds_per_step, f_selected, f_optimal):
        for l, record in enumerate(rounds):
            deltas[l] += f_opt - record.f_base
            B[l] += q * (record.best_gain - record.expected_gain)
        deltas[q] += f_opt - f_sel
    decay = 1.0 - 1.0 / q
    lhs = deltas[q] - decay ** q * deltas[0]
    rhs = sum(decay ** (q - l) * B[l - 1] for l in range(1, q + 1)) / q
    return {"deltas": deltas.tolist(), "B": B.tolist(), "lhs": float(lhs), "rhs": float(rhs)}


def augmented_error_bound(lam, z_tilde, A, degrees, rho_max):
    """Geometric-series cap lam * max z~ * ||A||_2 * sum |N_i| / (1 - rho_max)"""
    if rho_max >= 1:
        return math.inf
    return lam * z_tilde * float(np.linalg.norm(A, 2)) * float(sum(degrees)) / (1.0 - rho_max)


@dataclass(frozen=True)
class StepMetrics:
    pipeline: str
    seed: int
    k: int
    sensor: int
    f_sel: float = None
    f_opt: float = None
    opt_rate: float = None
    rmse_contrib: float = None

    def to_row(self):
        return asdict(self)

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    @classmethod
    def frame(cls, pipeline, seed, sensors, **series):
        """
        Rows for every step and sensor at once. Each series is shaped
        (T, len(sensors)); row order is step-major.
        """
        sensors = np.asarray(sensors, dtype=int)
        T = len(next(iter(series.values())))
        data = {
            "pipeline": pipeline,
            "seed": seed,
            "k": np.repeat(np.arange(1, T + 1), len(sensors)),
            "sensor": np.tile(sensors, T),
        }
        for name in cls.columns()[4:]:
            data[name] = np.asarray(series[name], dtype=float).ravel()
        return pd.DataFrame(data, columns=cls.columns())


@dataclass
class RunSummary:
    pipeline: str
    seed: int
    avg_opt_rate: float = None
    regret_lhs: float = None
    regret_rhs: float = None
    fn: float = None
    fp: float = None
    max_delta_norm: float = None
    delta_bound: float = None
    max_rho: float = None
    degenerate_steps: int = 0
    flags: FlagCounts = field(default_factory=FlagCounts)
    round_report: dict = field(default_factory=dict)

    def to_row(self, columns):
        return {name: getattr(self, name) for name in columns}
