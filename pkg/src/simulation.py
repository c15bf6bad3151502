"""
Monte Carlo Simulation Module

Seeded runs of every estimation pipeline on common random numbers, the
Case 1 / Case 2 harness, the detector sweep and the scheduler oracle check.
"""
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import reduce

import numpy as np
import pandas as pd

from config.presets import (
    ERROR_MESSAGES, PIPELINES, RMSE_COLUMNS, SCHEDULED_PIPELINES, STEPS_COLUMNS, SUMMARY_COLUMNS, SWEEP_COLUMNS,
)
from src.attack_engine import delta_T, injections_at
from src.detector import DetectorConfig, screen_neighbors
from src.errors import ConfigurationError, StabilityError
from src.estimator import EstimatorState, assemble_F, network_step, received_estimates, spectral_radius, synthesize_gains
from src.lin_model import measure, step_state
from src.metrics import (
    FlagCounts, RunSummary, StepMetrics, augmented_error_bound, average_optimization_rate, binomial_se,
    fn_fp_rates, optimization_rate, per_sensor_squared_error, regret_and_bound, rmse, round_diagnostics,
)
from src.scheduler import (
    SAMPLED, SORTED, ErrorSummary, ExpertState, find_submodularity_violations, objective, optimal_value,
    oracle_optimal, select_suspicious,
)
from src.utils import ensure_dir, save_dataframe, save_json

logger = logging.getLogger(__name__)

CLEAN, VIRTUAL, ORACLE = "clean", "virtual", "oracle"

# child stream purposes
PROCESS, MEASUREMENT, ATTACK, DETECTOR, SCHEDULER = range(5)


def run_seeds(master_seed, runs):
    """Independent per-run seeds derived from the master seed"""
    return [int(s) for s in np.random.SeedSequence(master_seed).generate_state(runs)]


def child_rng(run_seed, purpose, sensor=None):
    entropy = [run_seed, purpose] if sensor is None else [run_seed, purpose, sensor]
    return np.random.default_rng(np.random.SeedSequence(entropy))


@dataclass(frozen=True)
class Realization:
    """
    Everything random in one run that all pipelines share.

    states[k] is the true state after k steps (states[0] = x0); measurements[k - 1]
    and injections[k - 1] belong to step k; thresholds[k - 1, i - 1] is sensor i's
    xi at step k.
    """
    states: np.ndarray
    measurements: tuple
    injections: tuple
    thresholds: np.ndarray


def draw_realization(scenario, run_seed):
    T = scenario.horizon
    model = scenario.model
    process = child_rng(run_seed, PROCESS)
    noise = [child_rng(run_seed, MEASUREMENT, s.id) for s in scenario.sensors]
    attacks = child_rng(run_seed, ATTACK)
    detector = child_rng(run_seed, DETECTOR)

    states = np.empty((T + 1, model.n))
    states[0] = scenario.x0
    measurements = []
    injections = []
    for k in range(1, T + 1):
        x = states[k - 1]
        measurements.append([measure(s, x, rng) for s, rng in zip(scenario.sensors, noise)])
        injections.append(injections_at(scenario.schedule, k, attacks, model.n))
        states[k] = step_state(model, x, process)
    thresholds = detector.exponential(1.0, size=(T, len(scenario.sensors)))
    return Realization(states, tuple(measurements), tuple(injections), thresholds)


@dataclass
class RunTrace:
    """
    Per-step record of one run. Row k - 1 of every array holds the quantities
    after step k: states[k - 1] is the true state the step-k update estimates and
    estimates[p][k - 1, i - 1] is sensor i's estimate in pipeline p.
    """
    seed: int
    pipelines: tuple
    states: np.ndarray
    injections: tuple
    estimates: dict
    f_selected: dict
    f_optimal: dict
    opt_rates: dict
    selections: dict
    flagged: dict
    rounds: dict
    flags: dict
    degenerate: dict
    delta_norms: np.ndarray = None
    rhos: np.ndarray = None

    @property
    def horizon(self):
        return len(self.states)

    def mean_error(self, pipeline):
        """Across-sensor mean estimation error per step, shape (T, n)"""
        return self.estimates[pipeline].mean(axis=1) - self.states

    def squared_errors(self, pipeline):
        """||xhat_i(k) - x(k)||^2 per step and sensor, shape (T, N)"""
        return per_sensor_squared_error(self.estimates[pipeline], self.states)


def check_stability(scenario, gains):
    """
    rho(F) under the all-accept and all-reject masks; both must be below 1.
    """
    topology = scenario.topology
    rhos = {}
    for label, value in (("all-accept", 1), ("all-reject", 0)):
        masks = {s.id: {j: value for j in topology.neighbors(s.id)} for s in scenario.sensors}
        F = assemble_F(masks, gains, scenario.model, topology, scenario.lam, scenario.sensors).F
        rho = spectral_radius(F)
        if rho >= 1:
            message = ERROR_MESSAGES["unstable"].format(rho=rho, mask=label)
            logger.error(message)
            raise StabilityError(message)
        rhos[label] = rho
    logger.info(f"Stability precondition holds: {', '.join(f'{k} rho={v:.4f}' for k, v in rhos.items())}")
    return rhos


def _check_pipelines(pipelines):
    unknown = [p for p in pipelines if p not in PIPELINES]
    if unknown:
        raise ConfigurationError(f"unknown pipelines {unknown}, expected a subset of {PIPELINES}")
    # run in canonical order so traces do not depend on the caller's ordering
    return tuple(p for p in PIPELINES if p in pipelines)


def _screen_network(pipeline, k, state, received, scenario, experts, rngs, thresholds, trace, active):
    topology = scenario.topology
    focus = set(scenario.focus_sensors)
    masks = {}
    selections = {}
    flagged_by_sensor = {}
    for sensor in scenario.sensors:
        i = sensor.id
        neighbors = topology.neighbors(i)
        if not neighbors:
            masks[i] = {}
            continue
        q = scenario.q_for(i)
        xhat_i = state.xhat[i - 1]
        summary = ErrorSummary.from_estimates(i, k, xhat_i, received[i])
        if pipeline == ORACLE:
            selection = oracle_optimal(summary, q)
        else:
            result = select_suspicious(summary, experts[i], q, pipeline, rngs.get(i))
            experts[i] = result.expert
            selection = result.selection
            if i in focus:
                trace.rounds[pipeline][i].append(result.rounds)

        mask, flagged = screen_neighbors(
            scenario.detector, i, xhat_i, received[i], selection.members,
            thresholds[i - 1], scenario.scheduler.verification,
        )
        masks[i] = mask
        selections[i] = selection.members
        flagged_by_sensor[i] = flagged

        f_sel = objective(summary, selection.members)
        f_opt = optimal_value(summary, q)
        trace.f_selected[pipeline][k - 1, i - 1] = f_sel
        trace.f_optimal[pipeline][k - 1, i - 1] = f_opt
        trace.opt_rates[pipeline][k - 1, i - 1] = optimization_rate(f_sel, f_opt)
        if f_opt == 0 and i in focus:
            trace.degenerate[pipeline] += 1
        for j in neighbors:
            trace.flags[pipeline].record((i, j) in active, j in flagged)

    trace.selections[pipeline].append(selections)
    trace.flagged[pipeline].append(flagged_by_sensor)
    return masks


def simulate_run(scenario, gains, run_seed, pipelines=PIPELINES):
    """
    One Monte Carlo run of the requested pipelines in lock-step on a shared realization:

      clean   - attacks suppressed, every payload consumed
      virtual - attacks on, every payload consumed
      sampled / sorted - attacks on, suspects chosen by the scheduler and screened
      oracle  - attacks on, suspects chosen by exhaustive search and screened
    """
    pipelines = _check_pipelines(pipelines)
    real = draw_realization(scenario, run_seed)
    T = scenario.horizon
    N = len(scenario.sensors)
    n = scenario.model.n
    topology = scenario.topology
    beta = scenario.scheduler.beta

    start = np.tile(np.asarray(scenario.x0, dtype=float), (N, 1))
    states = {p: EstimatorState(start.copy(), gains, scenario.lam, topology) for p in pipelines}
    experts = {
        p: {s.id: ExpertState.initial(beta, topology.neighbors(s.id)) for s in scenario.sensors}
        for p in pipelines if p in (SAMPLED, SORTED)
    }
    sampling_rngs = {s.id: child_rng(run_seed, SCHEDULER, s.id) for s in scenario.sensors}

    def grid():
        return np.full((T, N), np.nan)

    scheduled = [p for p in pipelines if p in SCHEDULED_PIPELINES]
    trace = RunTrace(
        seed=run_seed,
        pipelines=pipelines,
        states=real.states[1:],
        injections=real.injections,
        estimates={p: np.empty((T, N, n)) for p in pipelines},
        f_selected={p: grid() for p in pipelines},
        f_optimal={p: grid() for p in pipelines},
        opt_rates={p: grid() for p in pipelines},
        selections={p: [] for p in scheduled},
        flagged={p: [] for p in scheduled},
        rounds={p: {i: [] for i in scenario.focus_sensors} for p in scheduled},
        flags={p: FlagCounts() for p in scheduled},
        degenerate={p: 0 for p in pipelines},
    )
    track = scenario.track_augmented_error and VIRTUAL in pipelines and SORTED in pipelines
    if track:
        trace.delta_norms = np.empty(T)
        trace.rhos = np.empty(T)
        links = topology.links()
        rho_cache = {}

    for k in range(1, T + 1):
        injections = real.injections[k - 1]
        measurements = real.measurements[k - 1]
        masks_by_pipeline = {}
        for p in pipelines:
            state = states[p]
            received = received_estimates(state.xhat, topology, None if p == CLEAN else injections)
            masks = None
            if p in SCHEDULED_PIPELINES:
                masks = _screen_network(
                    p, k, state, received, scenario, experts.get(p),
                    sampling_rngs if p == SAMPLED else {}, real.thresholds[k - 1], trace, injections,
                )
                masks_by_pipeline[p] = masks
            state.xhat = network_step(state, measurements, received, masks, scenario.model, scenario.sensors)
            trace.estimates[p][k - 1] = state.xhat

        if track:
            delta = states[VIRTUAL].xhat - states[SORTED].xhat
            trace.delta_norms[k - 1] = np.linalg.norm(delta)
            masks = masks_by_pipeline[SORTED]
            key = tuple(masks[i][j] for i, j in links)
            if key not in rho_cache:
                F = assemble_F(masks, gains, scenario.model, topology, scenario.lam, scenario.sensors).F
                rho_cache[key] = spectral_radius(F)
                if rho_cache[key] >= 1:
                    logger.warning(
                        f"Run {run_seed}, step {k}: rho(F) = {rho_cache[key]:.6f} >= 1 under the sorted detector mask"
                    )
            trace.rhos[k - 1] = rho_cache[key]

    for p, count in trace.degenerate.items():
        if count:
            logger.warning(f"Run {run_seed}, {p}: {count} focus steps had f_opt = 0; their rate counts as 1")
    return trace


def summarize_run(trace, scenario):
    """One RunSummary per pipeline of the trace"""
    focus = list(scenario.focus_sensors)
    T = trace.horizon
    summaries = {}
    for p in trace.pipelines:
        summary = RunSummary(pipeline=p, seed=trace.seed, degenerate_steps=trace.degenerate[p])
        if p in SCHEDULED_PIPELINES:
            if focus:
                columns = [i - 1 for i in focus]
                summary.avg_opt_rate = average_optimization_rate(trace.opt_rates[p][:, columns])
                lhs = rhs = 0.0
                for i in focus:
                    q = scenario.q_for(i)
                    changes = delta_T(scenario.schedule, i, T)
                    l, r = regret_and_bound(
                        trace.f_selected[p][:, i - 1], trace.f_optimal[p][:, i - 1],
                        q, scenario.topology.degree(i), changes,
                    )
                    lhs += l
                    rhs += r
                    if p != ORACLE:
                        summary.round_report[i] = round_diagnostics(
                            trace.rounds[p][i], trace.f_selected[p][:, i - 1], trace.f_optimal[p][:, i - 1], q,
                        )
                summary.regret_lhs, summary.regret_rhs = lhs, rhs
            summary.flags = trace.flags[p]
            summary.fn, summary.fp = fn_fp_rates(trace.flags[p])
        if p == SORTED and trace.delta_norms is not None:
            summary.max_delta_norm = float(trace.delta_norms.max())
            summary.max_rho = float(trace.rhos.max())
            degrees = [scenario.topology.degree(s.id) for s in scenario.sensors]
            summary.delta_bound = augmented_error_bound(
                scenario.lam, scenario.schedule.max_cap(), scenario.model.A, degrees, summary.max_rho,
            )
        summaries[p] = summary
    return summaries


@dataclass
class RunResult:
    """What a worker sends back: summaries, mean-error series and step arrays"""
    seed: int
    summaries: dict
    mean_errors: dict
    steps: dict


def _steps_arrays(trace, focus):
    columns = [i - 1 for i in focus]
    return {
        p: {
            "f_sel": trace.f_selected[p][:, columns],
            "f_opt": trace.f_optimal[p][:, columns],
            "opt_rate": trace.opt_rates[p][:, columns],
            "rmse_contrib": trace.squared_errors(p)[:, columns],
        }
        for p in trace.pipelines
    }


def _run_task(task):
    scenario, gains, seed, pipelines = task
    trace = simulate_run(scenario, gains, seed, pipelines)
    logger.debug(f"Run {seed} finished")
    return RunResult(
        seed=seed,
        summaries=summarize_run(trace, scenario),
        mean_errors={p: trace.mean_error(p) for p in trace.pipelines},
        steps=_steps_arrays(trace, scenario.focus_sensors),
    )


def _run_many(scenario, gains, seeds, pipelines, jobs):
    tasks = [(scenario, gains, seed, pipelines) for seed in seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            results = list(executor.map(_run_task, tasks))
    else:
        results = [_run_task(task) for task in tasks]
    return sorted(results, key=lambda r: r.seed)


def _resolve_seeds(scenario, seeds):
    if seeds is None:
        seeds = scenario.runs
    if isinstance(seeds, int):
        if seeds < 1:
            raise ConfigurationError(f"need at least one run, got {seeds}")
        return run_seeds(scenario.seed, seeds)
    return [int(s) for s in seeds]


@dataclass
class CaseResult:
    scenario: str
    seeds: list
    pipelines: tuple
    summaries: list
    rmse: dict
    results: list = field(default_factory=list, repr=False)
    files: dict = field(default_factory=dict)

    def summaries_for(self, pipeline):
        return [s for s in self.summaries if s.pipeline == pipeline]

    def mean_opt_rate(self, pipeline):
        rates = [s.avg_opt_rate for s in self.summaries_for(pipeline) if s.avg_opt_rate is not None]
        return float(np.mean(rates)) if rates else None

    def summary_frame(self):
        return pd.DataFrame([s.to_row(SUMMARY_COLUMNS) for s in self.summaries], columns=SUMMARY_COLUMNS)

    def rmse_frame(self):
        frames = [
            pd.DataFrame({"pipeline": p, "k": np.arange(1, len(series) + 1), "rmse": series})
            for p, series in self.rmse.items()
        ]
        return pd.concat(frames, ignore_index=True)[RMSE_COLUMNS]


def _steps_frame(result, pipelines, focus):
    frames = [StepMetrics.frame(p, result.seed, focus, **result.steps[p]) for p in pipelines]
    return pd.concat(frames, ignore_index=True)[STEPS_COLUMNS]


def write_case(case, scenario, out_dir, write_steps=True):
    ensure_dir(out_dir)
    files = {
        "summary": save_dataframe(case.summary_frame(), os.path.join(out_dir, "summary.csv")),
        "rmse": save_dataframe(case.rmse_frame(), os.path.join(out_dir, "rmse.csv")),
    }
    if write_steps and scenario.focus_sensors:
        path = os.path.join(out_dir, "steps.csv")
        for idx, result in enumerate(case.results):
            save_dataframe(
                _steps_frame(result, case.pipelines, scenario.focus_sensors), path,
                append=idx > 0, quiet=idx < len(case.results) - 1,
            )
        files["steps"] = path
    manifest = {
        "scenario": scenario.manifest(),
        "master_seed": scenario.seed,
        "run_seeds": case.seeds,
        "pipelines": list(case.pipelines),
        "focus_sensors": list(scenario.focus_sensors),
    }
    files["manifest"] = save_json(manifest, os.path.join(out_dir, "manifest.json"))
    case.files = files
    return files


def run_case(scenario, seeds=None, out_dir=None, jobs=1, pipelines=PIPELINES, write_steps=True):
    """
    Simulate every run of a scenario and aggregate it.

    seeds is a run count (derived from the scenario's master seed) or an explicit
    list of run seeds. Results are ordered by seed, so output does not depend on jobs.
    """
    pipelines = _check_pipelines(pipelines)
    seeds = _resolve_seeds(scenario, seeds)
    gains = synthesize_gains(scenario.model, scenario.sensors, scenario.gain_iters)
    check_stability(scenario, gains)

    logger.info(f"Running {scenario.name}: {len(seeds)} run(s), pipelines {list(pipelines)}, jobs={jobs}")
    results = _run_many(scenario, gains, seeds, pipelines, jobs)

    summaries = [r.summaries[p] for r in results for p in pipelines]
    curves = {p: rmse(np.stack([r.mean_errors[p] for r in results])) for p in pipelines}
    case = CaseResult(scenario.name, [r.seed for r in results], pipelines, summaries, curves, results)

    headline = scenario.scheduler.mode
    if headline in pipelines:
        logger.info(f"{scenario.name}: mean average optimization rate ({headline}) = {case.mean_opt_rate(headline)}")
    if out_dir:
        write_case(case, scenario, out_dir, write_steps)
    logger.info(f"Finished {scenario.name}")
    return case


def sweep(scenario, beta_grid, upsilon_inv_grid, seeds=None, jobs=1, out_dir=None):
    """
    Full factorial over (beta, upsilon_inv) with the scenario's selection mode.
    FN and FP are pooled over seeds; their standard errors are binomial.
    """
    beta_grid = list(beta_grid)
    upsilon_inv_grid = list(upsilon_inv_grid)
    if not beta_grid or not upsilon_inv_grid:
        raise ConfigurationError("sweep grids must be nonempty")
    seeds = _resolve_seeds(scenario, seeds)
    gains = synthesize_gains(scenario.model, scenario.sensors, scenario.gain_iters)
    check_stability(scenario, gains)
    pipeline = scenario.scheduler.mode

    rows = []
    for beta in beta_grid:
        for upsilon_inv in upsilon_inv_grid:
            variant = replace(
                scenario,
                scheduler=replace(scenario.scheduler, beta=beta),
                detector=DetectorConfig(upsilon_inv, dict(scenario.detector.overrides)),
            )
            results = _run_many(variant, gains, seeds, (pipeline,), jobs)
            counts = reduce(FlagCounts.merge, (r.summaries[pipeline].flags for r in results), FlagCounts())
            fn, fp = fn_fp_rates(counts)
            rates = [r.summaries[pipeline].avg_opt_rate for r in results]
            rates = [x for x in rates if x is not None]
            rows.append({
                "beta": beta,
                "upsilon_inv": upsilon_inv,
                "fn": fn,
                "fp": fp,
                "fn_se": binomial_se(fn, counts.attacked),
                "fp_se": binomial_se(fp, counts.clean),
                "avg_opt_rate": float(np.mean(rates)) if rates else None,
            })
            logger.info(f"Sweep beta={beta} upsilon_inv={upsilon_inv}: FN={fn} FP={fp}")

    table = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    _report_beta_preference(table)
    if out_dir:
        ensure_dir(out_dir)
        save_dataframe(table, os.path.join(out_dir, "sweep.csv"))
    return table


def _report_beta_preference(table, preferred=0.5):
    by_beta = table.groupby("beta")["avg_opt_rate"].mean()
    if preferred not in by_beta.index or by_beta.isna().all():
        return None
    best = by_beta.idxmax()
    if best == preferred:
        logger.info(f"beta={preferred} gives the best mean optimization rate ({by_beta[preferred]:.4f})")
    else:
        logger.warning(
            f"beta={best} beats beta={preferred} on mean optimization rate "
            f"({by_beta[best]:.4f} vs {by_beta[preferred]:.4f})"
        )
    return best == preferred


def oracle_check(sizes=range(4, 11), q_values=None, trials=1000, seed=0, submodularity_trials=10):
    """
    Random ErrorSummary instances: sorted selection with beta = 0 must equal the
    exhaustive optimum, stay within q |N| objective evaluations and pass the
    submodularity checks. Every failing instance is returned for replay.
    """
    sizes = list(sizes)
    if any(size > 25 for size in sizes):
        raise ConfigurationError("oracle_check sizes must not exceed 25")
    rng = np.random.default_rng(seed)
    failures = []

    golden = ErrorSummary(0, 1, (1, 2, 3, 4), np.array([1.0, 2.0, 3.0, 4.0]))
    golden_set = oracle_optimal(golden, 2).members
    if golden_set != {3, 4} or abs(objective(golden, golden_set) - 5.0) > 1e-12:
        failures.append({"check": "golden", "entries": [1, 2, 3, 4], "q": 2, "got": sorted(golden_set)})

    for trial in range(trials):
        size = int(rng.choice(sizes))
        allowed = [q for q in (q_values or range(size // 2 + 1)) if q <= size // 2]
        if not allowed:
            continue
        q = int(rng.choice(allowed))
        summary = ErrorSummary(0, 1, tuple(range(1, size + 1)), rng.uniform(0.0, 10.0, size))
        result = select_suspicious(summary, ExpertState.initial(0.0, summary.neighbors), q, SORTED)
        optimum = oracle_optimal(summary, q).members
        instance = {"trial": trial, "entries": summary.entries.tolist(), "q": q}
        if result.selection.members != optimum:
            failures.append({**instance, "check": "oracle", "selected": sorted(result.selection.members),
                             "optimal": sorted(optimum)})
        if result.evaluations > q * size:
            failures.append({**instance, "check": "evaluations", "evaluations": result.evaluations})
        for violation in find_submodularity_violations(summary, submodularity_trials, rng):
            failures.append({**instance, "check": "submodularity", **violation})

    report = {"success": not failures, "trials": trials, "failures": failures}
    if failures:
        logger.error(f"Oracle check failed on {len(failures)} instance(s)")
    else:
        logger.info(f"Oracle check passed on {trials} instances")
    return report
