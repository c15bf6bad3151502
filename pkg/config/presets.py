"""
Scenario presets and constant tables for the CSTR sensor-network cases
"""

# Reactor model: x = [educt concentration, reactor temperature]
CSTR_MODEL = {
    "A": [[0.9719, -0.0013],
          [-0.0340, 0.8628]],
    "Q": [[0.5, 0.0],
          [0.0, 0.5]],
    "omega_bound": 0.05,
    "x0": [0.0, 0.0],
    "consensus": 0.1,
}

# Sensor i observes C_i = [0, 0.1 + 1/i] with scalar noise
CSTR_SENSORS = {
    "count": 30,
    "observation": "cstr",
    "R": [[0.5]],
    "nu_bound": 0.05,
}

# Case 1: sensor 5 and its six neighbours only
CASE1_EDGES = [[5, 3], [5, 7], [5, 10], [5, 13], [5, 23], [5, 26]]

# Case 2: full 30-sensor network. Sensor 5 keeps exactly {3, 7, 10, 13, 23, 26};
# sensors 2 and 16 get four neighbours so two attacked links stay within q_i.
CASE2_EDGES = [
    [3, 5], [5, 7], [5, 10], [5, 13], [5, 23], [5, 26],
    [2, 15], [2, 29], [1, 2], [2, 3],
    [12, 16], [16, 19], [15, 16], [16, 17],
    [1, 4], [4, 6], [6, 8], [8, 9], [9, 11], [11, 14], [14, 17], [17, 18],
    [18, 20], [20, 21], [21, 22], [22, 24], [24, 25], [25, 27], [27, 28],
    [28, 30], [1, 30],
    [3, 4], [7, 8], [10, 11], [12, 13], [13, 14], [19, 20], [22, 23],
    [23, 24], [26, 27], [29, 30], [6, 7], [9, 10], [11, 12], [18, 19],
    [25, 26], [28, 29], [14, 15],
]

CASE1_INTERVALS = [
    {"start": 1, "end": 50, "links": [[5, 7], [5, 10], [5, 23]]},
    {"start": 51, "end": 100, "links": [[5, 3], [5, 7], [5, 23]]},
]

CASE2_INTERVALS = [
    {"start": 101, "end": 500,
     "links": [[2, 15], [2, 29], [5, 7], [5, 10], [5, 23], [16, 12], [16, 19]]},
]

# Injection signal families
SIGNAL_FAMILIES = {
    "unstealthy": {
        "kind": "unstealthy",
        "amplitude_low": 5.0,
        "amplitude_high": 10.0,
        "active_fraction": 0.9,
        "quiet_high": 0.05,
        "scale": 1.0,
    },
    "stealthy": {
        "kind": "stealthy",
        "amplitude_low": 0.02,
        "amplitude_high": 0.08,
        "z_tilde": 0.08,
        "active_fraction": 1.0,
    },
}

# The network-average error dilutes a link injection by 1/|N|
CASE2_UNSTEALTHY_SCALE = 10.0

PRESETS = {
    "cstr-case1": {
        "name": "cstr-case1",
        "edges": CASE1_EDGES,
        "intervals": CASE1_INTERVALS,
        "horizon": 100,
        "runs": 20,
        "focus_sensors": [5],
        "unstealthy_scale": 1.0,
    },
    "cstr-case2": {
        "name": "cstr-case2",
        "edges": CASE2_EDGES,
        "intervals": CASE2_INTERVALS,
        "horizon": 500,
        "runs": 50,
        "focus_sensors": None,
        "unstealthy_scale": CASE2_UNSTEALTHY_SCALE,
    },
}

SCHEDULER_DEFAULTS = {
    "beta": 0.5,
    "mode": "sorted",
    "verification": "detect",
}

DETECTOR_DEFAULTS = {
    "upsilon_inv": 0.5,
}

# Output files
STEPS_COLUMNS = ["pipeline", "seed", "k", "sensor", "f_sel", "f_opt", "opt_rate", "rmse_contrib"]
SUMMARY_COLUMNS = [
    "pipeline", "seed", "avg_opt_rate", "regret_lhs", "regret_rhs", "fn", "fp",
    "max_delta_norm", "delta_bound", "max_rho",
]
RMSE_COLUMNS = ["pipeline", "k", "rmse"]
SWEEP_COLUMNS = ["beta", "upsilon_inv", "fn", "fp", "fn_se", "fp_se", "avg_opt_rate"]

PIPELINES = ["clean", "virtual", "sampled", "sorted", "oracle"]
SCHEDULED_PIPELINES = ["sampled", "sorted", "oracle"]

ERROR_MESSAGES = {
    "assumption": "sensor {sensor} at step {step}: {count} attacked neighbours exceed q = {q}",
    "missing_link": "attacked link ({i}, {j}) is not an edge of the topology",
    "consensus": "consensus parameter {lam} must lie in (0, {limit:.6g}) for max degree {degree}",
    "unstable": "rho(F) = {rho:.6f} >= 1 under the {mask} mask; aborting before simulation",
}
