"""Small built-in scenarios used by ``codednet validate`` and the test-suite.

All of them use a point-mass channel (every gain equals its pathloss mean) so
that the deterministic oracle applies.
"""

from __future__ import annotations

import copy

_COMMON = {
    "tones": 1,
    "bounds": {"a_min": 1e-4, "a_max": 5, "p_node_max": 5, "p_tone_max": 5,
               "c_max": "waterfill", "z_max": "half_c_max", "x_max": "half_z_max"},
    "utility": {"kind": "log"},
    "cost": {"kind": "quadratic", "coef": 10},
    "channel": {"distribution": "table", "atoms": [1.0], "probs": [1.0],
                "pathloss": {"scale": 0.1, "d0": 20, "exponent": 2},
                "noise": {"rule": "pathloss", "distance": 100}, "reciprocal": True},
    "phy": {"model": "conflict", "secondary_interference": True},
}

_SCENARIOS = {
    # source 1 reaches sink 3 directly (weak) or through relay 2
    "relay3": {
        "nodes": [1, 2, 3],
        "positions": {"1": [0, 0], "2": [40, 10], "3": [80, 0]},
        "topology": {"neighbors": {"1": [2, 3], "2": [1, 3], "3": [1, 2]}},
        "hyperarcs": "all-subsets",
        "sessions": [{"source": 1, "sinks": [3]}],
        "solver": {"mode": "sync", "stepsize": 0.1, "iterations": 20000, "mc_slots": 1,
                   "seed": 1, "cadence": 100, "dual_slots": 1},
    },
    # one link, one session
    "link2": {
        "nodes": [1, 2],
        "positions": {"1": [0, 0], "2": [40, 0]},
        "topology": {"neighbors": {"1": [2], "2": [1]}},
        "hyperarcs": "all-subsets",
        "sessions": [{"source": 1, "sinks": [2]}],
        "solver": {"mode": "sync", "stepsize": 0.1, "iterations": 20000, "mc_slots": 1,
                   "seed": 1, "cadence": 100, "dual_slots": 1},
    },
    # source 1, two symmetric relays 2 and 3, sink 4; no direct link
    "diamond4": {
        "nodes": [1, 2, 3, 4],
        "positions": {"1": [0, 0], "2": [40, 30], "3": [40, -30], "4": [80, 0]},
        "topology": {"neighbors": {"1": [2, 3], "2": [1, 4], "3": [1, 4], "4": [2, 3]}},
        "hyperarcs": "point-to-point",
        "sessions": [{"source": 1, "sinks": [4]}],
        "solver": {"mode": "sync", "stepsize": 0.1, "iterations": 20000, "mc_slots": 1,
                   "seed": 1, "cadence": 100, "dual_slots": 1},
    },
}


def names() -> list[str]:
    return sorted(_SCENARIOS)


def scenario_dict(name: str) -> dict:
    """Full scenario document for a built-in instance."""
    try:
        own = _SCENARIOS[name]
    except KeyError:
        raise KeyError(f"unknown built-in scenario {name!r}; choose from {names()}") from None
    out = copy.deepcopy(_COMMON)
    out.update(copy.deepcopy(own))
    out["name"] = name
    return out
