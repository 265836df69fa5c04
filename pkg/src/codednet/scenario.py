"""Scenario files: JSON schema, loading, and assembly of model, channel, phy and solver settings."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from . import channel as ch
from .curves import cost_from_dict, utility_from_dict
from .model import (DEFAULT_MAX_DEGREE, BoxBounds, NetworkModel, ScenarioError, Session,
                    make_model, nonempty_subsets)
from .phy import PhyConfig
from .solver import SolverConfig

SCHEMA_PATH = Path(__file__).with_name("scenario.schema.json")


def _schema() -> dict:
    with open(SCHEMA_PATH) as fh:
        return json.load(fh)


@dataclass
class ScenarioConfig:
    """A validated scenario document (the parsed JSON) and where it came from."""

    raw: dict
    source: str | None = None

    @classmethod
    def from_dict(cls, raw: dict, source: str | None = None) -> "ScenarioConfig":
        validate(raw)
        return cls(copy.deepcopy(raw), source)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ScenarioError(f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(raw, str(path))


def validate(raw: dict) -> None:
    errors = sorted(Draft202012Validator(_schema()).iter_errors(raw), key=lambda e: list(e.path))
    if errors:
        msgs = [f"{'/'.join(str(p) for p in e.path) or '<root>'}: {e.message}" for e in errors]
        raise ScenarioError("scenario failed schema validation:\n  " + "\n  ".join(msgs))


@dataclass(eq=False)
class Scenario:
    model: NetworkModel
    channel: ch.ChannelModel
    phy: PhyConfig
    solver: SolverConfig
    config: ScenarioConfig


def _labels_to_idx(labels, nodes):
    pos = {lab: k for k, lab in enumerate(nodes)}
    try:
        return [pos[v] for v in labels]
    except KeyError as exc:
        raise ScenarioError(f"unknown node {exc.args[0]!r}") from None


def _per(value, size, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(size, float(arr))
    if arr.shape != (size,):
        raise ScenarioError(f"{name} must be a scalar or a list of length {size}")
    return arr


def _topology(raw, nodes, positions):
    n = len(nodes)
    topo = raw.get("topology", {})
    declared = None
    if "neighbors" in topo:
        declared = [set() for _ in range(n)]
        for lab, nb in topo["neighbors"].items():
            i = _labels_to_idx([_coerce(lab, nodes)], nodes)[0]
            declared[i] = set(_labels_to_idx(nb, nodes))
    elif "neighbor_radius" in topo:
        r = float(topo["neighbor_radius"])
        d = np.linalg.norm(positions[:, None] - positions[None, :], axis=2)
        declared = [set(int(j) for j in np.flatnonzero((d[i] <= r) & (np.arange(n) != i))) for i in range(n)]

    spec = raw.get("hyperarcs", "all-subsets")
    if isinstance(spec, list):
        hyperarcs = [(_labels_to_idx([h[0]], nodes)[0], _labels_to_idx(h[1], nodes)) for h in spec]
        return hyperarcs, declared
    if declared is None:
        raise ScenarioError("hyperarc mode %r needs topology.neighbors or topology.neighbor_radius" % spec)
    if spec == "all-subsets":
        hyperarcs = [(i, list(J)) for i in range(n) for J in nonempty_subsets(declared[i])]
    else:
        hyperarcs = [(i, [j]) for i in range(n) for j in sorted(declared[i])]
    return hyperarcs, declared


def _coerce(label, nodes):
    # JSON object keys are strings; map them back onto integer labels when needed
    if label in nodes:
        return label
    try:
        as_int = int(label)
    except (TypeError, ValueError):
        return label
    return as_int if as_int in nodes else label


def _channel(raw, positions, links, tones, rho) -> ch.ChannelModel:
    c = raw.get("channel", {})
    pl = c.get("pathloss", {})
    noise = c.get("noise", {"rule": "pathloss", "distance": 100.0})
    params = {}
    kind = c.get("distribution", "exponential")
    if kind == "rician":
        params["rician_k"] = float(c.get("rician_k", 1.0))
    elif kind == "nakagami":
        params["nakagami_m"] = float(c.get("nakagami_m", 1.0))
    elif kind == "table":
        params["atoms"] = tuple(float(v) for v in c["atoms"])
        params["probs"] = tuple(float(v) for v in c.get("probs", [1.0 / len(c["atoms"])] * len(c["atoms"])))
    return ch.from_positions(
        positions, links, tones, kind,
        scale=float(pl.get("scale", 0.1)), d0=float(pl.get("d0", 20.0)),
        exponent=float(pl.get("exponent", 2.0)),
        noise=noise.get("value") if noise.get("rule") == "value" else None,
        noise_distance=float(noise.get("distance", 100.0)),
        reciprocal=bool(c.get("reciprocal", True)), **params)


def _bounds(raw, hyperarcs, arcs, n, sessions, tones, channel, rho):
    b = raw.get("bounds", {})
    M, K = len(sessions), len(hyperarcs)
    a_min = _per(b.get("a_min", 1e-4), M, "a_min")
    a_max = _per(b.get("a_max", 5.0), M, "a_max")
    p_max = _per(b.get("p_node_max", 5.0), n, "p_node_max")
    p_tone = _per(b.get("p_tone_max", 5.0), tones, "p_tone_max")

    cm = b.get("c_max", "waterfill")
    if cm == "waterfill":
        link_cap, solved = {}, {}
        for i, J in hyperarcs:
            for j in J:
                key = (tuple(channel.mean[i, j, :]), channel.noise[j], p_max[i])
                if key not in solved:
                    solved[key], _ = ch.ergodic_waterfill(
                        channel, channel.mean[i, j, :], channel.noise[j], p_max[i], p_tone, rho)
                link_cap[(i, j)] = solved[key]
        c_max = np.array([min(link_cap[(i, j)] for j in J) for i, J in hyperarcs])
    else:
        c_max = _per(cm, K, "c_max")

    zm = b.get("z_max", "half_c_max")
    z_max = c_max / 2.0 if zm == "half_c_max" else _per(zm, K, "z_max")
    xm = b.get("x_max", "half_z_max")
    if xm == "half_z_max":
        x_max = np.array([max(z_max[k] for k, (s, J) in enumerate(hyperarcs) if s == i and j in J) / 2.0
                          for i, j in arcs])
    else:
        x_max = _per(xm, len(arcs), "x_max")
    return BoxBounds(a_min, a_max, z_max, x_max, c_max, p_max, p_tone)


def build_scenario(config: ScenarioConfig | dict) -> Scenario:
    """Assemble a :class:`Scenario` from a scenario document."""
    if isinstance(config, dict):
        config = ScenarioConfig.from_dict(config)
    raw = config.raw
    nodes = tuple(raw["nodes"])
    n = len(nodes)
    pos_raw = raw.get("positions")
    if pos_raw is None:
        positions = np.zeros((n, 2))
    elif isinstance(pos_raw, dict):
        positions = np.array([pos_raw[str(v)] if str(v) in pos_raw else pos_raw[v] for v in nodes], dtype=float)
    else:
        positions = np.asarray(pos_raw, dtype=float)
    if positions.shape != (n, 2):
        raise ScenarioError("positions must give one (x, y) pair per node")

    hyperarcs, declared = _topology(raw, nodes, positions)
    sessions = []
    for s in raw["sessions"]:
        src = _labels_to_idx([s["source"]], nodes)[0]
        sessions.append(Session(src, tuple(sorted(_labels_to_idx(s["sinks"], nodes)))))
    tones = int(raw.get("tones", 1))

    phy_raw = raw.get("phy", {})
    phy = PhyConfig(model=phy_raw.get("model", "conflict"),
                    secondary=bool(phy_raw.get("secondary_interference", True)),
                    rho=float(phy_raw.get("snr_penalty", 1.0)),
                    beta=float(phy_raw.get("beta", 1e3)),
                    self_gain=float(phy_raw.get("self_gain", 1e3)),
                    max_matchings=int(phy_raw.get("max_matchings", 10**6)),
                    sinr_starts=int(phy_raw.get("sinr_starts", 8)),
                    sinr_sweeps=int(phy_raw.get("sinr_sweeps", 200)),
                    sinr_seed=int(phy_raw.get("sinr_seed", 0)))

    # provisional model: validates topology and yields the arc list for the bounds
    max_degree = int(raw.get("max_degree", DEFAULT_MAX_DEGREE))
    probe = _probe_arcs(hyperarcs, n, declared, max_degree, nodes)
    links = np.zeros((n, n), dtype=bool)
    for i, j in probe:
        links[i, j] = True
    channel = _channel(raw, positions, links, tones, phy.rho)
    sorted_h = sorted(((i, tuple(sorted(set(J)))) for i, J in hyperarcs),
                      key=lambda h: (h[0], len(h[1]), h[1]))
    bounds = _bounds(raw, sorted_h, probe, n, sessions, tones, channel, phy.rho)
    model = make_model(nodes, sorted_h, sessions, tones, bounds, positions=positions,
                       utility=utility_from_dict(raw.get("utility", {"kind": "log"})),
                       cost=cost_from_dict(raw.get("cost", {"kind": "quadratic", "coef": 10.0})),
                       neighbors=declared if isinstance(raw.get("hyperarcs"), list) else None,
                       max_degree=max_degree)

    known = {f.name for f in fields(SolverConfig)}
    solver = SolverConfig(**{k: v for k, v in raw.get("solver", {}).items() if k in known})
    return Scenario(model, channel, phy, solver, config)


def _probe_arcs(hyperarcs, n, declared, max_degree, nodes):
    derived = [set() for _ in range(n)]
    for i, J in hyperarcs:
        if len(J) == 0 or i in J:
            raise ScenarioError(f"invalid hyperarc from node {nodes[i]!r}")
        derived[i].update(J)
    for i, nb in enumerate(derived):
        if len(nb) > max_degree:
            from .model import DegreeTooLargeError
            raise DegreeTooLargeError(f"degree too large: node {nodes[i]!r} has {len(nb)} neighbors "
                                      f"(subset enumeration cap is {max_degree})")
    return sorted((i, j) for i in range(n) for j in derived[i])


def load_scenario(path) -> Scenario:
    return build_scenario(ScenarioConfig.load(path))
