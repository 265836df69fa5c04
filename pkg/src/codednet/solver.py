"""Synchronous and asynchronous dual subgradient solvers with primal running averages.

Both solvers draw slot ``l`` (1-based) channel realizations from generators
keyed by ``(seed, 0, l - 1)``; dual-function estimates use one fixed batch from
stream ``(seed, 1, .)`` so successive estimates share random numbers.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .channel import ChannelModel, ChannelStream, sample_batch
from .dual import assemble_subgradient, dual_value_estimate, subgradient_bounds, update_multipliers
from .model import NetworkModel, PrimalVector, constraint_vector
from .phy import PhyLayer
from .subproblems import DualVector, solve_network

TRACE_COLUMNS = ("iter", "f_avg", "dual_est", "best_dual", "viol_norm", "zeta_norm", "wall_ms")


@dataclass(frozen=True)
class SolverConfig:
    mode: str = "async"
    stepsize: float = 0.15
    iterations: int = 5000
    window: int = 50            # async averaging window S
    mc_slots: int = 50          # sync Monte Carlo slots per iteration
    seed: int = 7
    cadence: int = 50           # dual-value evaluation period
    dual_slots: int = 200       # Monte Carlo slots per dual-value estimate
    burn_in: int = 0            # iterations excluded from running averages
    delay_free: bool = False    # test hook: async with zero physical-layer delay
    timing: bool = False        # fill the wall_ms trace column

    def __post_init__(self):
        if self.mode not in ("sync", "async"):
            raise ValueError(f"unknown solver mode {self.mode!r}")
        if not self.stepsize > 0:
            raise ValueError("stepsize must be positive")
        if self.iterations < 1 or self.window < 1 or self.mc_slots < 1:
            raise ValueError("iterations, window and mc_slots must be >= 1")
        if self.cadence < 1 or self.dual_slots < 1:
            raise ValueError("cadence and dual_slots must be >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must lie in [0, iterations)")

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


def tau(l: int, S: int) -> int:
    """Start of the most recent completed averaging window at iteration ``l``."""
    if l < 1 or S < 1:
        raise ValueError("tau needs l >= 1 and S >= 1")
    return max(S * ((l - S - 1) // S) + 1, 1)


class RunningAverage:
    """Incremental mean ``avg(s) = ((s - 1) avg(s - 1) + v(s)) / s``."""

    def __init__(self):
        self.count = 0
        self.value = None

    def update(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        self.count += 1
        if self.value is None:
            self.value = v.copy()
        else:
            s = self.count
            self.value = ((s - 1) * self.value + v) / s
        return self.value


def running_average(state: RunningAverage, y) -> np.ndarray:
    return state.update(y)


@dataclass(eq=False)
class SolverTrace:
    """Per-iteration diagnostics plus the final averaged operating point."""

    iters: np.ndarray
    f_avg: np.ndarray
    dual_est: np.ndarray        # NaN where not evaluated
    dual_se: np.ndarray
    best_dual: np.ndarray       # NaN before the first evaluation
    viol_norm: np.ndarray
    zeta_norm: np.ndarray
    grad_norm: np.ndarray
    wall_ms: np.ndarray
    y_avg: PrimalVector
    c_avg: np.ndarray
    p_avg: np.ndarray
    zeta: DualVector
    meta: dict = field(default_factory=dict)

    def terminal_gap(self) -> float:
        return float(self.best_dual[-1] - self.f_avg[-1])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)

        def fmt(v):
            return "" if v is None or not math.isfinite(v) else repr(float(v))

        for r in range(len(self.iters)):
            w.writerow([int(self.iters[r]), fmt(self.f_avg[r]), fmt(self.dual_est[r]),
                        fmt(self.best_dual[r]), fmt(self.viol_norm[r]), fmt(self.zeta_norm[r]),
                        fmt(self.wall_ms[r])])
        return buf.getvalue()


class _Recorder:
    def __init__(self, model, layer, config, dual_gains):
        N = config.iterations
        self.model, self.layer, self.config = model, layer, config
        self.dual_gains = dual_gains
        self.cols = {k: np.full(N, np.nan) for k in
                     ("f_avg", "dual_est", "dual_se", "best_dual", "viol_norm", "zeta_norm", "grad_norm", "wall_ms")}
        self.y_avg = RunningAverage()
        self.c_avg = RunningAverage()
        self.p_avg = RunningAverage()
        self.best = np.inf
        self.t0 = time.perf_counter()

    def record(self, l, zeta, y, g, c_slot, p_slot):
        cfg, model = self.config, self.model
        r = l - 1
        if l > cfg.burn_in:
            self.y_avg.update(y.flat())
            self.c_avg.update(c_slot)
            self.p_avg.update(p_slot)
        if self.y_avg.value is not None:
            ybar = PrimalVector.from_flat(model, self.y_avg.value)
            self.cols["f_avg"][r] = model.objective(ybar.a, ybar.p)
            q = constraint_vector(model, ybar, self.c_avg.value, self.p_avg.value)
            self.cols["viol_norm"][r] = np.linalg.norm(np.maximum(q, 0.0))
        if (l - 1) % cfg.cadence == 0 or l == cfg.iterations:
            est = dual_value_estimate(model, self.layer, zeta, gains=self.dual_gains)
            self.cols["dual_est"][r] = est.value
            self.cols["dual_se"][r] = est.stderr
            self.best = min(self.best, est.value)
        if math.isfinite(self.best):
            self.cols["best_dual"][r] = self.best
        self.cols["zeta_norm"][r] = np.linalg.norm(zeta.flat())
        self.cols["grad_norm"][r] = np.linalg.norm(g)
        if cfg.timing:
            self.cols["wall_ms"][r] = 1e3 * (time.perf_counter() - self.t0)

    def finish(self, zeta, meta) -> SolverTrace:
        N = self.config.iterations
        ybar = PrimalVector.from_flat(self.model, self.y_avg.value)
        meta = dict(meta)
        meta["grad_norm_max"] = float(np.nanmax(self.cols["grad_norm"]))
        return SolverTrace(
            iters=np.arange(1, N + 1), y_avg=ybar, c_avg=self.c_avg.value, p_avg=self.p_avg.value,
            zeta=zeta, meta=meta, **self.cols)


def _meta(model, channel, layer, config, G, G_bar):
    D = 0 if (config.mode == "sync" or config.delay_free) else 2 * config.window - 1
    return {"seed": config.seed, "config_hash": config.digest(), "config": asdict(config),
            "G": G, "G_bar": G_bar, "max_delay": D,
            "sync_band": config.stepsize * G * G / 2.0,
            "async_band": config.stepsize * G * G / 2.0 + 2 * config.stepsize * D * G_bar * G,
            "phy_model": layer.config.model, "secondary": layer.config.secondary,
            "matchings": None if layer.matchings is None else len(layer.matchings),
            "channel": channel.kind, "continuous_fading": channel.is_continuous,
            "constraints": model.index.size}


def _slot_gains(channel, seed, l, count):
    # slot l (1-based) of stream 0
    return sample_batch(channel, np.random.default_rng([seed, 0, l - 1]), count)


def _dual_gains(channel, config):
    return ChannelStream(channel, config.seed, stream=1).batch(0, config.dual_slots)


def run_sync(model: NetworkModel, channel: ChannelModel, layer: PhyLayer,
             config: SolverConfig) -> SolverTrace:
    """Synchronous subgradient method with fresh Monte Carlo expectations each iteration."""
    G, G_bar = subgradient_bounds(model, channel, layer)
    rec = _Recorder(model, layer, config, _dual_gains(channel, config))
    zeta = DualVector.zeros(model)
    for l in range(1, config.iterations + 1):
        y = solve_network(model, zeta)
        gains = _slot_gains(channel, config.seed, l, config.mc_slots)
        cap, pw, _ = layer.solve_batch(zeta.lam, zeta.mu, gains)
        c_hat, p_hat = cap.mean(axis=0), pw.mean(axis=0)
        g = assemble_subgradient(model, y, c_hat, p_hat)
        rec.record(l, zeta, y, g, c_hat, p_hat)
        zeta = update_multipliers(zeta, g, config.stepsize)
    return rec.finish(zeta, _meta(model, channel, layer, config, G, G_bar))


def run_async(model: NetworkModel, channel: ChannelModel, layer: PhyLayer,
              config: SolverConfig) -> SolverTrace:
    """Asynchronous subgradient method driven by one channel realization per slot.

    Slots are grouped into windows of ``S`` starting at ``1, S+1, 2S+1, ...``.
    Within a window the power allocation uses the multipliers held at the
    window start; when the window closes its averages become the capacity and
    power estimates used by the capacity/power multiplier updates until the
    next window closes (a delay between ``S`` and ``2S - 1`` slots). Until the
    first window closes the estimates are zero.
    """
    S = config.window
    G, G_bar = subgradient_bounds(model, channel, layer)
    rec = _Recorder(model, layer, config, _dual_gains(channel, config))
    zeta = DualVector.zeros(model)
    c_hat = np.zeros(model.n_hyperarcs)
    p_hat = np.zeros(model.n_nodes)
    acc_c = np.zeros(model.n_hyperarcs)
    acc_p = np.zeros(model.n_nodes)
    held = zeta.copy()
    for l in range(1, config.iterations + 1):
        if not config.delay_free and (l - 1) % S == 0:
            if l - tau(l, S) == S:
                c_hat, p_hat = acc_c / S, acc_p / S
            acc_c = np.zeros_like(acc_c)
            acc_p = np.zeros_like(acc_p)
            held = zeta.copy()
        y = solve_network(model, zeta)
        gains = _slot_gains(channel, config.seed, l, 1)
        ref = zeta if config.delay_free else held
        cap, pw, _ = layer.solve_batch(ref.lam, ref.mu, gains)
        cap, pw = cap[0], pw[0]
        acc_c += cap
        acc_p += pw
        if config.delay_free:
            c_hat, p_hat = cap, pw
        g = assemble_subgradient(model, y, c_hat, p_hat)
        rec.record(l, zeta, y, g, cap, pw)
        zeta = update_multipliers(zeta, g, config.stepsize)
    return rec.finish(zeta, _meta(model, channel, layer, config, G, G_bar))


def run(model, channel, layer, config: SolverConfig) -> SolverTrace:
    return run_sync(model, channel, layer, config) if config.mode == "sync" else \
        run_async(model, channel, layer, config)
