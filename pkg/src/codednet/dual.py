"""Dual updates, Monte Carlo expectation estimates and dual function evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelModel, sample_batch
from .model import NetworkModel, PrimalVector, constraint_vector
from .phy import PhyLayer
from .subproblems import DualVector, network_lagrangian, solve_network


def assemble_subgradient(model: NetworkModel, y: PrimalVector, cbar, pbar) -> np.ndarray:
    """Subgradient of the dual function: the constraint vector at the primal maximizer.

    The capacity/power blocks take whatever expectation estimates the caller
    supplies, which is how stale window averages enter the asynchronous method.
    """
    return constraint_vector(model, y, cbar, pbar)


def update_multipliers(zeta: DualVector, g, step: float) -> DualVector:
    """Projected step ``max(0, zeta + step * g)``."""
    if step <= 0:
        raise ValueError("stepsize must be positive")
    flat = zeta.flat()
    g = np.asarray(g, dtype=float)
    if g.shape != flat.shape:
        raise ValueError("subgradient dimension mismatch")
    out = np.maximum(flat + step * g, 0.0)
    sizes = [zeta.nu.size, zeta.eta.size, zeta.xi.size, zeta.lam.size]
    return DualVector(*np.split(out, np.cumsum(sizes)))


def _gains(channel, slots, rng, gains):
    if gains is not None:
        return np.asarray(gains, dtype=float)
    if slots < 1:
        raise ValueError("need at least one Monte Carlo slot")
    if isinstance(rng, np.random.Generator):
        return sample_batch(channel, rng, slots)
    return rng.batch(0, slots)


def estimate_expectations(layer: PhyLayer, zeta: DualVector, channel: ChannelModel | None = None,
                          slots: int = 1, rng=None, gains=None):
    """Sample averages of per-slot capacity and power at fixed multipliers.

    Either pass pre-drawn ``gains`` (shape (S, n, n, F)) or a ``channel`` and an
    ``rng`` (a numpy Generator, or a :class:`~codednet.channel.ChannelStream`).

    Returns
    -------
    c_hat : ndarray (K,)
        ``(1/S) sum_slots sum_f C^f_iJ``.
    p_hat : ndarray (n,)
        ``(1/S) sum_slots sum_{f,J} p^f_iJ``.
    """
    g = _gains(channel, slots, rng, gains)
    cap, pw, _ = layer.solve_batch(zeta.lam, zeta.mu, g)
    return cap.mean(axis=0), pw.mean(axis=0)


@dataclass
class DualEstimate:
    value: float
    stderr: float
    network: float
    phy_mean: float


def dual_value_estimate(model: NetworkModel, layer: PhyLayer, zeta: DualVector,
                        channel: ChannelModel | None = None, slots: int = 1, rng=None,
                        gains=None) -> DualEstimate:
    """Monte Carlo estimate of the dual function.

    The network-layer part is exact; the physical-layer part is the sample mean
    of the per-slot optimum, whose standard error is reported.
    """
    y = solve_network(model, zeta)
    net = network_lagrangian(model, zeta, y)
    g = _gains(channel, slots, rng, gains)
    _, _, obj = layer.solve_batch(zeta.lam, zeta.mu, g)
    se = float(obj.std(ddof=1) / np.sqrt(len(obj))) if len(obj) > 1 else 0.0
    phy = float(obj.mean())
    return DualEstimate(net + phy, se, net, phy)


def expectation_bounds(model: NetworkModel, channel: ChannelModel, layer: PhyLayer):
    """Per-entry upper bounds on the expected capacity and power terms.

    Capacities use Jensen's inequality at full mask power on the worst
    receiver's mean gain; powers assume every hyperarc a node may activate in
    one slot is at full mask.
    """
    F_mask = float(model.bounds.p_tone_max.sum())
    rho = layer.config.rho
    cap = np.zeros(model.n_hyperarcs)
    for k, (i, J) in enumerate(model.hyperarcs):
        J = list(J)
        g = channel.mean[i, J, :] / (rho * channel.noise[J, None])          # (|J|, F)
        cap[k] = np.sum(np.log2(1.0 + model.bounds.p_tone_max * g.min(axis=0)))
    per_node = np.zeros(model.n_nodes)
    for i in range(model.n_nodes):
        arcs = len(model.hyperarcs_from(i))
        active = min(arcs, 1) if layer.config.model == "conflict" else arcs
        per_node[i] = active * F_mask
    return cap, per_node


def subgradient_bounds(model: NetworkModel, channel: ChannelModel, layer: PhyLayer):
    """Analytic bounds ``(G, G_bar)`` on the subgradient norm and on the expectation block."""
    b = model.bounds
    idx = model.index
    cap_bound, pow_bound = expectation_bounds(model, channel, layer)
    n = model.n_nodes
    out_x = np.zeros(n)
    in_x = np.zeros(n)
    for e, (u, v) in enumerate(model.arcs):
        out_x[u] += b.x_max[e]
        in_x[v] += b.x_max[e]
    ent = []
    for p, i in idx.flow:
        m, _ = idx.pairs[p]
        sigma = b.a_max[m] if model.sessions[m].source == i else 0.0
        ent.append(max(sigma + in_x[i], out_x[i]))
    for p, i, kk in idx.subset_rows:
        K = set(idx.subsets[i][kk])
        xs = sum(b.x_max[model.arc_index(i, j)] for j in K)
        zs = sum(b.z_max[k] for k in model.hyperarcs_from(i) if K & set(model.hyperarcs[k][1]))
        ent.append(max(xs, zs))
    ent.extend(np.maximum(model.n_sessions * b.z_max, b.c_max))
    ent.extend(np.maximum(b.c_max, cap_bound))
    ent.extend(np.maximum(b.p_max, pow_bound))
    G = float(np.linalg.norm(ent))
    G_bar = float(np.sqrt(np.sum(cap_bound ** 2) + np.sum(pow_bound ** 2)))
    return G, G_bar
