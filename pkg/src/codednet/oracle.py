"""Independent brute-force references used to cross-check the fast solvers.

Nothing here is used by the solvers themselves. The routines re-derive their
answers from first principles (exhaustive scans, subset filters, a generic
convex solver) so that agreement is meaningful.
"""

from __future__ import annotations

import itertools
import math
import warnings

import numpy as np

from .channel import ChannelModel
from .model import NetworkModel
from .phy import PhyConfig

BRUTE_MAX_HYPERARCS = 20
ORACLE_MAX_NODES = 4
ORACLE_TOL = 1e-3


class OracleSizeError(ValueError):
    """The instance is too large for an exhaustive oracle."""


def grid_argmax(objective, box, step: float):
    """Exhaustive scan of a scalar function on ``[lo, hi]`` with spacing ``step``.

    Both endpoints are always evaluated. ``objective`` may be vectorized; if it
    is not, it is called point by point.

    Returns
    -------
    x_best, f_best : float
    """
    if not step > 0:
        raise ValueError("step must be positive")
    lo, hi = float(box[0]), float(box[1])
    if hi < lo:
        raise ValueError("empty box")
    n = int(math.floor((hi - lo) / step)) + 1
    grid = lo + step * np.arange(n)
    grid = np.unique(np.append(grid[grid <= hi], hi))
    try:
        vals = np.asarray(objective(grid), dtype=float)
        if vals.shape != grid.shape:
            raise ValueError
    except (TypeError, ValueError):
        vals = np.array([float(objective(float(v))) for v in grid])
    vals = np.where(np.isnan(vals), -np.inf, vals)
    r = int(np.argmax(vals))
    return float(grid[r]), float(vals[r])


# --- matchings -------------------------------------------------------------

def _conflict(model: NetworkModel, a, b, secondary: bool) -> bool:
    (i1, J1), (i2, J2) = model.hyperarcs[a], model.hyperarcs[b]
    J1, J2 = set(J1), set(J2)
    nb1 = {j for s, J in model.hyperarcs if s == i1 for j in J}
    nb2 = {j for s, J in model.hyperarcs if s == i2 for j in J}
    rules = [i1 == i2, i1 in J2 or i2 in J1, bool(J1 & J2)]
    if secondary:
        rules.append(bool(J1 & nb2) or bool(J2 & nb1))
    return any(rules)


def brute_matchings(model: NetworkModel, secondary: bool = True) -> list[tuple]:
    """Maximal conflict-free hyperarc sets by filtering every subset of ``A``.

    Returns sorted index tuples in lexicographic order. Refuses networks with
    more than 20 hyperarcs.
    """
    K = model.n_hyperarcs
    if K > BRUTE_MAX_HYPERARCS:
        raise OracleSizeError(f"brute-force matching oracle refuses {K} > {BRUTE_MAX_HYPERARCS} hyperarcs")
    if K == 0:
        return []
    clash = [0] * K
    for a in range(K):
        for b in range(K):
            if a != b and _conflict(model, a, b, secondary):
                clash[a] |= 1 << b
    free = []
    for mask in range(1 << K):
        ok = True
        for a in range(K):
            if mask >> a & 1 and clash[a] & mask:
                ok = False
                break
        if ok:
            free.append(mask)
    free_set = set(free)
    out = []
    for mask in free:
        if all(mask >> a & 1 or (mask | 1 << a) not in free_set for a in range(K)):
            out.append(tuple(a for a in range(K) if mask >> a & 1))
    return sorted(out)


# --- deterministic-channel optimum ------------------------------------------

def _point_gains(channel: ChannelModel) -> np.ndarray:
    if channel.kind != "table" or len(channel.atoms) != 1:
        raise ValueError("the deterministic oracle needs a point-mass channel (table with one atom)")
    return channel.mean * channel.atoms[0]


def deterministic_gap_oracle(model: NetworkModel, channel: ChannelModel, phy: PhyConfig | None = None,
                             solver: str | None = None):
    """Optimal network utility for a point-mass channel.

    With a single channel state, any stationary power policy is a time-sharing
    of per-matching allocations. Writing ``w_r`` for the share of matching
    ``r`` and ``q`` for the energy ``w_r * p`` spent on a (hyperarc, tone)
    in that matching, the long-term capacity ``sum_r w_r log2(1 + g q / w_r)``
    is a perspective of a concave function, so the whole cross-layer problem
    is one convex program. It is solved with cvxpy (Clarabel, falling back to
    a tight SCS solve when Clarabel flags its answer as inaccurate); the
    reported value is accurate to about 1e-3.

    Returns
    -------
    value : float
        Optimal ``sum_m U(a_m) - sum_i V(p_i)``.
    info : dict
        ``a``, ``p``, ``c``, the time-sharing weights and solver status.
    """
    import cvxpy as cp

    phy = phy or PhyConfig()
    if phy.model != "conflict":
        raise ValueError("the deterministic oracle supports the conflict-graph model only")
    if model.n_nodes > ORACLE_MAX_NODES:
        raise OracleSizeError(f"deterministic oracle is limited to {ORACLE_MAX_NODES} nodes")
    if model.utility.kind != "log":
        raise ValueError("the deterministic oracle supports logarithmic utilities only")
    h = _point_gains(channel)
    b = model.bounds
    n, K, F = model.n_nodes, model.n_hyperarcs, model.tones
    matchings = brute_matchings(model, phy.secondary)

    # per-(hyperarc, tone) worst-receiver gain-to-noise
    g = np.zeros((K, F))
    for k, (i, J) in enumerate(model.hyperarcs):
        g[k] = np.min(h[i, list(J), :] / (phy.rho * channel.noise[list(J), None]), axis=0)

    R = len(matchings)
    w = cp.Variable(R, nonneg=True)
    cons = [cp.sum(w) <= 1]
    cap = [0] * K
    energy = [0] * n
    for r, mt in enumerate(matchings):
        for k in mt:
            i = model.hyperarcs[k][0]
            q = cp.Variable(F, nonneg=True)
            cons.append(q <= w[r] * b.p_tone_max)
            for f in range(F):
                cap[k] = cap[k] + (-cp.rel_entr(w[r], w[r] + g[k, f] * q[f])) / math.log(2)
            energy[i] = energy[i] + cp.sum(q)

    M = model.n_sessions
    a = cp.Variable(M)
    p = cp.Variable(n)
    c = cp.Variable(K)
    z = cp.Variable((K, M))
    cons += [a >= b.a_min, a <= b.a_max, p >= 0, p <= b.p_max, c >= 0, c <= b.c_max,
             z >= 0, z <= b.z_max[:, None]]
    x = {}
    for m, s in enumerate(model.sessions):
        for t in s.sinks:
            for e, (i, j) in enumerate(model.arcs):
                v = cp.Variable(nonneg=True)
                cons.append(v <= b.x_max[e])
                x[(m, t, i, j)] = v
    for m, s in enumerate(model.sessions):
        for t in s.sinks:
            for i in range(n):
                if i == t:
                    continue
                out_f = sum(x[(m, t, i, j)] for (u, j) in model.arcs if u == i)
                in_f = sum(x[(m, t, j, i)] for (j, u) in model.arcs if u == i)
                sigma = a[m] if i == s.source else 0
                cons.append(sigma - out_f + in_f <= 0)
                nb = sorted({j for (u, j) in model.arcs if u == i})
                for size in range(1, len(nb) + 1):
                    for Ks in itertools.combinations(nb, size):
                        lhs = sum(x[(m, t, i, j)] for j in Ks)
                        rhs = sum(z[k, m] for k, (u, J) in enumerate(model.hyperarcs)
                                  if u == i and set(J) & set(Ks))
                        cons.append(lhs - rhs <= 0)
    for k in range(K):
        cons.append(cp.sum(z[k, :]) <= c[k])
        cons.append(c[k] <= cap[k])
    for i in range(n):
        cons.append(energy[i] <= p[i])

    cost = model.cost
    if cost.exponent == 1.0:
        cost_expr = cost.coef * cp.sum(p)
    else:
        cost_expr = cost.coef * cp.sum(cp.power(p, cost.exponent))
    prob = cp.Problem(cp.Maximize(cp.sum(cp.log(a)) - cost_expr), cons)
    if solver is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            prob.solve(solver="CLARABEL")
            if prob.status != "optimal":
                prob.solve(solver="SCS", eps=1e-9, max_iters=200000)
    else:
        prob.solve(solver=solver)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"oracle solve failed: {prob.status}")
    info = {"a": np.asarray(a.value), "p": np.asarray(p.value), "c": np.asarray(c.value),
            "weights": np.asarray(w.value), "matchings": matchings, "status": prob.status}
    return float(prob.value), info

