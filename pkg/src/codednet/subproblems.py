"""Closed-form maximizers of the per-layer Lagrangian subproblems.

The scalar solvers (``solve_rate`` ... ``solve_node_power``) enumerate the
multipliers that touch one variable and are meant for inspection and testing.
:func:`solve_network` computes every network-layer variable at once from the
transposed constraint operator; the two routes must agree.

Ties on a zero coefficient resolve to the lower box end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import NetworkModel, PrimalVector, constraint_operator

BLOCKS = ("nu", "eta", "xi", "lam", "mu")


@dataclass(eq=False)
class DualVector:
    """Lagrange multipliers, one block per constraint family (see :mod:`codednet.model`)."""

    nu: np.ndarray
    eta: np.ndarray
    xi: np.ndarray
    lam: np.ndarray
    mu: np.ndarray

    @classmethod
    def zeros(cls, model: NetworkModel) -> "DualVector":
        s = model.index.sizes
        return cls(*(np.zeros(s[b]) for b in BLOCKS))

    @classmethod
    def from_flat(cls, model: NetworkModel, vec) -> "DualVector":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (model.index.size,):
            raise ValueError(f"dual vector has length {vec.size}, expected {model.index.size}")
        sl = model.index.slices
        return cls(*(vec[sl[b]].copy() for b in BLOCKS))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.nu, self.eta, self.xi, self.lam, self.mu])

    def copy(self) -> "DualVector":
        return DualVector(*(getattr(self, b).copy() for b in BLOCKS))

    def check(self, model: NetworkModel) -> None:
        sizes = model.index.sizes
        for b in BLOCKS:
            v = getattr(self, b)
            if v.shape != (sizes[b],):
                raise ValueError(f"multiplier block {b} has shape {v.shape}, expected ({sizes[b]},)")
            if np.any(v < 0):
                raise ValueError(f"multiplier block {b} has negative entries")


def _lookups(model: NetworkModel):
    cached = getattr(model, "_dual_lookups", None)
    if cached is None:
        idx = model.index
        flow_pos = {key: r for r, key in enumerate(idx.flow)}
        subset_pos = {key: r for r, key in enumerate(idx.subset_rows)}
        cached = (flow_pos, subset_pos)
        object.__setattr__(model, "_dual_lookups", cached)
    return cached


def _nu(model, zeta, pair, i):
    flow_pos, _ = _lookups(model)
    return zeta.nu[flow_pos[(pair, i)]]


def _pairs_of(model, m):
    return [p for p, (mm, _) in enumerate(model.pairs) if mm == m]


def rate_price(model: NetworkModel, m: int, zeta: DualVector) -> float:
    """``sum_{t in T^m} nu^{mt}`` at the session source."""
    s = model.sessions[m].source
    return float(sum(_nu(model, zeta, p, s) for p in _pairs_of(model, m)))


def solve_rate(model: NetworkModel, m: int, zeta: DualVector) -> float:
    """Session rate maximizing ``U(a) - price * a`` on ``[a_min, a_max]``."""
    b = model.bounds
    return model.utility.argmax_linear(rate_price(model, m, zeta), float(b.a_min[m]), float(b.a_max[m]))


def broadcast_coefficient(model: NetworkModel, k: int, m: int, zeta: DualVector) -> float:
    _, subset_pos = _lookups(model)
    i, J = model.hyperarcs[k]
    J = set(J)
    total = 0.0
    for kk, K in enumerate(model.index.subsets[i]):
        if J & set(K):
            for p in _pairs_of(model, m):
                total += zeta.eta[subset_pos[(p, i, kk)]]
    return total - float(zeta.xi[k])


def solve_broadcast_flow(model: NetworkModel, k: int, m: int, zeta: DualVector) -> float:
    """Broadcast flow of session ``m`` on hyperarc ``k``: ``z_max`` if its price is positive, else 0."""
    return float(model.bounds.z_max[k]) if broadcast_coefficient(model, k, m, zeta) > 0 else 0.0


def virtual_coefficient(model: NetworkModel, e: int, pair: int, zeta: DualVector) -> float:
    _, subset_pos = _lookups(model)
    i, j = model.arcs[e]
    _, t = model.pairs[pair]
    coef = 0.0
    if i != t:
        coef += _nu(model, zeta, pair, i)
    if j != t:
        coef -= _nu(model, zeta, pair, j)
    for kk, K in enumerate(model.index.subsets[i]):
        if j in K:
            coef -= zeta.eta[subset_pos[(pair, i, kk)]]
    return float(coef)


def solve_virtual_flow(model: NetworkModel, e: int, pair: int, zeta: DualVector) -> float:
    """Virtual flow on arc ``e`` for session/sink pair ``pair`` (bang-bang on its coefficient)."""
    return float(model.bounds.x_max[e]) if virtual_coefficient(model, e, pair, zeta) > 0 else 0.0


def solve_capacity(model: NetworkModel, k: int, zeta: DualVector) -> float:
    return float(model.bounds.c_max[k]) if zeta.xi[k] > zeta.lam[k] else 0.0


def solve_node_power(model: NetworkModel, i: int, zeta: DualVector) -> float:
    """Node power maximizing ``mu_i p - V(p)`` on ``[0, p_max]``."""
    return model.cost.argmax_linear(float(zeta.mu[i]), float(model.bounds.p_max[i]))


def linear_prices(model: NetworkModel, zeta: DualVector) -> PrimalVector:
    """Coefficients of the primal variables in ``-zeta^T A y`` (the linear part of the Lagrangian)."""
    A = constraint_operator(model)
    return PrimalVector.from_flat(model, -(A.T @ zeta.flat()))


def solve_network(model: NetworkModel, zeta: DualVector) -> PrimalVector:
    """All five network-layer subproblems at once."""
    b = model.bounds
    price = linear_prices(model, zeta)
    a = np.array([model.utility.argmax_linear(-price.a[m], b.a_min[m], b.a_max[m])
                  for m in range(model.n_sessions)])
    z = np.where(price.z > 0, b.z_max[:, None], 0.0)
    x = np.where(price.x > 0, b.x_max[:, None], 0.0)
    c = np.where(price.c > 0, b.c_max, 0.0)
    p = np.array([model.cost.argmax_linear(price.p[i], b.p_max[i]) for i in range(model.n_nodes)])
    return PrimalVector(a, z, x, c, p)


def network_lagrangian(model: NetworkModel, zeta: DualVector, y: PrimalVector) -> float:
    """``f(y) - zeta^T A y``: the Lagrangian without the physical-layer terms."""
    price = linear_prices(model, zeta)
    return model.objective(y.a, y.p) + float(price.flat() @ y.flat())
