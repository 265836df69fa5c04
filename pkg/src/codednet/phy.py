"""Physical layer: hyperarc capacities, conflict-free matchings and per-slot power allocation.

Two models are supported.

``conflict``
    Only conflict-free hyperarcs may be active in a slot; the per-slot problem
    is solved exactly by waterfilling every (hyperarc, tone) and picking the
    maximal matching with the largest total weight.
``sinr``
    Every hyperarc may be active and interference enters the SINR; the per-slot
    problem is non-concave and is attacked with a seeded multistart projected
    coordinate ascent (best effort, no optimality claim).

Capacities are in bits per channel use (log base 2).
"""

from __future__ import annotations

from dataclasses import dataclass

import networkx as nx
import numpy as np
from scipy.optimize import minimize_scalar

from .curves import LN2
from .model import NetworkModel

DEFAULT_MAX_MATCHINGS = 10**6


class MatchingLimitError(RuntimeError):
    """Raised when the number of maximal matchings exceeds the configured limit."""


@dataclass(frozen=True)
class PhyConfig:
    model: str = "conflict"
    secondary: bool = True
    rho: float = 1.0            # SNR penalty, >= 1
    beta: float = 1e3           # broadcast-interference weight (sinr)
    self_gain: float = 1e3      # h_jj, self-interference gain (sinr)
    max_matchings: int = DEFAULT_MAX_MATCHINGS
    sinr_starts: int = 8
    sinr_sweeps: int = 200
    sinr_tol: float = 1e-6
    sinr_seed: int = 0

    def __post_init__(self):
        if self.model not in ("conflict", "sinr"):
            raise ValueError(f"unknown physical layer model {self.model!r}")
        if self.rho < 1.0:
            raise ValueError("SNR penalty rho must be >= 1")
        if self.max_matchings < 1:
            raise ValueError("max_matchings must be positive")


@dataclass(eq=False)
class PhyOutcome:
    """Per-slot power allocation ``(K, F)``, the capacities it yields, and its objective."""

    allocation: np.ndarray
    capacity: np.ndarray
    objective: float
    matching: int | None = None

    def node_power(self, model: NetworkModel) -> np.ndarray:
        out = np.zeros(model.n_nodes)
        np.add.at(out, [i for i, _ in model.hyperarcs], self.allocation.sum(axis=1))
        return out


# --- matchings ---------------------------------------------------------------

def compatible(model: NetworkModel, k1: int, k2: int, secondary: bool) -> bool:
    """True if hyperarcs ``k1`` and ``k2`` may be scheduled in the same slot."""
    i1, J1 = model.hyperarcs[k1]
    i2, J2 = model.hyperarcs[k2]
    J1, J2 = set(J1), set(J2)
    if i1 == i2:
        return False
    if i1 in J2 or i2 in J1:
        return False
    if J1 & J2:
        return False
    if secondary and (J1 & set(model.neighbors[i2]) or J2 & set(model.neighbors[i1])):
        return False
    return True


def enumerate_maximal_matchings(model: NetworkModel, secondary: bool = True,
                                limit: int = DEFAULT_MAX_MATCHINGS) -> list[tuple]:
    """All maximal conflict-free hyperarc sets, as sorted index tuples in lexicographic order.

    Maximal matchings are the maximal cliques of the compatibility graph.
    """
    K = model.n_hyperarcs
    g = nx.Graph()
    g.add_nodes_from(range(K))
    for k1 in range(K):
        for k2 in range(k1 + 1, K):
            if compatible(model, k1, k2, secondary):
                g.add_edge(k1, k2)
    out = []
    for clique in nx.find_cliques(g):
        out.append(tuple(sorted(clique)))
        if len(out) > limit:
            raise MatchingLimitError(f"more than {limit} maximal matchings; raise max_matchings "
                                     "or use a sparser hyperarc set")
    return sorted(out)


def dump_matchings(model: NetworkModel, matchings, path) -> None:
    with open(path, "w") as fh:
        for mt in matchings:
            parts = []
            for k in mt:
                i, J = model.hyperarcs[k]
                parts.append(f"({model.nodes[i]},{{{','.join(str(model.nodes[j]) for j in J)}}})")
            fh.write(" ".join(parts) + "\n")


# --- capacity functions -------------------------------------------------------

class _Geometry:
    """Index arrays mapping hyperarcs to transmitters and padded receiver lists."""

    def __init__(self, model: NetworkModel):
        K, n = model.n_hyperarcs, model.n_nodes
        self.src = np.array([i for i, _ in model.hyperarcs], dtype=int)
        width = max((len(J) for _, J in model.hyperarcs), default=1)
        self.recv = np.full((K, width), n, dtype=int)
        self.recv_mask = np.zeros((K, n), dtype=bool)
        for k, (_, J) in enumerate(model.hyperarcs):
            self.recv[k, :len(J)] = J
            self.recv_mask[k, list(J)] = True
        self.owner = np.zeros((n, K))
        if K:
            self.owner[self.src, np.arange(K)] = 1.0


def _geometry(model: NetworkModel) -> _Geometry:
    geo = getattr(model, "_phy_geometry", None)
    if geo is None:
        geo = _Geometry(model)
        object.__setattr__(model, "_phy_geometry", geo)
    return geo


def effective_gain(model: NetworkModel, noise, gains, rho: float = 1.0) -> np.ndarray:
    """Worst-receiver gain-to-noise ``min_{j in J} h_ij / (rho N_j)``.

    ``gains`` has shape (..., n, n, F); the result has shape (..., K, F).
    """
    geo = _geometry(model)
    gains = np.asarray(gains, dtype=float)
    eff = gains / (rho * np.asarray(noise, dtype=float))[:, None]
    pad = np.full(eff.shape[:-2] + (1, eff.shape[-1]), np.inf)
    eff = np.concatenate([eff, pad], axis=-2)
    picked = eff[..., geo.src[:, None], geo.recv, :]
    return picked.min(axis=-2)


def snr_capacities(model: NetworkModel, noise, gains, alloc, rho: float = 1.0) -> np.ndarray:
    """Interference-free capacities ``min_j log2(1 + p h_ij / (rho N_j))``, shape (K, F)."""
    return np.log2(1.0 + np.asarray(alloc) * effective_gain(model, noise, gains, rho))


def sinr_capacities(model: NetworkModel, noise, gains, alloc, rho: float = 1.0,
                    beta: float = 1e3, self_gain: float = 1e3) -> np.ndarray:
    """Capacities under the SINR model with interference, self- and broadcast-interference terms.

    Interference at receiver ``j`` counts only transmissions on hyperarcs that
    contain ``j``.
    """
    geo = _geometry(model)
    gains = np.asarray(gains, dtype=float)
    alloc = np.asarray(alloc, dtype=float)
    noise = np.asarray(noise, dtype=float)
    node_pow = geo.owner @ alloc                                    # (n, F)
    # covered[s, j, f]: power node s puts on hyperarcs that reach j
    covered = np.einsum("sk,kj,kf->sjf", geo.owner, geo.recv_mask.astype(float), alloc)
    recv_int = (covered * gains).sum(axis=0)                        # (j, F) from all transmitters
    K, F = alloc.shape
    cap = np.empty((K, F))
    for k in range(K):
        i = geo.src[k]
        J = list(model.hyperarcs[k][1])
        h_ij = gains[i, J, :]                                        # (|J|, F)
        own = covered[i, J, :] * gains[i, J, :]
        interference = recv_int[J, :] - own                          # transmitters other than i (and j)
        self_int = self_gain * node_pow[J, :]
        broad = beta * h_ij * (node_pow[i, :] - alloc[k, :])
        sinr = alloc[k, :] * h_ij / (noise[J, None] + interference + self_int + broad)
        cap[k] = np.log2(1.0 + sinr / rho).min(axis=0)
    return cap


def hyperarc_capacity(model: NetworkModel, noise, gains, alloc, k: int, f: int,
                      config: PhyConfig | None = None) -> float:
    """Capacity of hyperarc ``k`` on tone ``f`` under the active physical-layer model."""
    config = config or PhyConfig()
    if config.model == "sinr":
        return float(sinr_capacities(model, noise, gains, alloc, config.rho, config.beta,
                                     config.self_gain)[k, f])
    i, J = model.hyperarcs[k]
    g = np.asarray(gains)[i, list(J), f] / (config.rho * np.asarray(noise)[list(J)])
    return float(np.min(np.log2(1.0 + alloc[k, f] * g)))


# --- waterfilling ---------------------------------------------------------------

def waterfill(lam, mu, gain, p_max):
    """Maximize ``lam * log2(1 + p * gain) - mu * p`` over ``0 <= p <= p_max``.

    Vectorized over broadcastable arguments. Returns ``(p_opt, objective)``.
    """
    lam, mu, gain, p_max = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (lam, mu, gain, p_max)))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        level = np.where(mu > 0, lam / (mu * LN2), np.inf)
        floor = np.where(gain > 0, 1.0 / gain, np.inf)
        p = np.clip(level - floor, 0.0, p_max)
    p = np.where((lam > 0) & (gain > 0), p, 0.0)
    p = np.nan_to_num(p, nan=0.0)
    obj = lam * np.log2(1.0 + p * gain) - mu * p
    return p, obj


def waterfill_hyperarc(model: NetworkModel, noise, lam: float, mu: float, gains, k: int, f: int,
                       p_max: float, rho: float = 1.0):
    """Optimal power and ``gamma`` value of hyperarc ``k`` on tone ``f`` given ``(lam, mu)``."""
    i, J = model.hyperarcs[k]
    g = np.min(np.asarray(gains)[i, list(J), f] / (rho * np.asarray(noise)[list(J)]))
    p, obj = waterfill(lam, mu, g, p_max)
    return float(p), float(obj)


# --- per-slot solver ------------------------------------------------------------

class PhyLayer:
    """Per-slot power allocation solver bound to one network, noise vector and config.

    Maximal matchings are enumerated once at construction (conflict model).
    """

    def __init__(self, model: NetworkModel, noise, config: PhyConfig | None = None):
        self.model = model
        self.noise = np.asarray(noise, dtype=float)
        self.config = config or PhyConfig()
        self.geo = _geometry(model)
        self.p_tone_max = model.bounds.p_tone_max
        if self.config.model == "conflict":
            self.matchings = enumerate_maximal_matchings(model, self.config.secondary,
                                                         self.config.max_matchings)
            M = np.zeros((len(self.matchings), model.n_hyperarcs))
            for r, mt in enumerate(self.matchings):
                M[r, list(mt)] = 1.0
            self.match_matrix = M
        else:
            self.matchings = None
            self.match_matrix = None

    def _prices(self, zeta_lam, zeta_mu):
        lam = np.asarray(zeta_lam, dtype=float)
        mu = np.asarray(zeta_mu, dtype=float)[self.geo.src]
        return lam, mu

    def capacities(self, gains, alloc) -> np.ndarray:
        c = self.config
        if c.model == "sinr":
            return sinr_capacities(self.model, self.noise, gains, alloc, c.rho, c.beta, c.self_gain)
        return snr_capacities(self.model, self.noise, gains, alloc, c.rho)

    def objective(self, lam, mu, gains, alloc) -> float:
        lam_k, mu_k = self._prices(lam, mu)
        cap = self.capacities(gains, alloc)
        return float(np.sum(lam_k[:, None] * cap - mu_k[:, None] * alloc))

    def solve_batch(self, lam, mu, gains):
        """Solve a batch of slots at common multipliers.

        Parameters
        ----------
        lam : ndarray (K,)
        mu : ndarray (n,)
        gains : ndarray (B, n, n, F)

        Returns
        -------
        cap_sum : ndarray (B, K)
            ``sum_f C^f_iJ`` for the chosen allocation in each slot.
        node_power : ndarray (B, n)
            ``sum_{f, J} p^f_iJ`` per node.
        objective : ndarray (B,)
        """
        gains = np.asarray(gains, dtype=float)
        if self.config.model == "sinr":
            outs = [self.solve(lam, mu, g) for g in gains]
            cap = np.stack([o.capacity.sum(axis=1) for o in outs])
            pw = np.stack([o.node_power(self.model) for o in outs])
            obj = np.array([o.objective for o in outs])
            return cap, pw, obj
        B = gains.shape[0]
        K, n = self.model.n_hyperarcs, self.model.n_nodes
        if K == 0 or len(self.matchings) == 0:
            return np.zeros((B, K)), np.zeros((B, n)), np.zeros(B)
        lam_k, mu_k = self._prices(lam, mu)
        g = effective_gain(self.model, self.noise, gains, self.config.rho)      # (B, K, F)
        p, obj = waterfill(lam_k[None, :, None], mu_k[None, :, None], g, self.p_tone_max[None, None, :])
        weight = obj.sum(axis=2)                                                 # (B, K)
        scores = weight @ self.match_matrix.T                                    # (B, nM)
        best = np.argmax(scores, axis=1)
        active = self.match_matrix[best]                                         # (B, K)
        alloc = p * active[:, :, None]
        cap = np.log2(1.0 + alloc * g).sum(axis=2)
        pw = alloc.sum(axis=2) @ self.geo.owner.T
        return cap, pw, (weight * active).sum(axis=1)

    def solve(self, lam, mu, gains) -> PhyOutcome:
        """Solve one slot; ``gains`` has shape (n, n, F)."""
        gains = np.asarray(gains, dtype=float)
        K, F = self.model.n_hyperarcs, self.model.tones
        if self.config.model == "sinr":
            return self._solve_sinr(lam, mu, gains)
        if K == 0 or len(self.matchings) == 0:
            z = np.zeros((K, F))
            return PhyOutcome(z, z.copy(), 0.0, None)
        lam_k, mu_k = self._prices(lam, mu)
        g = effective_gain(self.model, self.noise, gains, self.config.rho)
        p, obj = waterfill(lam_k[:, None], mu_k[:, None], g, self.p_tone_max[None, :])
        weight = obj.sum(axis=1)
        best = int(np.argmax(self.match_matrix @ weight))
        active = self.match_matrix[best].astype(bool)
        alloc = p * active[:, None]
        cap = np.log2(1.0 + alloc * g)
        return PhyOutcome(alloc, cap, float(weight[active].sum()), best)

    # sinr: multistart coordinate ascent, tones are independent
    def _solve_sinr(self, lam, mu, gains) -> PhyOutcome:
        c = self.config
        K, F = self.model.n_hyperarcs, self.model.tones
        lam_k, mu_k = self._prices(lam, mu)
        rng = np.random.default_rng(c.sinr_seed)
        alloc = np.zeros((K, F))
        for f in range(F):
            pmax = float(self.p_tone_max[f])
            g1 = gains[:, :, f:f + 1]

            def tone_obj(pv):
                cap = sinr_capacities(self.model, self.noise, g1, pv[:, None], c.rho, c.beta, c.self_gain)[:, 0]
                return float(np.sum(lam_k * cap - mu_k * pv))

            starts = [np.zeros(K)]
            if c.sinr_starts > 1:
                # single-hyperarc waterfilling start, ignoring interference
                eff = effective_gain(self.model, self.noise, g1, c.rho)[:, 0]
                p_wf, _ = waterfill(lam_k, mu_k, eff, pmax)
                starts.append(p_wf)
            while len(starts) < c.sinr_starts:
                starts.append(rng.uniform(0.0, pmax, K))
            best_v, best_p = -np.inf, np.zeros(K)
            for p0 in starts:
                pv = p0.copy()
                val = tone_obj(pv)
                for _ in range(c.sinr_sweeps):
                    prev = val
                    for k in range(K):
                        pv, val = self._coordinate_step(tone_obj, pv, k, pmax, val)
                    if val - prev <= c.sinr_tol:
                        break
                if val > best_v + 1e-15:
                    best_v, best_p = val, pv
            alloc[:, f] = best_p
        cap = self.capacities(gains, alloc)
        obj = float(np.sum(lam_k[:, None] * cap - mu_k[:, None] * alloc))
        return PhyOutcome(alloc, cap, obj, None)

    @staticmethod
    def _coordinate_step(fn, pv, k, pmax, current):
        grid = np.linspace(0.0, pmax, 17)
        vals = []
        for v in grid:
            trial = pv.copy()
            trial[k] = v
            vals.append(fn(trial))
        j = int(np.argmax(vals))
        lo, hi = grid[max(j - 1, 0)], grid[min(j + 1, len(grid) - 1)]

        def neg(v):
            trial = pv.copy()
            trial[k] = v
            return -fn(trial)

        res = minimize_scalar(neg, bounds=(lo, hi), method="bounded", options={"xatol": 1e-9})
        cand = [(vals[j], grid[j]), (-res.fun, float(res.x))]
        val, x = max(cand, key=lambda t: t[0])
        if val > current:
            out = pv.copy()
            out[k] = x
            return out, val
        return pv, current


def solve_power_subproblem(model: NetworkModel, zeta, gains, layer: PhyLayer) -> PhyOutcome:
    """Per-slot physical layer maximization of ``sum gamma`` at multipliers ``zeta``.

    ``zeta`` is a :class:`~codednet.subproblems.DualVector` (only its capacity
    and power blocks are used).
    """
    if layer.model is not model:
        raise ValueError("phy layer was built for a different model")
    return layer.solve(zeta.lam, zeta.mu, gains)
