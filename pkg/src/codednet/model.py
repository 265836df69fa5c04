"""Network hypergraph, multicast sessions, box bounds and constraint evaluation.

Nodes are addressed by 0-based index internally; ``NetworkModel.nodes`` keeps
the user-facing labels. Hyperarcs are ordered by transmitter, then by receiver
set size, then lexicographically, so node 1 of the reference topology has
``(1,{2}), (1,{8}), (1,{2,8})`` in that order.

The stacked constraint vector ``q`` is laid out in five blocks:

``nu``
    flow conservation, one entry per (session/sink pair, node != sink), ordered
    by pair then node;
``eta``
    subset constraints, ordered by pair, node, then subset ``K`` of ``N(i)``
    (subsets sorted like hyperarc receiver sets);
``xi``
    link rate ``sum_m z - c`` per hyperarc;
``lam``
    capacity ``c - cbar`` per hyperarc;
``mu``
    power ``pbar - p`` per node.

Pairs ``(m, t)`` are ordered by session, then by sink label.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .curves import Cost, Utility

DEFAULT_MAX_DEGREE = 8


class ScenarioError(ValueError):
    """Invalid or inconsistent network description."""


class DegreeTooLargeError(ScenarioError):
    """A node has more neighbors than the subset enumeration cap allows."""


@dataclass(frozen=True)
class Session:
    source: int
    sinks: tuple

    def __post_init__(self):
        if len(self.sinks) == 0:
            raise ScenarioError("a session needs at least one sink")
        if self.source in self.sinks:
            raise ScenarioError("session source cannot be one of its sinks")


@dataclass(frozen=True, eq=False)
class BoxBounds:
    a_min: np.ndarray       # (M,)
    a_max: np.ndarray       # (M,)
    z_max: np.ndarray       # (K,) per hyperarc
    x_max: np.ndarray       # (E,) per arc
    c_max: np.ndarray       # (K,)
    p_max: np.ndarray       # (n,) long-term node power
    p_tone_max: np.ndarray  # (F,) spectral mask

    def check(self, log_utility: bool = True) -> None:
        for name in ("a_min", "a_max", "z_max", "x_max", "c_max", "p_max", "p_tone_max"):
            v = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(v)):
                raise ScenarioError(f"bound {name} must be finite")
            if np.any(v < 0):
                raise ScenarioError(f"bound {name} must be non-negative")
        if np.any(self.a_min > self.a_max):
            raise ScenarioError("a_min must not exceed a_max")
        if log_utility and np.any(self.a_min <= 0):
            raise ScenarioError("logarithmic utility needs a_min > 0")


def _subset_key(s):
    return (len(s), tuple(sorted(s)))


def nonempty_subsets(items) -> list[tuple]:
    items = sorted(items)
    out = [c for r in range(1, len(items) + 1) for c in itertools.combinations(items, r)]
    return sorted(out, key=_subset_key)


@dataclass(frozen=True, eq=False)
class ConstraintIndex:
    """Enumeration of the five constraint families and their block slices."""

    pairs: tuple        # (m, t) session / sink-node pairs
    flow: tuple         # (pair, i) with i != t
    subsets: tuple      # per node: tuple of subsets K of N(i)
    subset_rows: tuple  # (pair, i, k) with k indexing subsets[i]
    n_hyperarcs: int
    n_nodes: int

    @property
    def sizes(self) -> dict:
        return {"nu": len(self.flow), "eta": len(self.subset_rows),
                "xi": self.n_hyperarcs, "lam": self.n_hyperarcs, "mu": self.n_nodes}

    @property
    def slices(self) -> dict:
        out, start = {}, 0
        for name, size in self.sizes.items():
            out[name] = slice(start, start + size)
            start += size
        return out

    @property
    def size(self) -> int:
        return sum(self.sizes.values())


@dataclass(frozen=True, eq=False)
class NetworkModel:
    """Immutable coded multicast network.

    Use :func:`build_model` or :func:`make_model` rather than the constructor;
    they derive neighbor sets, arcs and the constraint index and validate them.
    """

    nodes: tuple
    positions: np.ndarray
    hyperarcs: tuple            # (i, J) with J a sorted tuple of node indices
    sessions: tuple
    tones: int
    bounds: BoxBounds
    utility: Utility = field(default_factory=Utility)
    cost: Cost = field(default_factory=Cost)
    neighbors: tuple = ()
    arcs: tuple = ()
    index: ConstraintIndex | None = None

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_hyperarcs(self) -> int:
        return len(self.hyperarcs)

    @property
    def n_arcs(self) -> int:
        return len(self.arcs)

    @property
    def n_sessions(self) -> int:
        return len(self.sessions)

    @property
    def pairs(self) -> tuple:
        return self.index.pairs

    def node_index(self, label) -> int:
        try:
            return self.nodes.index(label)
        except ValueError:
            raise KeyError(f"unknown node {label!r}") from None

    def hyperarc_index(self, i: int, J) -> int:
        key = (i, tuple(sorted(J)))
        try:
            return self._hyperarc_pos[key]
        except KeyError:
            raise KeyError(f"unknown hyperarc {key}") from None

    def arc_index(self, i: int, j: int) -> int:
        try:
            return self._arc_pos[(i, j)]
        except KeyError:
            raise KeyError(f"unknown arc {(i, j)}") from None

    def pair_index(self, m: int, t: int) -> int:
        try:
            return self._pair_pos[(m, t)]
        except KeyError:
            raise KeyError(f"unknown session/sink pair {(m, t)}") from None

    def hyperarcs_from(self, i: int) -> list[int]:
        return [k for k, (src, _) in enumerate(self.hyperarcs) if src == i]

    def label(self, i: int):
        return self.nodes[i]

    @property
    def link_mask(self) -> np.ndarray:
        mask = np.zeros((self.n_nodes, self.n_nodes), dtype=bool)
        for i, j in self.arcs:
            mask[i, j] = True
        return mask

    def objective(self, a, p) -> float:
        """Network utility ``sum_m U(a_m) - sum_i V(p_i)``."""
        return float(np.sum(self.utility.value(a)) - np.sum(self.cost.value(p)))


def make_model(nodes, hyperarcs, sessions, tones, bounds: BoxBounds, *, positions=None,
               utility: Utility | None = None, cost: Cost | None = None,
               neighbors=None, max_degree: int = DEFAULT_MAX_DEGREE) -> NetworkModel:
    """Assemble and validate a :class:`NetworkModel` from index-based data.

    Parameters
    ----------
    nodes : sequence
        Node labels; node ``i`` below refers to ``nodes[i]``.
    hyperarcs : iterable of (int, iterable of int)
        Transmitter index and receiver index set.
    sessions : iterable of Session
        Sources and sinks given as node indices.
    neighbors : sequence of iterables, optional
        Declared neighbor sets; if given they must equal the projection of
        the hyperarcs.
    """
    nodes = tuple(nodes)
    n = len(nodes)
    if n == 0:
        raise ScenarioError("network has no nodes")
    if len(set(nodes)) != n:
        raise ScenarioError("duplicate node labels")
    arcs_h = []
    seen = set()
    for i, J in hyperarcs:
        J = tuple(sorted(set(J)))
        if not (0 <= i < n) or any(not (0 <= j < n) for j in J):
            raise ScenarioError(f"hyperarc {(i, J)} references unknown nodes")
        if len(J) == 0:
            raise ScenarioError(f"hyperarc from node {nodes[i]!r} has an empty receiver set")
        if i in J:
            raise ScenarioError(f"hyperarc from node {nodes[i]!r} lists its own transmitter")
        if (i, J) in seen:
            raise ScenarioError(f"duplicate hyperarc {(nodes[i], [nodes[j] for j in J])}")
        seen.add((i, J))
        arcs_h.append((i, J))
    arcs_h.sort(key=lambda h: (h[0],) + _subset_key(h[1]))

    derived = [set() for _ in range(n)]
    for i, J in arcs_h:
        derived[i].update(J)
    if neighbors is not None:
        declared = [set(s) for s in neighbors]
        if len(declared) != n or declared != derived:
            raise ScenarioError("inconsistent hyperarc/neighbor data: neighbor sets are not "
                                "the projection of the hyperarcs")
    for i, nb in enumerate(derived):
        if len(nb) > max_degree:
            raise DegreeTooLargeError(
                f"degree too large: node {nodes[i]!r} has {len(nb)} neighbors "
                f"(subset enumeration cap is {max_degree})")
    nbrs = tuple(tuple(sorted(s)) for s in derived)
    arcs = tuple(sorted((i, j) for i in range(n) for j in nbrs[i]))

    sessions = tuple(sessions)
    for s in sessions:
        members = (s.source,) + tuple(s.sinks)
        if any(not (0 <= v < n) for v in members):
            raise ScenarioError("session references unknown nodes")
    if tones < 1:
        raise ScenarioError("need at least one tone")

    utility = utility or Utility()
    cost = cost or Cost()
    bounds = BoxBounds(*(np.asarray(getattr(bounds, f), dtype=float).copy()
                         for f in ("a_min", "a_max", "z_max", "x_max", "c_max", "p_max", "p_tone_max")))
    expected = {"a_min": len(sessions), "a_max": len(sessions), "z_max": len(arcs_h),
                "x_max": len(arcs), "c_max": len(arcs_h), "p_max": n, "p_tone_max": tones}
    for name, size in expected.items():
        if getattr(bounds, name).shape != (size,):
            raise ScenarioError(f"bound {name} has shape {getattr(bounds, name).shape}, expected ({size},)")
    bounds.check(log_utility=utility.kind == "log")

    pairs = tuple((m, t) for m, s in enumerate(sessions) for t in sorted(s.sinks))
    flow = tuple((p, i) for p, (_, t) in enumerate(pairs) for i in range(n) if i != t)
    subsets = tuple(tuple(nonempty_subsets(nb)) for nb in nbrs)
    subset_rows = tuple((p, i, k) for p in range(len(pairs)) for i in range(n)
                        for k in range(len(subsets[i])))
    index = ConstraintIndex(pairs, flow, subsets, subset_rows, len(arcs_h), n)

    if positions is None:
        positions = np.zeros((n, 2))
    model = NetworkModel(nodes=nodes, positions=np.asarray(positions, dtype=float),
                         hyperarcs=tuple(arcs_h), sessions=sessions, tones=int(tones),
                         bounds=bounds, utility=utility, cost=cost, neighbors=nbrs,
                         arcs=arcs, index=index)
    object.__setattr__(model, "_hyperarc_pos", {h: k for k, h in enumerate(arcs_h)})
    object.__setattr__(model, "_arc_pos", {a: e for e, a in enumerate(arcs)})
    object.__setattr__(model, "_pair_pos", {pr: p for p, pr in enumerate(pairs)})
    return model


def build_model(scenario) -> NetworkModel:
    """Build the network model described by a scenario configuration."""
    from .scenario import build_scenario

    return build_scenario(scenario).model


# --- primal vector ----------------------------------------------------------

@dataclass(eq=False)
class PrimalVector:
    """Average-rate and power variables ``y = (a, z, x, c, p)``.

    Shapes: ``a`` (M,), ``z`` (K, M), ``x`` (E, P) over arcs and session/sink
    pairs, ``c`` (K,), ``p`` (n,).
    """

    a: np.ndarray
    z: np.ndarray
    x: np.ndarray
    c: np.ndarray
    p: np.ndarray

    @classmethod
    def zeros(cls, model: NetworkModel) -> "PrimalVector":
        return cls(np.zeros(model.n_sessions), np.zeros((model.n_hyperarcs, model.n_sessions)),
                   np.zeros((model.n_arcs, len(model.pairs))), np.zeros(model.n_hyperarcs),
                   np.zeros(model.n_nodes))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.a.ravel(), self.z.ravel(), self.x.ravel(), self.c.ravel(), self.p.ravel()])

    @classmethod
    def from_flat(cls, model: NetworkModel, vec) -> "PrimalVector":
        vec = np.asarray(vec, dtype=float)
        M, K, E, P, n = model.n_sessions, model.n_hyperarcs, model.n_arcs, len(model.pairs), model.n_nodes
        sizes = [M, K * M, E * P, K, n]
        if vec.shape != (sum(sizes),):
            raise ValueError(f"primal vector has length {vec.size}, expected {sum(sizes)}")
        a, z, x, c, p = np.split(vec, np.cumsum(sizes)[:-1])
        return cls(a.copy(), z.reshape(K, M).copy(), x.reshape(E, P).copy(), c.copy(), p.copy())

    def copy(self) -> "PrimalVector":
        return PrimalVector(self.a.copy(), self.z.copy(), self.x.copy(), self.c.copy(), self.p.copy())

    def in_box(self, model: NetworkModel, tol: float = 0.0) -> bool:
        b = model.bounds
        ok = np.all(self.a >= b.a_min - tol) and np.all(self.a <= b.a_max + tol)
        ok &= np.all(self.z >= -tol) and np.all(self.z <= b.z_max[:, None] + tol)
        ok &= np.all(self.x >= -tol) and np.all(self.x <= b.x_max[:, None] + tol)
        ok &= np.all(self.c >= -tol) and np.all(self.c <= b.c_max + tol)
        ok &= np.all(self.p >= -tol) and np.all(self.p <= b.p_max + tol)
        return bool(ok)


def primal_size(model: NetworkModel) -> int:
    M, K, E, P, n = model.n_sessions, model.n_hyperarcs, model.n_arcs, len(model.pairs), model.n_nodes
    return M + K * M + E * P + K + n


# --- pointwise constraint evaluation ----------------------------------------

def _check_pair(model, m, t):
    if not (0 <= m < model.n_sessions):
        raise KeyError(f"unknown session {m}")
    if t not in model.sessions[m].sinks:
        raise KeyError(f"node {t} is not a sink of session {m}")
    return model.pair_index(m, t)


def flow_divergence(model: NetworkModel, y: PrimalVector, m: int, t: int, i: int) -> float:
    """Flow-conservation residual ``sigma_i - out_i + in_i`` (positive means violated)."""
    p = _check_pair(model, m, t)
    if not (0 <= i < model.n_nodes):
        raise KeyError(f"unknown node {i}")
    if i == t:
        raise ValueError("flow equation at the sink is omitted")
    sigma = y.a[m] if i == model.sessions[m].source else 0.0
    out = sum(y.x[e, p] for e, (u, _) in enumerate(model.arcs) if u == i)
    inc = sum(y.x[e, p] for e, (_, v) in enumerate(model.arcs) if v == i)
    return float(sigma - out + inc)


def subset_violation(model: NetworkModel, y: PrimalVector, i: int, K, m: int, t: int) -> float:
    """``sum_{j in K} x_ij - sum_{J : J cap K nonempty} z_iJ`` for session ``m``, sink ``t``."""
    p = _check_pair(model, m, t)
    K = set(K)
    if not K:
        raise ValueError("subset K must be non-empty")
    if not K <= set(model.neighbors[i]):
        raise ValueError(f"subset {sorted(K)} is not contained in N({i})")
    lhs = sum(y.x[model.arc_index(i, j), p] for j in K)
    rhs = sum(y.z[k, m] for k, (src, J) in enumerate(model.hyperarcs) if src == i and K & set(J))
    return float(lhs - rhs)


# --- linear constraint operator ---------------------------------------------

def _build_operator(model: NetworkModel):
    idx = model.index
    M, K, E, P, n = model.n_sessions, model.n_hyperarcs, model.n_arcs, len(model.pairs), model.n_nodes
    off_a, off_z = 0, M
    off_x = off_z + K * M
    off_c = off_x + E * P
    off_p = off_c + K
    sl = idx.slices
    rows, cols, vals = [], [], []

    def put(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    out_arcs = [[] for _ in range(n)]
    in_arcs = [[] for _ in range(n)]
    for e, (u, v) in enumerate(model.arcs):
        out_arcs[u].append(e)
        in_arcs[v].append(e)

    for r, (p, i) in enumerate(idx.flow, start=sl["nu"].start):
        m, _ = idx.pairs[p]
        if model.sessions[m].source == i:
            put(r, off_a + m, 1.0)
        for e in out_arcs[i]:
            put(r, off_x + e * P + p, -1.0)
        for e in in_arcs[i]:
            put(r, off_x + e * P + p, 1.0)

    from_node = [model.hyperarcs_from(i) for i in range(n)]
    for r, (p, i, kk) in enumerate(idx.subset_rows, start=sl["eta"].start):
        m, _ = idx.pairs[p]
        Kset = set(idx.subsets[i][kk])
        for j in Kset:
            put(r, off_x + model.arc_index(i, j) * P + p, 1.0)
        for k in from_node[i]:
            if Kset & set(model.hyperarcs[k][1]):
                put(r, off_z + k * M + m, -1.0)

    for k in range(K):
        r = sl["xi"].start + k
        for m in range(M):
            put(r, off_z + k * M + m, 1.0)
        put(r, off_c + k, -1.0)
        put(sl["lam"].start + k, off_c + k, 1.0)
    for i in range(n):
        put(sl["mu"].start + i, off_p + i, -1.0)

    A = sparse.csr_matrix((vals, (rows, cols)), shape=(idx.size, off_p + n))
    return A


def constraint_operator(model: NetworkModel) -> sparse.csr_matrix:
    """Sparse matrix ``A`` with ``q(y, cbar, pbar) = A y + [0; 0; 0; -cbar; pbar]``."""
    A = getattr(model, "_operator", None)
    if A is None:
        A = _build_operator(model)
        object.__setattr__(model, "_operator", A)
    return A


def constraint_vector(model: NetworkModel, y: PrimalVector, cbar, pbar) -> np.ndarray:
    """Stacked constraint left-hand sides ``q(y, .)``; entries <= 0 mean satisfied.

    ``cbar`` (per hyperarc) and ``pbar`` (per node) are the physical-layer
    expectation terms, supplied by the caller.
    """
    cbar = np.asarray(cbar, dtype=float)
    pbar = np.asarray(pbar, dtype=float)
    if cbar.shape != (model.n_hyperarcs,) or pbar.shape != (model.n_nodes,):
        raise ValueError("cbar/pbar dimension mismatch")
    flat = y.flat()
    if flat.shape != (primal_size(model),):
        raise ValueError("primal vector dimension mismatch")
    q = constraint_operator(model) @ flat
    sl = model.index.slices
    q[sl["lam"]] -= cbar
    q[sl["mu"]] += pbar
    return q
