"""Oracle cross-check suite behind ``codednet validate``.

Each check returns a :class:`CheckResult`; :func:`run_suite` collects them.
Checks take a ``solve`` argument (default :func:`~codednet.subproblems.solve_network`)
so that a deliberately broken solver can be substituted to confirm the suite
notices.
"""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass

import numpy as np

from . import builtin
from .model import BoxBounds, Session, make_model
from .oracle import brute_matchings, deterministic_gap_oracle, grid_argmax
from .phy import PhyLayer, enumerate_maximal_matchings, waterfill
from .scenario import build_scenario
from .solver import run_sync, tau
from .subproblems import DualVector, broadcast_coefficient, solve_network, virtual_coefficient

GRID_STEP = 1e-4
OBJ_TOL = 1e-6


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def random_model(rng: np.random.Generator, n_nodes: int = 5, max_hyperarcs: int = 12,
                 point_to_point: bool = False):
    """Random small hypergraph with one session, for equivalence checks."""
    n = int(rng.integers(2, n_nodes + 1))
    cand = []
    for i in range(n):
        others = [j for j in range(n) if j != i]
        sets = [(j,) for j in others] if point_to_point else [
            c for r in range(1, len(others) + 1) for c in itertools.combinations(others, r)]
        cand.extend((i, J) for J in sets)
    k = int(rng.integers(1, min(max_hyperarcs, len(cand)) + 1))
    pick = sorted(rng.choice(len(cand), size=k, replace=False))
    hyperarcs = [cand[c] for c in pick]
    srcs = sorted({i for i, _ in hyperarcs})
    s = srcs[0]
    sinks = tuple(j for j in range(n) if j != s)
    arcs = sorted({(i, j) for i, J in hyperarcs for j in J})
    K, E = len(hyperarcs), len(arcs)
    b = BoxBounds(np.full(1, 1e-4), np.full(1, 5.0), rng.uniform(0.5, 3, K), rng.uniform(0.2, 2, E),
                  rng.uniform(0.5, 4, K), np.full(n, 5.0), np.full(1, 5.0))
    return make_model(list(range(1, n + 1)), hyperarcs, [Session(s, sinks)], 1, b)


def random_zeta(model, rng, scale: float = 2.0, tie_prob: float = 0.1) -> DualVector:
    flat = rng.exponential(scale, model.index.size)
    flat[rng.random(flat.size) < tie_prob] = 0.0
    return DualVector.from_flat(model, flat)


# --- individual checks ------------------------------------------------------

def check_subproblems(draws: int = 1000, seed: int = 0, solve=solve_network) -> CheckResult:
    """Every network-layer subproblem against a grid search on its own objective."""
    rng = np.random.default_rng(seed)
    sc = build_scenario(builtin.scenario_dict("relay3"))
    model = sc.model
    b = model.bounds
    worst = 0.0
    for _ in range(draws):
        zeta = random_zeta(model, rng)
        y = solve(model, zeta)
        m = 0
        price = sum(zeta.nu[r] for r, (p, i) in enumerate(model.index.flow)
                    if i == model.sessions[0].source)
        obj = lambda a: np.log(a) - price * a  # noqa: E731
        _, best = grid_argmax(obj, (b.a_min[m], b.a_max[m]), GRID_STEP)
        worst = max(worst, best - float(obj(y.a[m])))
        for k in range(model.n_hyperarcs):
            coef = broadcast_coefficient(model, k, m, zeta)
            _, best = grid_argmax(lambda v: coef * v, (0.0, b.z_max[k]), GRID_STEP)
            worst = max(worst, best - coef * y.z[k, m])
            coef = zeta.xi[k] - zeta.lam[k]
            _, best = grid_argmax(lambda v: coef * v, (0.0, b.c_max[k]), GRID_STEP)
            worst = max(worst, best - coef * y.c[k])
        for e in range(model.n_arcs):
            for pr in range(len(model.pairs)):
                coef = virtual_coefficient(model, e, pr, zeta)
                _, best = grid_argmax(lambda v: coef * v, (0.0, b.x_max[e]), GRID_STEP)
                worst = max(worst, best - coef * y.x[e, pr])
        for i in range(model.n_nodes):
            mu = zeta.mu[i]
            obj = lambda p: mu * p - model.cost.value(p)  # noqa: E731
            _, best = grid_argmax(obj, (0.0, b.p_max[i]), GRID_STEP)
            worst = max(worst, best - float(obj(y.p[i])))
    return CheckResult("subproblems_vs_grid", worst <= OBJ_TOL,
                       f"{draws} draws, worst objective shortfall {worst:.2e}")


def check_tie_break(solve=solve_network) -> CheckResult:
    """At zero multipliers every linear coefficient is zero or negative; ties go to 0."""
    sc = build_scenario(builtin.scenario_dict("relay3"))
    model = sc.model
    y = solve(model, DualVector.zeros(model))
    ok = (np.allclose(y.a, model.bounds.a_max) and not y.z.any() and not y.x.any()
          and not y.c.any() and not y.p.any())
    return CheckResult("tie_break_zero_coefficient", bool(ok),
                       "y(1) = (a_max, 0, 0, 0, 0)" if ok else "zero-coefficient tie did not resolve to 0")


def check_waterfill(draws: int = 1000, seed: int = 1) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        lam = rng.exponential(2.0)
        mu = rng.exponential(1.0)
        h = rng.exponential(0.05)
        N = rng.uniform(1e-3, 1e-2)
        rho = rng.uniform(1.0, 3.0)
        p_max = rng.uniform(0.5, 5.0)
        g = h / (rho * N)
        p, val = waterfill(lam, mu, g, p_max)
        _, best = grid_argmax(lambda v: lam * np.log2(1 + v * g) - mu * v, (0.0, p_max), GRID_STEP)
        worst = max(worst, best - float(val))
    return CheckResult("waterfill_vs_grid", worst <= OBJ_TOL,
                       f"{draws} tuples, worst objective shortfall {worst:.2e}")


def check_matchings(count: int = 20, seed: int = 2) -> CheckResult:
    rng = np.random.default_rng(seed)
    bad = []
    for r in range(count):
        model = random_model(rng)
        for secondary in (True, False):
            fast = enumerate_maximal_matchings(model, secondary)
            slow = brute_matchings(model, secondary)
            if fast != slow:
                bad.append((r, secondary))
    return CheckResult("matchings_vs_brute", not bad,
                       f"{count} hypergraphs x 2 interference settings" + (f", mismatches {bad}" if bad else ""))


def check_tau(max_window: int = 64, horizon: int = 10_000) -> CheckResult:
    bad = None
    for S in range(1, max_window + 1):
        for l in range(1, horizon + 1):
            t = tau(l, S)
            if t < 1 or (l > 2 * S - 1 and not S <= l - t <= 2 * S - 1):
                bad = (S, l, t)
                break
        if bad:
            break
    return CheckResult("tau_contract", bad is None,
                       f"S <= {max_window}, l <= {horizon}" + (f", violated at {bad}" if bad else ""))


def check_gap_oracle(name: str = "relay3", stepsize: float = 0.1, iterations: int = 20_000) -> CheckResult:
    """Synchronous run on a point-mass channel against the convex-program optimum."""
    sc = build_scenario(builtin.scenario_dict(name))
    P, _ = deterministic_gap_oracle(sc.model, sc.channel, sc.phy)
    layer = PhyLayer(sc.model, sc.channel.noise, sc.phy)
    cfg = dataclasses.replace(sc.solver, mode="sync", stepsize=stepsize, iterations=iterations)
    tr = run_sync(sc.model, sc.channel, layer, cfg)
    G = tr.meta["G"]
    f = float(tr.f_avg[-1])
    lo, hi = P - stepsize * G * G / 2 - 1e-2, P + 1e-2
    return CheckResult(f"gap_oracle_{name}_eps{stepsize:g}", lo <= f <= hi,
                       f"f(ybar) = {f:.4f}, oracle P = {P:.4f}, band [{lo:.4f}, {hi:.4f}]")


def check_phy_exact(draws: int = 20, seed: int = 3) -> CheckResult:
    """Per-slot phy objective against brute force over matchings with grid-searched powers."""
    rng = np.random.default_rng(seed)
    sc = build_scenario(builtin.scenario_dict("relay3"))
    model = sc.model
    layer = PhyLayer(model, sc.channel.noise, sc.phy)
    matchings = brute_matchings(model, True)
    worst = 0.0
    for _ in range(draws):
        lam = rng.exponential(1.0, model.n_hyperarcs)
        mu = rng.exponential(1.0, model.n_nodes)
        gains = sc.channel.mean * rng.exponential(1.0, sc.channel.mean.shape)
        got = layer.solve(lam, mu, gains).objective
        best = 0.0
        for mt in matchings:
            tot = 0.0
            for k in mt:
                i, J = model.hyperarcs[k]
                for f in range(model.tones):
                    g = min(gains[i, j, f] / sc.channel.noise[j] for j in J)
                    _, v = grid_argmax(lambda p: lam[k] * np.log2(1 + p * g) - mu[i] * p,
                                       (0.0, model.bounds.p_tone_max[f]), GRID_STEP)
                    tot += v
            best = max(best, tot)
        worst = max(worst, abs(best - got))
    return CheckResult("phy_vs_brute", worst <= 1e-4, f"{draws} slots, worst |difference| {worst:.2e}")


def run_suite(quick: bool = False, solve=solve_network) -> list[CheckResult]:
    """Run the cross-check suite; ``quick`` uses fewer draws and skips the solver run."""
    draws = 50 if quick else 1000
    out = [
        check_tie_break(solve),
        check_subproblems(draws, solve=solve),
        check_waterfill(draws),
        check_matchings(5 if quick else 20),
        check_tau(16 if quick else 64, 1000 if quick else 10_000),
        check_phy_exact(5 if quick else 20),
    ]
    if not quick:
        out.append(check_gap_oracle())
    return out


def format_table(results) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check'.ljust(width)}  result  detail"]
    for r in results:
        lines.append(f"{r.name.ljust(width)}  {'PASS' if r.passed else 'FAIL'}    {r.detail}")
    return "\n".join(lines)

