"""Command line interface: ``codednet run | sweep | validate``.

``--config`` takes a scenario JSON path or ``builtin:<name>`` for one of the
small point-mass instances in :mod:`codednet.builtin`. The environment
variable ``CODEDNET_THREADS`` caps the BLAS/OpenMP thread pools.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import builtin
from .model import ScenarioError
from .phy import MatchingLimitError, PhyLayer
from .scenario import Scenario, ScenarioConfig, build_scenario
from .solver import TRACE_COLUMNS, run

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

DISCRETE_WARNING = ("channel distribution is a discrete table: the continuity assumption behind "
                    "the zero duality gap does not hold, so primal and dual values may not meet")


class UsageError(Exception):
    pass


def _load(path: str) -> Scenario:
    if path.startswith("builtin:"):
        try:
            raw = builtin.scenario_dict(path.split(":", 1)[1])
        except KeyError as exc:
            raise UsageError(str(exc.args[0])) from None
        return build_scenario(ScenarioConfig.from_dict(raw, path))
    if not Path(path).is_file():
        raise UsageError(f"config file not found: {path}")
    return build_scenario(ScenarioConfig.load(path))


def _apply_overrides(sc: Scenario, args) -> Scenario:
    solver = {}
    for flag, key in (("mode", "mode"), ("iters", "iterations"), ("stepsize", "stepsize"),
                      ("window", "window"), ("mc_slots", "mc_slots"), ("seed", "seed"),
                      ("burn_in", "burn_in")):
        v = getattr(args, flag, None)
        if v is not None:
            solver[key] = v
    if getattr(args, "timing", False):
        solver["timing"] = True
    phy = {}
    if getattr(args, "secondary_interference", None) is not None:
        phy["secondary"] = args.secondary_interference == "on"
    if getattr(args, "phy", None) is not None:
        phy["model"] = args.phy
    try:
        return dataclasses.replace(sc, solver=dataclasses.replace(sc.solver, **solver),
                                   phy=dataclasses.replace(sc.phy, **phy))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _warnings(sc: Scenario) -> list[str]:
    return [] if sc.channel.is_continuous else [DISCRETE_WARNING]


def _solve(sc: Scenario):
    layer = PhyLayer(sc.model, sc.channel.noise, sc.phy)
    return run(sc.model, sc.channel, layer, sc.solver)


def _meta(sc: Scenario, trace, extra=None) -> dict:
    meta = {"scenario": sc.config.source, "seed": sc.solver.seed,
            "config_hash": sc.solver.digest(), "G": trace.meta["G"], "G_bar": trace.meta["G_bar"],
            "warnings": _warnings(sc)}
    meta.update({k: v for k, v in trace.meta.items() if k not in meta})
    meta["phy"] = dataclasses.asdict(sc.phy)
    meta["final"] = {"f_avg": trace.f_avg[-1], "best_dual": trace.best_dual[-1],
                     "viol_norm": trace.viol_norm[-1]}
    if extra:
        meta.update(extra)
    return meta


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


PRIMAL_COLUMNS = ("variable", "session", "sink", "node", "receivers", "head", "value")


def primal_rows(model, trace):
    """Rows of ``final_primal.csv``: one per entry of the averaged primal vector.

    ``p_realized`` rows carry the running average of the power actually spent
    by the physical layer, next to the network-layer variable ``p``.
    """
    lab = model.nodes
    y = trace.y_avg

    def recv(J):
        return " ".join(str(lab[j]) for j in J)

    rows = []
    for m, s in enumerate(model.sessions):
        rows.append(("a", lab[s.source], "", lab[s.source], "", "", y.a[m]))
    for k, (i, J) in enumerate(model.hyperarcs):
        for m in range(model.n_sessions):
            rows.append(("z", lab[model.sessions[m].source], "", lab[i], recv(J), "", y.z[k, m]))
    for e, (i, j) in enumerate(model.arcs):
        for pr, (m, t) in enumerate(model.pairs):
            rows.append(("x", lab[model.sessions[m].source], lab[t], lab[i], "", lab[j], y.x[e, pr]))
    for k, (i, J) in enumerate(model.hyperarcs):
        rows.append(("c", "", "", lab[i], recv(J), "", y.c[k]))
    for i in range(model.n_nodes):
        rows.append(("p", "", "", lab[i], "", "", y.p[i]))
    for i in range(model.n_nodes):
        rows.append(("p_realized", "", "", lab[i], "", "", trace.p_avg[i]))
    return rows


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def cmd_run(args) -> int:
    sc = _apply_overrides(_load(args.config), args)
    for msg in _warnings(sc):
        print(f"warning: {msg}", file=sys.stderr)
    trace = _solve(sc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trace.csv").write_text(trace.to_csv())
    with open(out / "meta.json", "w") as fh:
        json.dump(_meta(sc, trace), fh, indent=2, sort_keys=True, default=_json_default)
    _write_csv(out / "final_primal.csv", PRIMAL_COLUMNS, primal_rows(sc.model, trace))
    print(f"f(ybar) = {trace.f_avg[-1]:.6g}  best dual = {trace.best_dual[-1]:.6g}  "
          f"violation = {trace.viol_norm[-1]:.3g}  -> {out}")
    return EXIT_OK


def _parse_windows(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"--windows expects integers, got {text!r}") from None
    if not vals:
        raise UsageError("--windows needs at least one value")
    if any(v < 1 for v in vals):
        raise UsageError("window sizes must be >= 1")
    return vals


def cmd_sweep(args) -> int:
    windows = _parse_windows(args.windows)
    base = _apply_overrides(_load(args.config), args)
    if base.solver.mode != "async":
        base = dataclasses.replace(base, solver=dataclasses.replace(base.solver, mode="async"))
    for msg in _warnings(base):
        print(f"warning: {msg}", file=sys.stderr)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["window," + ",".join(TRACE_COLUMNS)]
    summary = []
    for S in windows:
        sc = dataclasses.replace(base, solver=dataclasses.replace(base.solver, window=S))
        trace = _solve(sc)
        for row in trace.to_csv().splitlines()[1:]:
            lines.append(f"{S},{row}")
        summary.append(_meta(sc, trace, {"window": S}))
        print(f"S = {S}: f(ybar) = {trace.f_avg[-1]:.6g}  best dual = {trace.best_dual[-1]:.6g}  "
              f"gap = {trace.terminal_gap():.4g}")
    (out / "sweep.csv").write_text("\n".join(lines) + "\n")
    with open(out / "sweep_meta.json", "w") as fh:
        json.dump({"windows": windows, "runs": summary}, fh, indent=2, sort_keys=True, default=_json_default)
    return EXIT_OK


def _corrupt_tiebreak(model, zeta):
    # ties resolve to the upper box end: used to show the suite catches it
    from .model import PrimalVector
    from .subproblems import linear_prices, solve_network
    y = solve_network(model, zeta)
    price = linear_prices(model, zeta)
    b = model.bounds
    return PrimalVector(y.a, np.where(price.z >= 0, b.z_max[:, None], 0.0),
                        np.where(price.x >= 0, b.x_max[:, None], 0.0),
                        np.where(price.c >= 0, b.c_max, 0.0), y.p)


def cmd_validate(args) -> int:
    from .subproblems import solve_network
    from .validation import format_table, run_suite

    solve = _corrupt_tiebreak if args.corrupt_tiebreak else solve_network
    results = run_suite(quick=args.quick, solve=solve)
    print(format_table(results))
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"FAILED: {', '.join(failed)}")
        return EXIT_FAIL
    print(f"all {len(results)} checks passed")
    return EXIT_OK


def _solver_flags(p):
    p.add_argument("--config", required=True, help="scenario JSON path or builtin:<name>")
    p.add_argument("--mode", choices=("sync", "async"))
    p.add_argument("--iters", type=int)
    p.add_argument("--stepsize", type=float)
    p.add_argument("--mc-slots", dest="mc_slots", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="out")
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--secondary-interference", dest="secondary_interference", choices=("on", "off"))
    p.add_argument("--phy", choices=("conflict", "sinr"))
    p.add_argument("--timing", action="store_true", help="fill the wall_ms trace column")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="codednet",
                                 description="Cross-layer utility maximization for coded wireless multicast.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one solver and write trace.csv, meta.json, final_primal.csv")
    _solver_flags(p)
    p.add_argument("--window", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="asynchronous runs over several averaging windows, common seed")
    _solver_flags(p)
    p.add_argument("--windows", required=True, help="comma separated window sizes, e.g. 40,50,60")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="oracle cross-check suite on built-in instances")
    p.add_argument("--quick", action="store_true", help="fewer draws, skip the solver run")
    p.add_argument("--corrupt-tiebreak", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    threads = os.environ.get("CODEDNET_THREADS")
    limit = None
    if threads:
        try:
            limit = max(1, int(threads))
        except ValueError:
            print(f"codednet: error: CODEDNET_THREADS must be an integer, got {threads!r}", file=sys.stderr)
            return EXIT_USAGE
    try:
        with threadpool_limits(limits=limit):
            return args.func(args)
    except UsageError as exc:
        print(f"codednet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ScenarioError, MatchingLimitError, ValueError) as exc:
        print(f"codednet: error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
