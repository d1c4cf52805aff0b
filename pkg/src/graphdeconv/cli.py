"""Command-line interface.

Exit codes: 0 success, 2 usage or data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import GraphDeconvError, NonInvertibleFilterError
from .experiments import (
    AXES,
    DrawBudgetExceeded,
    ExperimentConfig,
    draw_instance,
    load_grid,
    persist,
    replay_trial,
    run_grid,
)
from .graphs import Graph, erdos_renyi, is_connected, load_edge_list, make_shift, write_edge_list
from .identifiability import certify, detect_ambiguities
from .serialization import SCHEMA_VERSION, read_json, write_json
from .signals import GroundTruth
from .solver import deconvolve, relative_error, reweighted_l1
from .spectral import eig_sym, khatri_rao_z

EXIT_OK, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3


class UsageError(Exception):
    """Bad flags or unusable input data (exit code 2)."""


def _add_solver_flags(p):
    p.add_argument("--delta", type=float, default=None, help="reweighting offset (default: adaptive)")
    p.add_argument("--eps", type=float, default=1e-4, help="relative-change stopping threshold")
    p.add_argument("--max-iters", type=int, default=10)
    p.add_argument("--tol", type=float, default=1e-9, help="inner LP tolerance")


def _add_graph_source(p, required=True):
    src = p.add_mutually_exclusive_group(required=required)
    src.add_argument("--p", type=float, help="Erdos-Renyi edge probability (default 0.3)")
    src.add_argument("--graph", type=Path, help="edge-list file")
    p.add_argument("--n", type=int, default=50, help="number of nodes for Erdos-Renyi graphs")
    p.add_argument("--shift", choices=("normalized_adjacency", "adjacency"),
                   default="normalized_adjacency")


def build_parser():
    parser = argparse.ArgumentParser(prog="graphdeconv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-graph", help="write a random Erdos-Renyi edge list")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--connected", action="store_true", help="redraw until connected (budget 100)")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("simulate", help="draw a ground-truth instance and write a JSON bundle")
    _add_graph_source(p)
    p.add_argument("--L", type=int, default=5)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--s", type=int, required=True, help="sparsity S")
    p.add_argument("--P", type=int, required=True, help="number of signals")
    p.add_argument("--sparsity-mode", choices=("per_column", "total"), default="per_column")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("solve", help="run reweighted l1 recovery on a bundle")
    p.add_argument("--bundle", type=Path, required=True)
    _add_solver_flags(p)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("certify", help="check the exact-recovery conditions on a bundle")
    p.add_argument("--bundle", type=Path, required=True)
    p.add_argument("--support", help="comma-separated vec(X) indices overriding the bundle's support")
    p.add_argument("--cross-check", action="store_true",
                   help="also run the unweighted solve and report its error on g~")
    p.add_argument("--out", type=Path)

    p = sub.add_parser("ambiguity", help="list node pairs with a permutation ambiguity")
    p.add_argument("--graph", type=Path, required=True)
    p.add_argument("--shift", choices=("normalized_adjacency", "adjacency"),
                   default="normalized_adjacency")
    p.add_argument("--out", type=Path)

    p = sub.add_parser("grid", help="recovery-rate grid over S, P or L")
    _add_graph_source(p, required=False)
    p.add_argument("--axis", action="append", required=True, metavar="NAME=VALUES",
                   help="e.g. S=5,15,25 or P=1:20:1 (inclusive start:stop:step); repeat for a 2-D grid")
    p.add_argument("--S", type=int, default=25)
    p.add_argument("--P", type=int, default=10)
    p.add_argument("--L", type=int, default=5)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--threshold", type=float, default=0.01)
    p.add_argument("--sparsity-mode", choices=("per_column", "total"), default="per_column")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    _add_solver_flags(p)
    p.add_argument("--out", type=Path, required=True, help="CSV path; a .json sidecar is written next to it")

    p = sub.add_parser("replay", help="re-run a single grid trial")
    p.add_argument("--grid-result", type=Path, required=True)
    p.add_argument("--cell", required=True, help="e.g. S=25,P=10")
    p.add_argument("--trial", type=int, required=True)
    return parser


# -- helpers -------------------------------------------------------------------

def parse_axis(text):
    name, sep, values = text.partition("=")
    name = name.strip()
    if not sep or name not in AXES:
        raise UsageError(f"bad --axis {text!r}; expected NAME=VALUES with NAME in {AXES}")
    try:
        if ":" in values:
            parts = [int(v) for v in values.split(":")]
            start, stop = parts[0], parts[1]
            step = parts[2] if len(parts) > 2 else 1
            if step <= 0 or len(parts) > 3:
                raise ValueError
            vals = tuple(range(start, stop + 1, step))
        else:
            vals = tuple(int(v) for v in values.split(",") if v.strip())
    except ValueError:
        raise UsageError(f"bad axis values {values!r}") from None
    if not vals:
        raise UsageError(f"axis {name} has no values")
    return name, vals


def parse_cell(text, names):
    out = {}
    for part in text.split(","):
        k, sep, v = part.partition("=")
        if not sep:
            raise UsageError(f"bad --cell {text!r}; expected NAME=VALUE pairs")
        try:
            out[k.strip()] = int(v)
        except ValueError:
            raise UsageError(f"bad cell value {v!r}") from None
    if set(out) != set(names):
        raise UsageError(f"--cell must give exactly {', '.join(names)}")
    return tuple(out[n] for n in names)


def _bundle_config(args):
    return ExperimentConfig(
        axes=(("S", (args.s,)), ("P", (args.P,))),
        n=args.n, edge_prob=args.p if args.p is not None else 0.3,
        graph_file=str(args.graph) if args.graph else None,
        S=args.s, P=args.P, L=args.L, alpha=args.alpha, trials=1,
        sparsity_mode=args.sparsity_mode, shift=args.shift,
    ).validate()


def load_bundle(path):
    """Read a ground-truth bundle; returns ``(dict, graph, dec, truth)``."""
    try:
        d = read_json(path)
        g = Graph.from_dict(d["graph"])
        dec = eig_sym(make_shift(g, d.get("shift", "normalized_adjacency")))
        truth = GroundTruth.from_dict(d["truth"]) if d.get("truth") else None
        Y = truth.Y if truth is not None else np.asarray(d["Y"], dtype=float)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"cannot read bundle {path}: {exc}") from exc
    if Y.shape[0] != g.n:
        raise UsageError(f"bundle observations have {Y.shape[0]} rows for {g.n} nodes")
    return d, g, dec, truth, Y


# -- subcommands -----------------------------------------------------------------

def cmd_gen_graph(args):
    rng = np.random.default_rng(args.seed)
    for _ in range(100):
        g = erdos_renyi(args.n, args.p, rng)
        if not args.connected or is_connected(g):
            break
    else:
        raise UsageError("no connected graph in 100 draws")
    write_edge_list(g, args.out)
    print(f"wrote {args.out}: n={g.n} edges={g.num_edges}")
    return EXIT_OK


def cmd_simulate(args):
    cfg = _bundle_config(args)
    params = cfg.cell_params((args.s, args.P))
    ss = np.random.SeedSequence(args.seed)
    try:
        inst = draw_instance(cfg, params, ss)
    except NonInvertibleFilterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DrawBudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    truth = inst.truth
    bundle = {
        "schema_version": SCHEMA_VERSION,
        "kind": "ground_truth_bundle",
        "graph": inst.graph.to_dict(),
        "shift": cfg.shift,
        "params": {
            "n": inst.graph.n, "p": args.p, "graph_file": cfg.graph_file, "L": args.L,
            "alpha": args.alpha, "S": args.s, "P": args.P, "sparsity_mode": args.sparsity_mode,
        },
        "seed": args.seed,
        "redraws": {
            "graph": inst.graph_redraws,
            "ambiguity": inst.ambiguity_redraws,
            "filter_draws": inst.filter_draws,
        },
        "support": truth.X0.vec_support().tolist(),
        "truth": truth.to_dict(),
    }
    write_json(args.out, bundle)
    print(f"wrote {args.out}: N={inst.graph.n} P={args.P} nnz={truth.X0.nnz} "
          f"scale={truth.scale:.6g}")
    return EXIT_OK


def cmd_solve(args):
    d, g, dec, truth, Y = load_bundle(args.bundle)
    L = d.get("params", {}).get("L")
    res = deconvolve(Y, dec, L=L, delta=args.delta, eps=args.eps, max_iters=args.max_iters,
                     tol=args.tol)
    err = relative_error(res.X_hat, truth.X0.values) if truth is not None else None
    out = {
        "schema_version": SCHEMA_VERSION,
        "kind": "deconvolution_result",
        "bundle": str(args.bundle),
        "seed": d.get("seed"),
        "e_X": err,
        "result": res.to_dict(),
    }
    write_json(args.out, out)
    e_txt = "n/a" if err is None else f"{err:.6f}"
    print(f"e_X={e_txt} iters={res.n_iterations} status={res.status}")
    return EXIT_NUMERIC if res.status == "solver_failure" else EXIT_OK


def _parse_support(text, m):
    try:
        idx = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"malformed support {text!r}") from None
    if any(i < 0 or i >= m for i in idx):
        raise UsageError(f"support indices must lie in [0, {m})")
    return idx


def cmd_certify(args):
    d, g, dec, truth, Y = load_bundle(args.bundle)
    if truth is None:
        raise UsageError("bundle has no ground truth; certify needs X0 and g~0")
    Z = khatri_rao_z(Y, dec)
    if args.support is not None:
        support = _parse_support(args.support, Z.shape[0])
    else:
        support = d.get("support")
        if support is None:
            support = truth.X0.vec_support().tolist()
        if any(not isinstance(i, int) or i < 0 or i >= Z.shape[0] for i in support):
            raise UsageError("bundle support indices are malformed")
    report = certify(Z, support, truth.g_tilde0_normalized)
    out = {"schema_version": SCHEMA_VERSION, "kind": "certificate_report", "bundle": str(args.bundle),
           "report": report.to_dict()}
    line = f"C1={str(report.c1_holds).lower()} C2={str(report.c2_holds).lower()} margin={report.c2_margin:.6g}"
    if report.c2_note:
        print(f"warning: C2 not evaluated: {report.c2_note}", file=sys.stderr)
    if args.cross_check:
        res = reweighted_l1(Z, max_iters=1)
        g0 = truth.g_tilde0_normalized
        g_err = float(np.linalg.norm(res.g_tilde - g0) / np.linalg.norm(g0))
        out["cross_check"] = {"g_error": g_err, "status": res.status}
        line += f" g_error={g_err:.3e}"
    if args.out:
        write_json(args.out, out)
    print(line)
    return EXIT_OK


def cmd_ambiguity(args):
    try:
        g = load_edge_list(args.graph)
    except (OSError, GraphDeconvError) as exc:
        raise UsageError(str(exc)) from exc
    report = detect_ambiguities(make_shift(g, args.shift))
    if not report.ambiguous:
        print("no ambiguities")
    for i, j, lam in report.pairs:
        print(f"pair {i} {j} eigenvalue={lam:.6g}")
    if args.out:
        write_json(args.out, {"schema_version": SCHEMA_VERSION, "kind": "ambiguity_report",
                              "shift": args.shift, **report.to_dict()})
    return EXIT_OK


def cmd_grid(args):
    axes = tuple(parse_axis(a) for a in args.axis)
    cfg = ExperimentConfig(
        axes=axes, n=args.n, edge_prob=args.p if args.p is not None else 0.3,
        graph_file=str(args.graph) if args.graph else None,
        S=args.S, P=args.P, L=args.L, alpha=args.alpha, trials=args.trials,
        success_threshold=args.threshold, base_seed=args.seed, workers=args.workers,
        sparsity_mode=args.sparsity_mode, shift=args.shift, delta=args.delta, eps=args.eps,
        max_iters=args.max_iters, tol=args.tol,
    )
    cfg.validate()
    grid = run_grid(cfg)
    csv_path, json_path = persist(grid, args.out)
    for c in grid.cells:
        cell = ",".join(f"{a}={v}" for a, v in zip(cfg.axis_names, c.cell))
        print(f"{cell} success_rate={c.success_rate:.3f} mean_error={c.mean_error:.3e}")
    print(f"wrote {csv_path} and {json_path}")
    failures = sum(c.solver_failures for c in grid.cells)
    return EXIT_NUMERIC if failures == sum(c.trials for c in grid.cells) and failures else EXIT_OK


def cmd_replay(args):
    try:
        grid = load_grid(args.grid_result)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"cannot read grid result {args.grid_result}: {exc}") from exc
    cell = parse_cell(args.cell, grid.config.axis_names)
    try:
        recorded = grid.trial(cell, args.trial)
    except KeyError:
        raise UsageError(f"no trial {args.trial} for cell {args.cell} in {args.grid_result}") from None
    rec = replay_trial(grid, cell, args.trial)
    same = (rec.error == recorded.error) or (math.isnan(rec.error) and math.isnan(recorded.error))
    print(f"e_X={rec.error!r} recorded={recorded.error!r} status={rec.status} "
          f"match={str(same).lower()}")
    return EXIT_OK if same else EXIT_NUMERIC


COMMANDS = {
    "gen-graph": cmd_gen_graph,
    "simulate": cmd_simulate,
    "solve": cmd_solve,
    "certify": cmd_certify,
    "ambiguity": cmd_ambiguity,
    "grid": cmd_grid,
    "replay": cmd_replay,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except GraphDeconvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
