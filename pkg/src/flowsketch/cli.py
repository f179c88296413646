"""Command-line front end.

Subcommands: gen-graph, verify-expander, simulate, recover, sweep,
plot-data. Exit codes: 0 success, 1 usage error, 2 numerical failure,
3 I/O failure.
"""

import argparse
import csv
import os
import sys

import numpy as np

from . import experiment, lp, pmle
from .graph import (
    EnumerationCapExceeded,
    GraphConstructionError,
    build_random_expander,
    greedy_cover,
    load_graph,
    save_graph,
    verify_expansion,
)
from .stream import SignalSpec, StreamState, gen_rates, parse_dist, run_epochs

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); we own the codes
        raise UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="flowsketch", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-graph", help="build and save a random counter graph")
    g.add_argument("--flows", type=int, required=True)
    g.add_argument("--counters", type=int, required=True)
    g.add_argument("--degree", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    v = sub.add_parser("verify-expander", help="brute-force expansion check")
    v.add_argument("--graph", required=True)
    v.add_argument("--k", type=int, required=True)
    v.add_argument("--epsilon", type=float, required=True)
    v.add_argument("--cap", type=int, default=10**7,
                   help="max subsets to enumerate")

    s = sub.add_parser("simulate", help="run a Poisson stream, save counters")
    s.add_argument("--graph", required=True)
    s.add_argument("--whales", type=int, required=True)
    s.add_argument("--whale-dist", default="constant:1.0",
                   help="KIND:VALUE, e.g. constant:1.0 or abs-gaussian:1.0")
    s.add_argument("--minnow-dist", default="constant:0.0")
    s.add_argument("--signal-seed", type=int, default=0)
    s.add_argument("--stream-seed", type=int, default=0)
    s.add_argument("--epochs", type=int, required=True)
    s.add_argument("--tau", type=float, default=1.0)
    s.add_argument("--out-counters", required=True)
    s.add_argument("--out-counts", help="also save exact per-flow counts")

    r = sub.add_parser("recover", help="decode rates from saved counters")
    r.add_argument("--graph", required=True)
    r.add_argument("--counters", required=True)
    r.add_argument("--decoder", choices=experiment.DECODERS, default="direct")
    r.add_argument("--epochs", type=int, required=True)
    r.add_argument("--tau", type=float, default=1.0)
    r.add_argument("--out", required=True)
    r.add_argument("--solver", default="auto",
                   choices=["auto", "interior-point", "admm"])
    r.add_argument("--tol-feas", type=float)
    r.add_argument("--tol-obj", type=float)
    r.add_argument("--iter-cap", type=int)
    r.add_argument("--trace", help="dump LP iterations to this CSV")
    r.add_argument("--k", type=int, help="whale count (pmle decoders)")
    r.add_argument("--l0", type=float, help="rate budget (pmle decoders)")
    r.add_argument("--levels", type=int, default=64)
    r.add_argument("--gamma", type=float, default=1.0)
    r.add_argument("--penalty-mode", default="l0-scaled",
                   choices=["l0-scaled", "uniform"])

    w = sub.add_parser("sweep", help="run a config-driven experiment sweep")
    w.add_argument("--config", required=True)
    w.add_argument("--out-dir", help="override the config's out_dir")
    w.add_argument("--workers", type=int, default=1)

    d = sub.add_parser("plot-data", help="columnar plot data from results")
    d.add_argument("--results", required=True)
    d.add_argument("--metric", required=True,
                   choices=["success", "rel_error", "time"])
    d.add_argument("--out", required=True)
    return p


def _write_vector_csv(path, values) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["index", "value"])
        for i, v in enumerate(values):
            w.writerow([i, repr(float(v)) if isinstance(v, float) else int(v)])


def _read_vector_csv(path, expected_len: int) -> np.ndarray:
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r)
        if header != ["index", "value"]:
            raise ValueError(f"{path}: expected header index,value")
        out = np.zeros(expected_len, dtype=np.float64)
        seen = 0
        for row in r:
            i = int(row[0])
            if not 0 <= i < expected_len:
                raise ValueError(f"{path}: index {i} out of range")
            out[i] = float(row[1])
            seen += 1
    if seen != expected_len:
        raise ValueError(f"{path}: {seen} rows for a length-{expected_len} vector")
    return out


def _cmd_gen_graph(args) -> int:
    g = build_random_expander(args.flows, args.counters, args.degree, args.seed)
    save_graph(g, args.out)
    print(f"graph N={g.n_left} M={g.n_right} d={g.d} seed={g.seed} -> {args.out}")
    return EXIT_OK


def _cmd_verify_expander(args) -> int:
    g = load_graph(args.graph)
    rep = verify_expansion(g, args.k, args.epsilon, cap=args.cap)
    print(
        f"k={rep.k_checked} epsilon={rep.epsilon} worst_ratio={rep.worst_ratio:.6f} "
        f"subsets={rep.subsets_tested} is_expander={str(rep.is_expander).lower()}"
    )
    return EXIT_OK


def _cmd_simulate(args) -> int:
    g = load_graph(args.graph)
    spec = SignalSpec(
        n_flows=g.n_left, k=args.whales,
        whale_dist=parse_dist(args.whale_dist),
        minnow_dist=parse_dist(args.minnow_dist),
        seed=args.signal_seed,
    )
    state = StreamState(graph=g, rates=gen_rates(spec), tau=args.tau,
                        seed=args.stream_seed)
    run_epochs(state, args.epochs)
    _write_vector_csv(args.out_counters, [int(v) for v in state.y])
    if args.out_counts:
        _write_vector_csv(args.out_counts, [int(v) for v in state.x])
    print(
        f"simulated {args.epochs} epochs: total packets={int(state.x.sum())}, "
        f"counters -> {args.out_counters}"
    )
    return EXIT_OK


def _cmd_recover(args) -> int:
    g = load_graph(args.graph)
    y = _read_vector_csv(args.counters, g.n_right)
    scale = args.epochs * args.tau
    if args.decoder == "direct":
        sol = lp.basis_pursuit(
            g, y, args.tol_feas, args.tol_obj, args.iter_cap,
            solver=args.solver, collect_trace=args.trace is not None,
        )
        if args.trace:
            with open(args.trace, "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(["iteration", "objective", "feasibility"])
                for row in sol.trace or []:
                    w.writerow([row[0], repr(float(row[1])), repr(float(row[2]))])
        if sol.status == "infeasible":
            raise lp.NumericalError("basis pursuit reported infeasible")
        est = lp.direct_estimate(sol, args.epochs, args.tau)
        print(
            f"direct: status={sol.status} objective={sol.objective:.6g} "
            f"feas={sol.primal_feasibility:.3g} iters={sol.iterations}"
        )
    else:
        if args.k is None or args.l0 is None:
            raise UsageError(f"decoder {args.decoder} requires --k and --l0")
        cover = greedy_cover(g)
        cfg = pmle.PmleConfig.from_problem(
            n_flows=g.n_left, k=args.k, l0=args.l0, cover=cover,
            gamma=args.gamma, levels=args.levels,
        )
        if args.decoder == "pmle-exhaustive":
            cs = pmle.CandidateSet(
                universe=np.arange(g.n_left), grid_step=cfg.grid_step,
                n_levels=cfg.n_levels, penalty_mode=args.penalty_mode,
            )
            res = pmle.pmle_exhaustive(y, g, cs, cfg, scale)
        else:
            loc = pmle.localize_whales(y, g, args.k)
            res = pmle.pmle_reduced(y, g, loc, cfg, scale,
                                    penalty_mode=args.penalty_mode)
            print(f"localization: |A1|={loc.a1.size} k'={loc.k_prime}")
        est = res.rates
        print(
            f"{args.decoder}: support={list(res.support)} "
            f"objective={res.objective:.6g} evaluated={res.n_evaluated}"
        )
    _write_vector_csv(args.out, [float(v) for v in est])
    print(f"estimate -> {args.out}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = experiment.load_config(args.config)
    out_dir = args.out_dir if args.out_dir is not None else cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    res = experiment.run_sweep(cfg, workers=args.workers)
    out_path = os.path.join(out_dir, "results.csv")
    experiment.emit_csv(res, out_path)
    print(f"{len(res.rows)} rows -> {out_path}")
    for a in res.aggregates:
        print(
            f"k={a.k} decoder={a.decoder} success={a.success_prob:.3f} "
            f"rel_err={a.mean_rel_error:.4g} time={a.mean_time_s:.4g}s"
        )
    return EXIT_OK


def _cmd_plot_data(args) -> int:
    res = experiment.load_csv(args.results)
    experiment.emit_plot_data(res, args.metric, args.out)
    print(f"{args.metric} -> {args.out}")
    return EXIT_OK


_COMMANDS = {
    "gen-graph": _cmd_gen_graph,
    "verify-expander": _cmd_verify_expander,
    "simulate": _cmd_simulate,
    "recover": _cmd_recover,
    "sweep": _cmd_sweep,
    "plot-data": _cmd_plot_data,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (lp.NumericalError, ArithmeticError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (GraphConstructionError, EnumerationCapExceeded, ValueError) as e:
        print(f"invalid input: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"i/o failure: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
