"""Command-line interface: ``mmpgo {solve,profile,generate,info}``.

The log level is read from the ``DPGO_LOG`` environment variable
(``DEBUG``, ``INFO``, ``WARNING``, ...).
"""

import argparse
import logging
import math
import os
import sys

from .datasets import (
    CubeParams,
    generate_cube,
    initialize,
    load_g2o,
    partition,
    write_g2o,
    write_manifest,
    write_vertices,
)
from .kernels import parse_kernel
from .metrics import performance_profile, read_trace_csv, write_trace_csv
from .solvers import ConfigError, Method, SolverConfig, run

log = logging.getLogger("mmpgo")


class CLIError(Exception):
    pass


def _configure_logging():
    level = os.environ.get("DPGO_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _add_cube_args(p):
    d = CubeParams()
    p.add_argument("--grid", type=int, default=d.grid, help="cube lattice points per side")
    p.add_argument("--side-length", type=float, default=d.side_length)
    p.add_argument("--poses", type=int, default=d.n_poses, help="cube path length")
    p.add_argument("--loop-prob", type=float, default=d.loop_prob)
    p.add_argument("--sigma-t", type=float, default=d.sigma_t)
    p.add_argument("--sigma-r", type=float, default=d.sigma_R)


def _cube_params(args):
    return CubeParams(
        grid=args.grid,
        side_length=args.side_length,
        n_poses=args.poses,
        loop_prob=args.loop_prob,
        sigma_t=args.sigma_t,
        sigma_R=args.sigma_r,
        seed=args.seed,
        n_nodes=args.nodes,
    )


def build_parser():
    parser = argparse.ArgumentParser(prog="mmpgo", description="Distributed pose graph optimization.")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="run a solver and write a metrics CSV")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="g2o file")
    src.add_argument("--cube", action="store_true", help="use a generated Cube dataset")
    s.add_argument("--nodes", type=int, default=1)
    s.add_argument("--method", choices=[m.value for m in Method], default=Method.AMM_SHARP.value)
    s.add_argument("--kernel", default="trivial", help="trivial | huber:<a> | welsch:<a>")
    s.add_argument("--max-iter", type=int, default=1000)
    s.add_argument("--eta", type=float, default=5e-4)
    s.add_argument("--xi", type=float, default=1e-10)
    s.add_argument("--zeta", type=float, default=1.5e-10)
    s.add_argument("--psi", type=float, default=1e-10)
    s.add_argument("--phi", type=float, default=1e-6)
    s.add_argument("--improve-budget", type=int, choices=(0, 1), default=1)
    s.add_argument("--init", choices=["chordal", "vertices", "identity", "odometry"], default="chordal")
    s.add_argument("--fstar", type=float, help="externally computed optimum, for gap reporting")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--threads", type=int, default=None, help="cap on BLAS worker threads")
    s.add_argument("--output", help="write the final estimate as g2o VERTEX records")
    s.add_argument("--trace", help="metrics CSV path (default: stdout)")
    s.add_argument("--force-restart-every-step", action="store_true", help="fire every restart test")
    s.add_argument("--grad-tol", type=float, default=None, help="optional early exit on gradient norm")
    _add_cube_args(s)

    p = sub.add_parser("profile", help="performance profile over run CSVs")
    p.add_argument("csv", nargs="+")
    p.add_argument("--fstar", type=float, nargs="+", required=True, help="one value, or one per CSV")
    p.add_argument("--f0", type=float, nargs="+", help="one value, or one per CSV (default: row 0)")
    p.add_argument("--delta", type=float, default=1e-2)
    p.add_argument("--output", help="profile CSV path (default: stdout)")

    g = sub.add_parser("generate", help="write a Cube dataset")
    g.add_argument("--output", required=True, help="g2o path; truth and manifest are written alongside")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--nodes", type=int, default=1)
    _add_cube_args(g)

    i = sub.add_parser("info", help="summarize a g2o file")
    i.add_argument("--input", required=True)
    i.add_argument("--nodes", type=int, default=None)
    return parser


def _per_run(values, n, name):
    if values is None:
        return [None] * n
    if len(values) == 1:
        return values * n
    if len(values) != n:
        raise CLIError(f"--{name} needs one value or one per CSV ({n})")
    return list(values)


def cmd_solve(args, out=None):
    out = out or sys.stdout
    if args.input:
        graph = load_g2o(args.input)
        dgraph = partition(graph, args.nodes)
    else:
        dgraph, _ = generate_cube(_cube_params(args))
    X0 = initialize(dgraph, args.init)
    cfg = SolverConfig(
        method=args.method,
        kernel=parse_kernel(args.kernel),
        eta=args.eta,
        xi=args.xi,
        zeta=args.zeta,
        psi=args.psi,
        phi=args.phi,
        max_iter=args.max_iter,
        improve_budget=args.improve_budget,
        seed=args.seed,
        force_restart=args.force_restart_every_step,
        grad_tol=args.grad_tol,
    )
    if args.fstar is not None and not args.fstar > 0:
        raise CLIError("--fstar must be positive")
    log.info("solving %r with %s", dgraph, cfg)
    if args.threads:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=args.threads):
            result = run(dgraph, cfg, X0)
    else:
        result = run(dgraph, cfg, X0)
    if args.trace:
        write_trace_csv(result.trace, args.trace)
    else:
        write_trace_csv(result.trace, out)
    if args.output:
        write_vertices(result.X, args.output, getattr(dgraph.graph, "names", None))
    last = result.trace[-1]
    msg = f"{cfg.method.value}: F0={result.trace[0].F:.6g} F={last.F:.6g} after {last.iter} iterations"
    if args.fstar is not None:
        msg += f", relative gap {(last.F - args.fstar) / args.fstar:.3e}"
    print(msg, file=sys.stderr)
    return result


def cmd_profile(args, out=None):
    out = out or sys.stdout
    traces = [read_trace_csv(p) for p in args.csv]
    n = len(traces)
    fstar = _per_run(args.fstar, n, "fstar")
    f0 = _per_run(args.f0, n, "f0")
    runs = [(t.column("F"), f if f is not None else t[0].F, fs) for t, f, fs in zip(traces, f0, fstar)]
    solved, ks, pct = performance_profile(runs, args.delta)
    lines = ["run,iterations_to_threshold"]
    lines += [f"{path},{'inf' if math.isinf(k) else k}" for path, k in zip(args.csv, solved)]
    lines.append("")
    lines.append("k,percent_solved")
    prev = None
    for k, p in zip(ks, pct):
        if p != prev:
            lines.append(f"{int(k)},{p:g}")
            prev = p
    text = "\n".join(lines) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        out.write(text)
    return solved, ks, pct


def _sidecar(path, suffix):
    root, ext = os.path.splitext(path)
    return f"{root}.{suffix}"


def cmd_generate(args, out=None):
    out = out or sys.stdout
    dgraph, truth = generate_cube(_cube_params(args))
    write_g2o(dgraph.graph, args.output, truth)
    write_vertices(truth, _sidecar(args.output, "truth.g2o"))
    write_manifest(dgraph, _sidecar(args.output, "partition.json"))
    print(f"wrote {dgraph.n} poses, {dgraph.m} measurements to {args.output}", file=out)
    return dgraph


def cmd_info(args, out=None):
    out = out or sys.stdout
    graph = load_g2o(args.input)
    print(f"{graph.n} poses, {graph.m} measurements (SE({graph.d}))", file=out)
    deg = graph.degrees()
    print(f"degree min/mean/max: {deg.min()}/{deg.mean():.2f}/{deg.max()}", file=out)
    print(f"connected: {'yes' if graph.is_connected() else 'no'}", file=out)
    if args.nodes:
        dg = partition(graph, args.nodes)
        for a in range(dg.n_nodes):
            sl = dg.node_slice(a)
            dd = deg[sl]
            n_inter = len(dg.inter_edges(a))
            print(
                f"node {a}: poses {sl.start}-{sl.stop - 1} ({sl.stop - sl.start}), inter edges {n_inter}, "
                f"degree mean {dd.mean():.2f} max {dd.max()}, neighbors {dg.neighbors[a]}",
                file=out,
            )
    return graph


_COMMANDS = {"solve": cmd_solve, "profile": cmd_profile, "generate": cmd_generate, "info": cmd_info}


def main(argv=None):
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        _COMMANDS[args.command](args)
    except (CLIError, ConfigError, ValueError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
