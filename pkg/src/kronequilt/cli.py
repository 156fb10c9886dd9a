"""Command-line entry point: ``kronequilt <command> ...``.

Exit codes: 0 on success, 2 on invalid input, 3 when a size or edge budget
guard refuses the request.
"""

from __future__ import annotations

import argparse
import math
import sys

from . import bench
from .errors import ResourceGuardError
from .graph import EdgeList, read_edgelist, write_edgelist
from .kronecker import (
    PRESETS,
    InitiatorChain,
    InitiatorMatrix,
    kpgm_sample,
    kpgm_sample_exact,
    naive_kpgm_sample,
)
from .magm import (
    MagmModel,
    expected_magm_edges,
    load_model_config,
    max_multiplicity,
    naive_magm_sample,
    quilt_sample,
    read_attributes,
    sample_attributes,
    write_attributes,
)
from .rng import as_generator, derived_generator, draw_root
from .speedup import fast_magm_sample, select_threshold
from .stats import GRAPH_FIELDS, PARTITION_FIELDS, degree_distribution, largest_scc_fraction, write_csv

EXIT_OK, EXIT_INVALID, EXIT_GUARD = 0, 2, 3


def _theta(args) -> InitiatorMatrix:
    if args.theta is not None:
        try:
            values = [float(v) for v in args.theta.split(",")]
        except ValueError:
            raise ValueError(f"--theta expects four comma-separated numbers, got {args.theta!r}") from None
        if len(values) != 4:
            raise ValueError(f"--theta expects four comma-separated numbers, got {args.theta!r}")
        return InitiatorMatrix(*values)
    return PRESETS[args.theta_preset]


def _open_out(path):
    return sys.stdout if path in (None, "-") else open(path, "w", newline="\n")


def _emit_graph(graph: EdgeList, args) -> None:
    out = _open_out(args.out)
    try:
        if args.format == "csv":
            out.write("source,target\n")
            for s, t in graph.edges.tolist():
                out.write(f"{s},{t}\n")
        else:
            write_edgelist(graph, out)
    finally:
        if out is not sys.stdout:
            out.close()


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="root seed (default: fresh entropy)")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--theta", help="initiator entries t00,t01,t10,t11 used at every level")
    group.add_argument("--theta-preset", choices=sorted(PRESETS), default="theta1")


def _add_output(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=("edgelist", "csv"), default="edgelist")


def cmd_sample_kpgm(args) -> int:
    chain = InitiatorChain.repeated(_theta(args), args.d)
    rng = as_generator(args.seed)
    if args.method == "naive":
        graph = naive_kpgm_sample(chain, rng)
    elif args.method == "exact":
        graph = kpgm_sample_exact(chain, rng)
    else:
        graph = kpgm_sample(chain, rng, retry_factor=args.retry_factor)
    _emit_graph(graph, args)
    return EXIT_OK


def _magm_model(args) -> MagmModel:
    if args.config:
        return load_model_config(args.config)
    if args.n is None:
        raise ValueError("sample-magm needs --n or --config")
    return MagmModel.uniform(_theta(args), args.mu, args.n, args.d)


def cmd_sample_magm(args) -> int:
    model = _magm_model(args)
    # Separate streams for attributes and edges, so that feeding back a saved
    # assignment with the same seed reproduces the graph.
    root = args.seed if args.seed is not None else draw_root(as_generator(None))
    rng = derived_generator(root, 1)
    if args.attrs:
        attrs = read_attributes(args.attrs)
        if attrs.n != model.n or attrs.d != model.d:
            raise ValueError(f"attribute file has n={attrs.n}, d={attrs.d}; model has n={model.n}, d={model.d}")
    else:
        attrs = sample_attributes(model, derived_generator(root, 0))
    if args.attrs_out:
        write_attributes(attrs, args.attrs_out)
    expected = expected_magm_edges(model)
    if expected > args.edge_budget:
        raise ResourceGuardError(f"{expected:.3g} expected edges exceed budget {args.edge_budget:.3g}")
    slack = model.d - math.floor(math.log2(model.n))
    if slack >= 2:
        print(
            f"warning: d={model.d} exceeds floor(log2 n) by {slack}; each Kronecker block draws "
            f"about 4**{slack} times more edges than it keeps",
            file=sys.stderr,
        )
    if args.naive:
        graph = naive_magm_sample(model, attrs, rng)
    elif args.fast:
        plan = select_threshold(attrs, model.chain, bprime=args.bprime, expected_edges=args.expected_edges)
        print(plan.summary(), file=sys.stderr)
        graph = fast_magm_sample(model, attrs, rng, plan=plan, workers=args.workers, kpgm=args.kpgm)
    else:
        graph = quilt_sample(model, attrs, rng, workers=args.workers, kpgm=args.kpgm)
    _emit_graph(graph, args)
    return EXIT_OK


def cmd_stats(args) -> int:
    out = _open_out(args.out)
    try:
        if args.kind == "edgelist":
            graph = read_edgelist(args.path)
            deg = degree_distribution(graph)
            out.write("n,edges,scc_fraction,max_out_degree,max_in_degree\n")
            out.write(
                f"{graph.n},{len(graph)},{largest_scc_fraction(graph):.9g},"
                f"{int(deg.out_degrees.max(initial=0))},{int(deg.in_degrees.max(initial=0))}\n"
            )
            return EXIT_OK
        model = MagmModel.uniform(_theta(args), args.mu, args.n, args.d)
        rng = as_generator(args.seed)
        rows = []
        for trial in range(args.trials):
            attrs = sample_attributes(model, rng)
            row = {"n": model.n, "d": model.d, "mu": args.mu, "trial": trial}
            if args.kind == "partition":
                row["B"] = max_multiplicity(attrs.lambdas)
            else:
                graph = quilt_sample(model, attrs, rng)
                row["edges"] = len(graph)
                row["scc_fraction"] = f"{largest_scc_fraction(graph):.9g}"
            rows.append(row)
        write_csv(rows, PARTITION_FIELDS if args.kind == "partition" else GRAPH_FIELDS, out)
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def _int_list(text: str) -> tuple[int, ...]:
    """``"8:14"`` (inclusive) or ``"8,10,12"``."""
    if ":" in text:
        lo, hi = (int(v) for v in text.split(":"))
        return tuple(range(lo, hi + 1))
    return tuple(int(v) for v in text.split(","))


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


def cmd_bench(args) -> int:
    spec = bench.ExperimentSpec(
        name=args.experiment,
        theta=args.theta_preset,
        mu=args.mu,
        log2_n=args.log2_n,
        ds=args.ds or (),
        mus=args.mus or bench.DEFAULT_MUS,
        trials=args.trials,
        seed=args.seed if args.seed is not None else 0,
        sampler=args.sampler,
        max_log2_n=args.max_log2_n,
        edge_budget=args.edge_budget,
        parallel_trials=args.parallel_trials,
    )
    rows = bench.run_experiment(spec)
    out = _open_out(args.out)
    try:
        bench.write_rows(rows, spec.fields, out)
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kronequilt", description="Kronecker and multiplicative attribute graph sampling.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample-kpgm", help="sample a stochastic Kronecker graph on 2**d nodes")
    _add_common(p)
    _add_output(p)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--method", choices=("rejection", "exact", "naive"), default="rejection")
    p.add_argument("--retry-factor", type=float, default=1000.0)
    p.set_defaults(func=cmd_sample_kpgm)

    p = sub.add_parser("sample-magm", help="sample a multiplicative attribute graph")
    _add_common(p)
    _add_output(p)
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int, help="attribute count (default: ceil(log2 n))")
    p.add_argument("--mu", type=float, default=0.5)
    p.add_argument("--config", help="model config file (overrides --n/--d/--mu/--theta)")
    p.add_argument("--attrs", help="attribute assignment file to use instead of sampling")
    p.add_argument("--attrs-out", help="write the attribute assignment used")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--fast", action="store_true", help="split off heavy configurations")
    mode.add_argument("--naive", action="store_true", help="quadratic reference sampler")
    p.add_argument("--bprime", type=int, help="fixed heavy-configuration threshold for --fast")
    p.add_argument("--expected-edges", type=float, help="edge-count proxy for threshold selection")
    p.add_argument("--kpgm", choices=("exact", "rejection"), default="exact", help="Kronecker block sampler")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--edge-budget", type=float, default=1e8)
    p.set_defaults(func=cmd_sample_magm)

    p = sub.add_parser("stats", help="partition sizes, sampled-graph statistics, or stats of an edge list file")
    p.add_argument("kind", choices=("partition", "graph", "edgelist"))
    p.add_argument("path", nargs="?", help="edge list file (kind=edgelist)")
    _add_common(p)
    p.add_argument("--n", type=int, default=1024)
    p.add_argument("--d", type=int)
    p.add_argument("--mu", type=float, default=0.5)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("bench", help="run one experiment and write CSV")
    p.add_argument("experiment", choices=bench.EXPERIMENTS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--theta-preset", choices=sorted(PRESETS), default="theta1")
    p.add_argument("--mu", type=float, default=0.5)
    p.add_argument("--log2-n", type=_int_list, default=tuple(range(8, 15)), help="sizes as lo:hi or a,b,c")
    p.add_argument("--ds", type=_int_list, help="dimensions for d-sweep")
    p.add_argument("--mus", type=_float_list, help="attribute probabilities for mu experiments")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--sampler", choices=("quilt", "fast"))
    p.add_argument("--max-log2-n", type=int, default=16)
    p.add_argument("--edge-budget", type=float, default=1e8)
    p.add_argument("--parallel-trials", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "kind", None) == "edgelist" and not args.path:
        parser.error("stats edgelist needs a path")
    try:
        return args.func(args)
    except ResourceGuardError as exc:
        print(f"kronequilt: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (ValueError, OSError) as exc:
        print(f"kronequilt: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
