"""Experiment harness: run benchmarks, plan block sizes and balance, generate graphs.

Exit codes for ``run``: 0 converged, 2 iteration cap hit, 1 any error.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import balancer, generators, pipeline
from .algorithms import make_algorithm, run_reference
from .daemon import AcceleratorProfile
from .engine import ComputationModel, RunConfig, dump_attributes, run
from .graph import even_sizes, load_edge_list, partition_graph


class _Parser(argparse.ArgumentParser):
    # usage errors must exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(1)


def _profile_from_flag(name: str, lanes, per_unit_cost, call_overhead) -> AcceleratorProfile:
    if name == "cpu-like":
        return AcceleratorProfile.cpu_like()
    if name == "gpu-like":
        return AcceleratorProfile.gpu_like()
    if name == "custom":
        return AcceleratorProfile(
            lanes=lanes if lanes is not None else 4,
            per_unit_cost=per_unit_cost if per_unit_cost is not None else 1.0,
            call_overhead=call_overhead if call_overhead is not None else 0.0,
        )
    raise ValueError(f"unknown daemon profile {name!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="accelgraph")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one benchmark configuration")
    p_run.add_argument("--config", help="JSON file supplying the same keys; flags override")
    p_run.add_argument("--algo", choices=["sssp", "pagerank", "lp"])
    p_run.add_argument("--graph", help="edge-list file path")
    p_run.add_argument("--partitions", type=int)
    p_run.add_argument("--daemons-per-node", type=int)
    p_run.add_argument("--daemon-profile", choices=["cpu-like", "gpu-like", "custom"])
    p_run.add_argument("--lanes", type=int)
    p_run.add_argument("--per-unit-cost", type=float)
    p_run.add_argument("--call-overhead", type=float)
    p_run.add_argument("--model", choices=["bsp", "gas"])
    p_run.add_argument("--block-size", help="'auto' or a positive integer")
    p_run.add_argument("--enable-cache", action="store_true", default=None)
    p_run.add_argument("--cache-capacity", type=int)
    p_run.add_argument("--enable-skip", action="store_true", default=None)
    p_run.add_argument("--balance", choices=["none", "data", "capacity"])
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--metrics-out", help="write per-iteration metrics records here")
    p_run.add_argument("--dump-out", help="write the final attribute dump here (default stdout)")
    p_run.add_argument("--sources", help="comma-separated SSSP source ids")
    p_run.add_argument("--node-costs", help="comma-separated per-node unit costs (balance=data)")
    p_run.add_argument("--partition-sizes", help="comma-separated explicit partition sizes")
    p_run.add_argument("--max-iterations", type=int)

    p_blk = sub.add_parser("plan-block", help="block-size planning: closed form vs brute force")
    p_blk.add_argument("download_cost", type=float)
    p_blk.add_argument("compute_cost", type=float)
    p_blk.add_argument("upload_cost", type=float)
    p_blk.add_argument("call_cost", type=float)
    p_blk.add_argument("units", type=int)

    p_bal = sub.add_parser("plan-balance", help="workload-balancing plan and predicted makespans")
    p_bal.add_argument("mode", choices=["data", "capacity"])
    p_bal.add_argument("--costs", help="comma-separated per-node unit costs (data mode)")
    p_bal.add_argument("--total", type=int, help="total data entities (data mode)")
    p_bal.add_argument("--sizes", help="comma-separated fragment sizes (capacity mode)")
    p_bal.add_argument("--max-factor", type=float, help="max capacity factor (capacity mode)")

    p_gen = sub.add_parser("gen-graph", help="generate a corpus edge-list file")
    p_gen.add_argument("kind", choices=["path", "cycle", "star", "components", "random"])
    p_gen.add_argument("n", type=int)
    p_gen.add_argument("--k", type=int, default=2, help="component count (components kind)")
    p_gen.add_argument("--p", type=float, default=0.05, help="extra-edge probability")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)

    return parser


def _parse_int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip() != ""]


def _parse_float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip() != ""]


_RUN_DEFAULTS = {
    "algo": "sssp",
    "graph": None,
    "partitions": 1,
    "daemons_per_node": 1,
    "daemon_profile": "cpu-like",
    "lanes": None,
    "per_unit_cost": None,
    "call_overhead": None,
    "model": "bsp",
    "block_size": "256",
    "enable_cache": False,
    "cache_capacity": 1024,
    "enable_skip": False,
    "balance": "none",
    "seed": 0,
    "metrics_out": None,
    "dump_out": None,
    "sources": None,
    "node_costs": None,
    "partition_sizes": None,
    "max_iterations": None,
}


def _merge_run_options(args) -> dict:
    options = dict(_RUN_DEFAULTS)
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            loaded = json.load(fh)
        unknown = set(loaded) - set(_RUN_DEFAULTS)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        options.update(loaded)
    for key in _RUN_DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            options[key] = value
    return options


def cmd_run(args) -> int:
    opts = _merge_run_options(args)
    if opts["graph"] is None:
        print("error: no graph file given", file=sys.stderr)
        return 1
    if opts["partitions"] < 1:
        print(f"error: partitions must be >= 1, got {opts['partitions']}", file=sys.stderr)
        return 1
    if opts["daemons_per_node"] < 1:
        print("error: daemons-per-node must be >= 1", file=sys.stderr)
        return 1

    block_size = opts["block_size"]
    if isinstance(block_size, str) and block_size != "auto":
        block_size = int(block_size)
    if isinstance(block_size, int) and block_size < 1:
        print("error: block size must be >= 1 or 'auto'", file=sys.stderr)
        return 1

    vertices, edges = load_edge_list(opts["graph"])
    if not vertices:
        print("error: graph file has no edges", file=sys.stderr)
        return 1
    m = opts["partitions"]

    if opts["partition_sizes"] is not None:
        sizes = (
            _parse_int_list(opts["partition_sizes"])
            if isinstance(opts["partition_sizes"], str)
            else list(opts["partition_sizes"])
        )
        if len(sizes) != m:
            print("error: partition-sizes length must equal partitions", file=sys.stderr)
            return 1
    else:
        sizes = even_sizes(len(vertices), m)

    node_costs = None
    if opts["node_costs"] is not None:
        node_costs = (
            _parse_float_list(opts["node_costs"])
            if isinstance(opts["node_costs"], str)
            else list(opts["node_costs"])
        )
        if len(node_costs) != m:
            print("error: node-costs length must equal partitions", file=sys.stderr)
            return 1

    profile = _profile_from_flag(
        opts["daemon_profile"], opts["lanes"], opts["per_unit_cost"], opts["call_overhead"]
    )
    node_profiles = None
    if node_costs is not None:
        node_profiles = [
            AcceleratorProfile(profile.lanes, cost, profile.call_overhead)
            for cost in node_costs
        ]

    if opts["balance"] == "data":
        costs = node_costs if node_costs is not None else [profile.per_unit_cost] * m
        problem = balancer.BalanceProblem(
            len(vertices), [balancer.NodeCost(c) for c in costs]
        )
        sizes = balancer.balance_data(problem)
    elif opts["balance"] == "capacity":
        factors = balancer.balance_capacity(
            balancer.CapacityProblem(sizes, max_factor=1.0 / profile.per_unit_cost)
        )
        node_profiles = [
            AcceleratorProfile(
                profile.lanes,
                (1.0 / f) if f > 0 else profile.per_unit_cost,
                profile.call_overhead,
            )
            for f in factors
        ]

    graph = partition_graph(vertices, edges, sizes)
    sources = None
    if opts["sources"] is not None:
        sources = (
            _parse_int_list(opts["sources"])
            if isinstance(opts["sources"], str)
            else list(opts["sources"])
        )
    algorithm = make_algorithm(opts["algo"], vertices, graph.out_degree, sources)

    config = RunConfig(
        partitions=m,
        daemons_per_node=opts["daemons_per_node"],
        daemon_profile=profile,
        node_profiles=node_profiles,
        block_size=block_size,
        enable_cache=bool(opts["enable_cache"]),
        cache_capacity=opts["cache_capacity"],
        enable_skip=bool(opts["enable_skip"]),
        seed=opts["seed"],
        max_iterations=opts["max_iterations"],
    )
    attrs, metrics = run(graph, algorithm, ComputationModel(opts["model"]), config)

    if opts["metrics_out"]:
        metrics.write(opts["metrics_out"])
    dump = dump_attributes(attrs, algorithm)
    if opts["dump_out"]:
        with open(opts["dump_out"], "w", encoding="ascii") as fh:
            fh.write(dump)
    else:
        sys.stdout.write(dump)
    return 0 if metrics.converged else 2


def cmd_plan_block(args) -> int:
    try:
        model = pipeline.PipelineCostModel(
            args.download_cost, args.compute_cost, args.upload_cost, args.call_cost, args.units
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    sweep_s, sweep_t = pipeline.sweep_integer(model)
    try:
        b_opt, t_min = pipeline.optimal_block_size(model)
        s, b = pipeline.integerize(model, b_opt)
        t_int = pipeline.total_time(model, s)
        gap = abs(t_int - sweep_t) / sweep_t if sweep_t else 0.0
        print(f"closed-form: b_opt={b_opt:.6g} t_min={t_min:.6g}")
        print(f"integerized: s={s} b={b} t={t_int:.6g}")
        print(f"brute-force: s={sweep_s} t={sweep_t:.6g}")
        print(f"relative gap: {gap:.4%}")
    except pipeline.NoInteriorOptimumError as exc:
        print(f"degenerate model: {exc}")
        print(f"brute-force: s={sweep_s} b=1 t={sweep_t:.6g}")
    return 0


def cmd_plan_balance(args) -> int:
    if args.mode == "data":
        if not args.costs or args.total is None:
            print("error: data mode needs --costs and --total", file=sys.stderr)
            return 1
        costs = _parse_float_list(args.costs)
        problem = balancer.BalanceProblem(args.total, [balancer.NodeCost(c) for c in costs])
        sizes = balancer.balance_data(problem)
        even = even_sizes(args.total, len(costs))
        print(f"plan: sizes={sizes}")
        print(f"balanced makespan: {balancer.makespan(sizes, costs):.6g}")
        print(f"even makespan: {balancer.makespan(even, costs):.6g}")
        print(f"optimum (real-valued): {balancer.real_valued_makespan(problem):.6g}")
    else:
        if not args.sizes or args.max_factor is None:
            print("error: capacity mode needs --sizes and --max-factor", file=sys.stderr)
            return 1
        sizes = _parse_int_list(args.sizes)
        try:
            factors = balancer.balance_capacity(
                balancer.CapacityProblem(sizes, max_factor=args.max_factor)
            )
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        span = max(sizes) / args.max_factor
        even_factor = [args.max_factor] * len(sizes)
        print(f"plan: factors={[round(f, 9) for f in factors]}")
        print(f"balanced makespan: {span:.6g}")
        print(f"even-provisioned makespan: {balancer.makespan(sizes, [1.0 / f for f in even_factor]):.6g}")
        print(f"optimum: {span:.6g}")
    return 0


def cmd_gen_graph(args) -> int:
    try:
        edges = generators.generate(args.kind, args.n, k=args.k, p=args.p, seed=args.seed)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    generators.write_edge_list(edges, args.out)
    print(f"wrote {len(edges)} edges to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "plan-block":
            return cmd_plan_block(args)
        if args.command == "plan-balance":
            return cmd_plan_balance(args)
        if args.command == "gen-graph":
            return cmd_gen_graph(args)
    except Exception as exc:  # one-line diagnostic, non-zero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 1


if __name__ == "__main__":
    sys.exit(main())
