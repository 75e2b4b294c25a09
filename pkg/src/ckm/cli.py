"""Command-line entry point: ``ckm <subcommand> ...``.

Exit codes: 0 success, 1 algorithmic failure, 2 input error.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from .basiclp import cost_shares, solve_basic
from .cluster import cluster
from .configlp import ConfigResourceError, PreassignFailure
from .instance import (InstanceFormatError, gen_gap_instance, gen_random, gen_suite_instance,
                       read_instance, write_instance)
from .oracle import OracleBudgetError, PipelineBundle, audit, exact_opt
from .round import (CuttingPlaneExhausted, RoundingError, RoundReport, ViolatedSet,
                    cutting_plane_solve, round_config, solve_basic_rounding, write_solution)

EXIT_OK, EXIT_ALGO, EXIT_INPUT = 0, 1, 2
U64_MAX = 2 ** 64 - 1


class InputError(Exception):
    """Bad flags or unreadable input; maps to exit code 2."""


class AlgorithmFailure(Exception):
    """Retries or iterations exhausted; maps to exit code 1."""


def _epsilon(text):
    value = float(text)
    if not 0 < value <= 2:
        raise argparse.ArgumentTypeError("epsilon must lie in (0, 2]")
    return value


def _seed(text):
    value = int(text)
    if not 0 <= value <= U64_MAX:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _triple(text):
    try:
        parts = [int(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError("expected nF,nC,k") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected nF,nC,k")
    return tuple(parts)


def _triple_pair(text):
    try:
        lo, hi = (int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected LO,HI") from None
    return lo, hi


def _seed_range(text):
    lo, sep, hi = text.partition("-")
    try:
        first, last = int(lo), int(hi) if sep else int(lo)
    except ValueError:
        raise argparse.ArgumentTypeError("expected A-B") from None
    if first < 0 or last < first:
        raise argparse.ArgumentTypeError("expected 0 <= A <= B")
    return first, last


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ckm", description="LP rounding for capacitated k-median")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, instance=True):
        if instance:
            p.add_argument("instance", help="instance file ('-' reads stdin)")
        p.add_argument("--epsilon", type=_epsilon, default=1.0)
        p.add_argument("--seed", type=_seed, default=0)
        p.add_argument("--max-iters", type=int, default=50)
        p.add_argument("--max-retries", type=int, default=200)
        p.add_argument("--trace", action="store_true", help="dump intermediate structures to stderr")
        p.add_argument("-o", "--output", help="write the main artifact here instead of stdout")

    gen = sub.add_parser("gen", help="generate an instance")
    src = gen.add_mutually_exclusive_group(required=True)
    src.add_argument("--gap", type=int, metavar="U", help="integrality-gap instance with U groups")
    src.add_argument("--random", type=_triple, metavar="nF,nC,k")
    src.add_argument("--suite", type=_seed, metavar="SEED", help="benchmark-suite instance")
    gen.add_argument("--L", type=float, default=100.0, help="inter-group distance for --gap")
    gen.add_argument("--cap-range", type=_triple_pair, default=(1, 3), metavar="LO,HI")
    gen.add_argument("--geometry", choices=["euclidean", "clustered"], default="euclidean")
    gen.add_argument("--seed", type=_seed, default=0)
    gen.add_argument("-o", "--output")

    common(sub.add_parser("lp", help="solve the basic LP and print its value"))
    rnd = sub.add_parser("round", help="run one rounding on the basic LP optimum")
    common(rnd)
    rnd.add_argument("--mode", choices=["basic", "config"], default="basic")
    common(sub.add_parser("solve", help="cutting-plane driver with the configuration rounding"))
    ex = sub.add_parser("exact", help="brute-force optimum")
    common(ex)
    ex.add_argument("--max-copies", type=int, default=None,
                    help="copies per facility (default k: soft capacities)")
    common(sub.add_parser("check", help="run both roundings and audit every invariant"))
    bench = sub.add_parser("bench", help="sweep seeds and print a ratio table")
    common(bench, instance=False)
    bench.add_argument("--seeds", type=_seed_range, default=(1, 10), metavar="A-B")
    bench.add_argument("--random", type=_triple, metavar="nF,nC,k",
                       help="fixed sizes instead of the benchmark suite")
    return parser


def _load(path):
    try:
        text = sys.stdin.read() if path == "-" else open(path, encoding="utf-8").read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return read_instance(text)
    except InstanceFormatError as exc:
        raise InputError(f"{path}: {exc}") from None


def _emit(text, path):
    if path:
        try:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as exc:
            raise InputError(f"cannot write {path}: {exc.strerror}") from None
    else:
        sys.stdout.write(text)


def _trace_config(trace, err):
    for e in trace.cmst.edges:
        direction = f" {e.tail}->{e.head}" if e.color == "grey" else ""
        err.write(f"mst_edge {e.u} {e.v} {e.length:.12g} {e.color}{direction}\n")
    for p in trace.forest.nodes:
        err.write(f"node {p.id} members {','.join(map(str, p.members))} weight {p.weight:.12g} "
                  f"parent {p.parent if p.parent is not None else '-'}\n")
    for r, found in trace.decomposition.subtrees.items():
        for T in found:
            err.write(f"subtree tree {r} root {T.root} collected {','.join(map(str, T.collected))}\n")
    for g in trace.groups:
        err.write(f"group nodes {','.join(map(str, g.nodes))} center {g.center} "
                  f"demand {g.demand:.12g} opened {g.opened}\n")


def _trace_cut(cut, err):
    coefs = " ".join(f"{v:.12g}" for v in np.concatenate([np.ravel(cut.coef_x), cut.coef_y]))
    err.write(f"cut B {','.join(map(str, cut.origin))} const {cut.const:.12g} coef {coefs}\n")


def cmd_gen(args):
    if args.gap is not None:
        try:
            inst = gen_gap_instance(args.gap, args.L)
        except ValueError as exc:
            raise InputError(str(exc)) from None
    elif args.suite is not None:
        inst = gen_suite_instance(args.suite)
    else:
        nf, nc, k = args.random
        try:
            inst = gen_random(nf, nc, k, cap_range=args.cap_range, seed=args.seed,
                              geometry=args.geometry)
        except ValueError as exc:
            raise InputError(str(exc)) from None
    _emit(write_instance(inst), args.output)


def cmd_lp(args):
    inst = _load(args.instance)
    frac = solve_basic(inst)
    _emit(f"lp_value {frac.lp_value:.12g}\n", args.output)


def cmd_round(args):
    inst = _load(args.instance)
    if args.mode == "basic":
        sol, report, *_ = solve_basic_rounding(inst)
    else:
        rng = np.random.default_rng(args.seed)
        frac = solve_basic(inst)
        shares = cost_shares(inst, frac)
        clus = cluster(inst, shares)
        out = _run_config(inst, frac, shares, clus, args, rng)
        if isinstance(out, ViolatedSet):
            if args.trace:
                _trace_cut(out.cut, sys.stderr)
            raise AlgorithmFailure(f"configuration system infeasible for B={out.B}; "
                                   "use 'solve' to add cuts")
        sol, trace = out
        if args.trace:
            _trace_config(trace, sys.stderr)
        report = RoundReport("config", sol.opened_total, sol.cost, frac.lp_value, inst.k,
                             trace.breakdown)
    _finish(sol, report, inst, args)


def _run_config(inst, frac, shares, clus, args, rng):
    try:
        return round_config(inst, frac, shares, clus, args.epsilon, rng,
                            max_retries=args.max_retries)
    except PreassignFailure as exc:
        raise AlgorithmFailure(str(exc)) from None


def _finish(sol, report, inst, args):
    if args.output:
        _emit(write_solution(sol, inst), args.output)
        sys.stdout.write(report.to_text())
    else:
        sys.stdout.write(write_solution(sol, inst) + report.to_text())


def cmd_solve(args):
    inst = _load(args.instance)
    rng = np.random.default_rng(args.seed)
    try:
        res = cutting_plane_solve(inst, args.epsilon, rng, max_iters=args.max_iters,
                                  max_retries=args.max_retries)
    except CuttingPlaneExhausted as exc:
        raise AlgorithmFailure(f"{exc} (last master value {exc.history[-1].lp_value:.12g})") from None
    except PreassignFailure as exc:
        raise AlgorithmFailure(str(exc)) from None
    if args.trace:
        for cut in res.cuts:
            _trace_cut(cut, sys.stderr)
        _trace_config(res.trace, sys.stderr)
    _finish(res.solution, res.report, inst, args)


def cmd_exact(args):
    inst = _load(args.instance)
    try:
        res = exact_opt(inst, max_copies=args.max_copies)
    except OracleBudgetError as exc:
        raise AlgorithmFailure(str(exc)) from None
    except ValueError as exc:
        raise InputError(str(exc)) from None
    lines = [f"opt_cost {res.opt_cost:.12g}", f"multisets {res.multisets}"]
    lines += [f"open {i} {c}" for i, c in sorted(res.opt_open.items())]
    lines += [f"assign {j} {int(i)}" for j, i in enumerate(res.assignment)]
    _emit("\n".join(lines) + "\n", args.output)


def cmd_check(args):
    inst = _load(args.instance)
    rng = np.random.default_rng(args.seed)
    sol, _, frac, shares, clus, btrace = solve_basic_rounding(inst)
    out = _run_config(inst, frac, shares, clus, args, rng)
    csol = ctrace = None
    note = "config_rounding ran"
    if isinstance(out, ViolatedSet):
        note = f"config_rounding skipped: configuration system infeasible for B={out.B}"
    else:
        csol, ctrace = out
    report = audit(PipelineBundle(inst, frac, shares, clus, sol, btrace, csol, ctrace))
    text = "\n".join([note] + report.lines()) + f"\naudit {'ok' if report.ok else 'FAIL'}\n"
    _emit(text, args.output)
    if not report.ok:
        raise AlgorithmFailure("audit found invariant failures")


BENCH_COLUMNS = ["seed", "lp_value", "opt", "opt_hard", "basic_cost", "config_cost",
                 "basic_opened", "config_opened", "k", "cuts"]


def cmd_bench(args):
    first, last = args.seeds
    rows = ["\t".join(BENCH_COLUMNS)]
    rng = np.random.default_rng(args.seed)
    for seed in range(first, last + 1):
        if args.random:
            nf, nc, k = args.random
            try:
                inst = gen_random(nf, nc, k, cap_range=(1, -(-nc // k) + 1), seed=seed)
            except ValueError as exc:
                raise InputError(str(exc)) from None
        else:
            inst = gen_suite_instance(seed)
        sol, report, *_ = solve_basic_rounding(inst)
        opt = exact_opt(inst).opt_cost
        opt_hard = exact_opt(inst, max_copies=1).opt_cost
        try:
            res = cutting_plane_solve(inst, args.epsilon, rng, max_iters=args.max_iters,
                                      max_retries=args.max_retries)
            cfg = (f"{res.solution.cost:.12g}", str(res.solution.opened_total),
                   str(res.report.cuts_emitted))
            lp = res.report.lp_value
        except (CuttingPlaneExhausted, PreassignFailure, RoundingError):
            cfg = ("fail", "fail", "fail")
            lp = report.lp_value
        rows.append("\t".join([str(seed), f"{lp:.12g}", f"{opt:.12g}", f"{opt_hard:.12g}",
                               f"{sol.cost:.12g}", cfg[0], str(sol.opened_total), cfg[1],
                               str(inst.k), cfg[2]]))
    _emit("\n".join(rows) + "\n", args.output)


COMMANDS = {"gen": cmd_gen, "lp": cmd_lp, "round": cmd_round, "solve": cmd_solve,
            "exact": cmd_exact, "check": cmd_check, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    for name in ("max_iters", "max_retries"):
        if getattr(args, name, 1) < 1:
            print(f"ckm: --{name.replace('_', '-')} must be at least 1", file=sys.stderr)
            return EXIT_INPUT
    try:
        COMMANDS[args.command](args)
    except InputError as exc:
        print(f"ckm: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (AlgorithmFailure, ConfigResourceError) as exc:
        print(f"ckm: {exc}", file=sys.stderr)
        return EXIT_ALGO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
