"""Command-line entry point: run programs, serve nodes, drive clocks,
and analyze systems, all from one binary.

Exit codes: 0 for success (a held property, a found time), 1 for a
negative verdict (counterexample, nothing reached), 2 for usage or
config problems.  Analysis output is deterministic: the same invocation
prints the same bytes.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from dataclasses import replace
from fractions import Fraction

from . import auction
from .analysis import (
    CounterExample,
    Earliest,
    Holds,
    Inconclusive,
    NotReached,
    Step,
    find_earliest,
    mc,
)
from .ltl import FormulaError, parse_formula
from .machine import (
    ExprNode,
    Loc,
    PublishOut,
    ResolveError,
    ZenoSuspicion,
    build_defs,
    node_delta,
    node_mte,
    run_quiescent,
)
from .runtime import ConfigError, TickerDisconnected, load_config, run_node, run_node_with_ticker, ticker
from .simmodel import close, successors
from .syntax import ParseError, ScopeError, parse_program
from .timebase import fin, parse_time
from .values import const_str


class UsageError(Exception):
    pass


def _fraction_arg(text: str, what: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as e:
        raise UsageError(f"bad {what} {text!r}: {e}") from None


def _parse_initial(spec: str):
    """Registry lookup: 'auction:DS' or 'auction-reduced:DS' where DS is
    a comma-separated delay set (rationals, 'inf' allowed)."""
    name, sep, ds_text = spec.partition(":")
    if not sep or not ds_text:
        raise UsageError(f"--initial must look like auction:1/10, got {spec!r}")
    try:
        ds = [parse_time(part.strip()) for part in ds_text.split(",")]
    except ValueError as e:
        raise UsageError(f"bad delay set in {spec!r}: {e}") from None
    if name == "auction":
        return auction.initial, ds, auction.DEFAULT_ITEMS
    if name == "auction-reduced":
        return auction.reduced_initial, ds, auction.REDUCED_ITEMS
    raise UsageError(f"unknown system {name!r}; known: auction, auction-reduced")


def _resolve_formula(text: str, items) -> "auction.Formula":
    named = auction.formulas(items)
    if text in named:
        return named[text]
    try:
        return parse_formula(text)
    except FormulaError as e:
        known = ", ".join(sorted(named))
        raise UsageError(f"{e}\n(known formula names: {known})") from None


def _step_dict(s: Step) -> dict:
    return {
        "dt": str(s.dt),
        "kind": s.kind,
        "detail": s.detail,
        "logs": list(s.logs),
        "elapsed": str(s.elapsed),
        "props": list(s.true_props),
    }


def _print_steps(steps) -> None:
    for s in steps:
        props = ", ".join(s.true_props)
        print(f"  t={s.elapsed}\t{s.kind} +{s.dt}\tprops: {props}")
        for line in s.logs:
            print(f"    | {line}")


def _cmd_mc(args) -> int:
    make, ds, items = _parse_initial(args.initial)
    formula = _resolve_formula(args.formula, items)
    ctx, st0 = make(ds, explore_errors=args.explore_socket_errors == "on")
    if args.fuel:
        ctx = replace(ctx, fuel=args.fuel)
    bound = _fraction_arg(args.bound, "bound")
    result = mc(ctx, st0, formula, bound, auction.valuation)
    if isinstance(result, Holds):
        if args.output == "json":
            print(json.dumps({"result": True, "formula": result.formula,
                              "explored": result.explored}, sort_keys=True))
        else:
            print("Result: true")
            print(f"(explored {result.explored} states within bound {bound})")
        return 0
    assert isinstance(result, CounterExample)
    if args.output == "json":
        print(json.dumps({
            "result": False,
            "formula": result.formula,
            "explored": result.explored,
            "init_index": result.init_index,
            "init_props": list(result.init_props),
            "loops": result.loops,
            "steps": [_step_dict(s) for s in result.steps],
        }, sort_keys=True))
        return 1
    print("Result: counterexample")
    print(f"Formula: {result.formula}")
    init_props = ", ".join(result.init_props)
    print(f"  t=0\tinitial (closure branch {result.init_index})\tprops: {init_props}")
    _print_steps(result.steps)
    if result.loops:
        print("  (the final state repeats forever)")
    return 1


def _cmd_find_earliest(args) -> int:
    make, ds, _items = _parse_initial(args.initial)
    ctx, st0 = make(ds, explore_errors=args.explore_socket_errors == "on")
    result = find_earliest(ctx, st0, args.prop, auction.valuation, cap=args.cap)
    if isinstance(result, Earliest):
        if args.output == "json":
            print(json.dumps({"found": True, "time": str(result.time),
                              "explored": result.explored,
                              "steps": [_step_dict(s) for s in result.steps]},
                             sort_keys=True))
        else:
            print(f"Earliest time: {result.time}")
        return 0
    if isinstance(result, NotReached):
        if args.output == "json":
            print(json.dumps({"found": False, "explored": result.explored}, sort_keys=True))
        else:
            print(f"Not reached (explored {result.explored} states, space exhausted)")
        return 1
    assert isinstance(result, Inconclusive)
    if args.output == "json":
        print(json.dumps({"found": False, "inconclusive": True, "cap": result.cap},
                         sort_keys=True))
    else:
        print(f"Inconclusive: hit the {result.cap}-state cap before finding it")
    return 1


def _cmd_simulate(args) -> int:
    make, ds, _items = _parse_initial(args.initial)
    ctx, st0 = make(ds, explore_errors=args.explore_socket_errors == "on")
    bound = _fraction_arg(args.bound, "bound") if args.bound is not None else None
    records = []

    def emit(elapsed, kind, logs):
        records.append({"t": str(elapsed), "kind": kind, "logs": list(logs)})
        if args.output != "json":
            print(f"t={elapsed}\t{kind}")
            for line in logs:
                print(f"    | {line}")

    branches = close(ctx, st0)
    state, logs = branches[0]
    emit(state.elapsed, "start", logs)
    steps = 0
    while args.steps is None or steps < args.steps:
        if bound is not None and state.elapsed >= bound:
            break
        if bound is None:
            nxt = successors(ctx, state)
        else:
            nxt = successors(ctx, state, fin(bound - state.elapsed))
        if not nxt:
            emit(state.elapsed, "quiescent", ())
            break
        label, state = nxt[0]
        emit(state.elapsed, f"{label.kind} +{label.dt}", label.logs)
        steps += 1
    if args.output == "json":
        print(json.dumps(records, sort_keys=True))
    return 0


def _cmd_run(args) -> int:
    try:
        src = open(args.program).read()
    except OSError as e:
        raise UsageError(str(e)) from None
    prog = parse_program(src)
    defs, main = build_defs(prog, {})
    node = ExprNode(Loc("local", 0), Fraction(0), main)
    budget = _fraction_arg(args.max_time, "time limit")
    while True:
        node, actions = run_quiescent(defs, node, args.fuel)
        for act in actions:
            if isinstance(act, PublishOut):
                print(const_str(act.value))
        mte = node_mte(node)
        if mte.is_inf:
            break
        step = mte.as_fraction()
        if node.clock + step > budget:
            print(f"(stopped at the {budget} time-unit limit)", file=sys.stderr)
            break
        node = node_delta(node, mte)
    return 0


def _cmd_node(args) -> int:
    cfg = load_config(args.config)
    try:
        if args.with_ticker:
            asyncio.run(run_node_with_ticker(cfg))
        else:
            asyncio.run(run_node(cfg))
    except KeyboardInterrupt:
        pass
    return 0


def _cmd_ticker(args) -> int:
    try:
        asyncio.run(ticker(args.host, args.port, args.period_ms, args.max_ticks))
    except KeyboardInterrupt:
        return 0
    except TickerDisconnected as e:
        print(f"ticker: {e}", file=sys.stderr)
        return 1
    return 0


def _add_analysis_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--initial", required=True,
                   help="system registry entry, e.g. auction:1/10 or auction-reduced:0,inf")
    p.add_argument("--explore-socket-errors", choices=("on", "off"), default="on",
                   help="branch on connect failures (default on)")
    p.add_argument("--output", choices=("text", "json"), default="text")


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="distorc",
                                  description="Orc programs: run, deploy, analyze.")
    sub = top.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="evaluate a program locally, no network")
    p.add_argument("program", help="program file")
    p.add_argument("--max-time", default="1000", help="stop after this much logical time")
    p.add_argument("--fuel", type=int, default=100_000)
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("node", help="run one deployment node from a config file")
    p.add_argument("config", help="node config (JSON)")
    p.add_argument("--with-ticker", action="store_true",
                   help="also run this node's ticker in-process")
    p.set_defaults(fn=_cmd_node)

    p = sub.add_parser("ticker", help="drive a node's logical clock")
    p.add_argument("host")
    p.add_argument("port", type=int)
    p.add_argument("period_ms", type=int)
    p.add_argument("--max-ticks", type=int, default=None)
    p.set_defaults(fn=_cmd_ticker)

    p = sub.add_parser("mc", help="model-check a formula over all runs")
    _add_analysis_flags(p)
    p.add_argument("--formula", required=True,
                   help="a named formula (commitAllNoErrors, ...) or LTL text")
    p.add_argument("--bound", required=True, help="time horizon (rational)")
    p.add_argument("--fuel", type=int, default=None, help="Zeno guard step budget")
    p.set_defaults(fn=_cmd_mc)

    p = sub.add_parser("find-earliest", help="earliest time a predicate can hold")
    _add_analysis_flags(p)
    p.add_argument("--prop", required=True, help="predicate, e.g. sold(1910)")
    p.add_argument("--cap", type=int, default=2_000_000)
    p.set_defaults(fn=_cmd_find_earliest)

    p = sub.add_parser("simulate", help="print one deterministic bounded trace")
    _add_analysis_flags(p)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--bound", default=None, help="time horizon (rational)")
    p.set_defaults(fn=_cmd_simulate)

    return top


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ConfigError, ParseError, ScopeError, ResolveError, FormulaError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ZenoSuspicion as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
