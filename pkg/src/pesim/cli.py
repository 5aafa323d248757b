"""Command-line front end: ``pesim <subcommand> ...``.

Exit codes: 0 pass, 1 verification failure, 2 usage or simulation error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import behavior
from .designs import DESIGN_NAMES, device_report, get_design
from .netlist import NetlistError, parse_netlist, validate
from .sim import OscillationDetected, SimConfig, Simulator, StimulusError, logic_char, parse_stimulus
from .vcd import write_vcd
from .verify import (Bench, CampaignError, Report, Scenario, cascade_check, charge_share_scan,
                     exhaustive_equivalence, race_sweep, random_sequence, switching_audit)

EXIT_PASS, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


class UsageError(Exception):
    pass


def _design(name: str):
    try:
        return get_design(name)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _offsets(text: str) -> list[int]:
    try:
        if ":" in text:
            a, b = (int(x) for x in text.split(":"))
            return list(range(a, b + 1))
        return [int(x) for x in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"bad --offsets {text!r}; expected a:b or a,b,c") from exc


def _pairs(text: str) -> tuple[str, int]:
    if text == "exhaustive":
        return "exhaustive", 0
    if text.startswith("random:"):
        try:
            return "random", int(text.split(":", 1)[1])
        except ValueError:
            pass
    raise UsageError(f"bad --pairs {text!r}; expected exhaustive or random:N")


def _emit_report(report: Report, args) -> int:
    fmt = args.format or "table"
    print(report.to_json() if fmt == "json" else report.to_table(), end="")
    if args.report:
        text = report.to_table() if args.format == "table" else report.to_json()
        Path(args.report).write_text(text)
    return EXIT_PASS if report.passed else EXIT_FAIL


# -- subcommands ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    if bool(args.netlist) == bool(args.design):
        raise UsageError("simulate needs exactly one of --netlist or --design")
    if args.netlist:
        if not args.stim:
            raise UsageError("--netlist needs --stim")
        netlist = parse_netlist(Path(args.netlist).read_text(), Path(args.netlist).stem)
        stim = parse_stimulus(Path(args.stim).read_text())
        wave, _ = Simulator(netlist).run(stim)
        watch = netlist.outputs
    else:
        design = _design(args.design)
        bench = Bench(design)
        if args.stim:
            wave, _ = bench.sim.run(parse_stimulus(Path(args.stim).read_text()))
        else:
            if args.scenario:
                scenario = Scenario.from_dict(json.loads(Path(args.scenario).read_text()))
            elif args.ip:
                ips = tuple(behavior.vector(v) for v in args.ip.split(","))
                la = design.neutral_la if args.la is None else args.la
                scenario = Scenario(design.name, ips, (la,) * len(ips))
            else:
                raise UsageError("--design needs --stim, --scenario or --ip")
            obs, wave = bench.replay(scenario)
            for k, o in enumerate(obs):
                want = design.expected(scenario.ip_sequence[k], scenario.final_la(k))
                print(f"cycle {k}: expected {behavior.to_str(want)} observed "
                      f"{''.join(logic_char(v) for v in o)}")
        watch = bench.netlist.outputs
    for name in watch:
        changes = wave.logic_changes(name)
        trace = " ".join(f"{t}:{logic_char(v)}" for t, v in changes)
        print(f"{name:<10} {trace}")
    if args.vcd:
        with open(args.vcd, "w") as fh:
            write_vcd(wave, fh)
    return EXIT_PASS


def cmd_verify(args) -> int:
    design = _design(args.design)
    la_values = None if args.la is None else (args.la,)
    return _emit_report(exhaustive_equivalence(design.name, la_values, jobs=args.jobs), args)


def cmd_race(args) -> int:
    design = _design(args.design)
    directions = ("fall", "rise") if args.direction == "both" else (args.direction,)
    try:
        report = race_sweep(design.name, _offsets(args.offsets), directions, jobs=args.jobs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return _emit_report(report, args)


def cmd_sharescan(args) -> int:
    design = _design(args.design)
    mode, n = _pairs(args.pairs)
    try:
        report = charge_share_scan(design.name, mode, n=n, seed=args.seed, jobs=args.jobs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return _emit_report(report, args)


def cmd_power(args) -> int:
    design = _design(args.design)
    seq = random_sequence(design.width, args.cycles, args.seed)
    return _emit_report(switching_audit(design.name, seq, seed=args.seed), args)


def cmd_cascade(args) -> int:
    try:
        report = cascade_check(args.bits, vectors=args.vectors, netlist_vectors=args.netlist_vectors,
                               seed=args.seed, jobs=args.jobs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return _emit_report(report, args)


def cmd_dump(args) -> int:
    design = _design(args.design)
    if args.counts:
        print(json.dumps(device_report(design.name), indent=2, sort_keys=True))
        return EXIT_PASS
    netlist = design.build()
    text = netlist.to_text()
    if args.output:
        Path(args.output).write_text(text)
    else:
        print(text, end="")
    return EXIT_PASS if not validate(netlist) else EXIT_FAIL


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pesim", description="Switch-level priority encoder simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    def campaign(name, help_text, design=True):
        sp = sub.add_parser(name, help=help_text)
        if design:
            sp.add_argument("--design", default="robust8",
                            help=f"{', '.join(DESIGN_NAMES)} or cascade<N> (default robust8)")
        sp.add_argument("--report", metavar="PATH", help="write the report to PATH")
        sp.add_argument("--format", choices=("json", "table"),
                        help="report format (stdout defaults to table, --report files to json)")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes")
        sp.add_argument("--seed", type=int, default=0)
        return sp

    sp = sub.add_parser("simulate", help="simulate a netlist or a built-in design")
    sp.add_argument("--netlist", metavar="PATH")
    sp.add_argument("--design")
    sp.add_argument("--stim", metavar="PATH", help="stimulus file")
    sp.add_argument("--scenario", metavar="PATH", help="scenario JSON, e.g. a failure from a report")
    sp.add_argument("--ip", help="comma-separated input vectors, one per cycle, bit 0 leftmost")
    sp.add_argument("--la", type=int, choices=(0, 1))
    sp.add_argument("--vcd", metavar="PATH", help="write the waveform as VCD")
    sp.set_defaults(func=cmd_simulate)

    sp = campaign("verify", "exhaustive static equivalence against the golden model")
    sp.add_argument("--la", type=int, choices=(0, 1), help="only this look-ahead value")
    sp.set_defaults(func=cmd_verify)

    sp = campaign("race", "late look-ahead sweep")
    sp.add_argument("--offsets", default="1:24", help="a:b (inclusive) or a,b,c ticks after the edge")
    sp.add_argument("--direction", choices=("fall", "rise", "both"), default="both")
    sp.set_defaults(func=cmd_race)

    sp = campaign("sharescan", "consecutive input pair scan")
    sp.add_argument("--pairs", default="exhaustive", help="exhaustive or random:N")
    sp.set_defaults(func=cmd_sharescan)

    sp = campaign("power", "switching audit over a seeded random sequence")
    sp.add_argument("--cycles", type=int, default=1000)
    sp.set_defaults(func=cmd_power)

    sp = campaign("cascade", "build a cascaded encoder and check it", design=False)
    sp.add_argument("--bits", type=int, default=16)
    sp.add_argument("--vectors", type=int, default=100_000, help="random behavioural vectors")
    sp.add_argument("--netlist-vectors", type=int, default=1000, help="random vectors simulated")
    sp.set_defaults(func=cmd_cascade)

    sp = sub.add_parser("dump", help="print a built-in design as netlist text")
    sp.add_argument("--design", default="robust8")
    sp.add_argument("--output", metavar="PATH")
    sp.add_argument("--counts", action="store_true", help="device counts with breakdown instead")
    sp.set_defaults(func=cmd_dump)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_ERROR
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"pesim: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (NetlistError, StimulusError, OscillationDetected, CampaignError, OSError, ValueError) as exc:
        print(f"pesim {args.command}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
