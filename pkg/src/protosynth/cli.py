"""Command line front end.

Exit codes: 0 verified / pass, 1 counterexamples or property failure,
2 timeout, 3 configuration error.
"""

from __future__ import annotations

import argparse
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .model import (
    SPECS,
    Setting,
    SpecError,
    encode_state_space,
    machine_from_json,
    machine_to_json,
    scenario_from_json,
    scenario_is_valid,
    scenario_to_json,
)
from .orchestrator import RunConfig, bench, format_bench_table, synthesize
from .properties import (
    SettingMismatch,
    builtin_atomic_commit,
    builtin_floodset,
    evaluate,
)
from .scenarios import Phase, final_phase
from .simulator import format_trace, run
from .verifier import validate

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_TIMEOUT = 2
EXIT_CONFIG = 3


def _protocol_arg(name: str) -> str:
    return name.replace("-", "_")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="synth", description="Protocol synthesis toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize a protocol state machine")
    p.add_argument("--protocol", required=True, choices=["consensus", "atomic-commit"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--f", type=int, required=True)
    p.add_argument("--rounds", type=int, required=True)
    p.add_argument("--internal", type=int, default=2)
    p.add_argument("--mode", choices=["mcts", "mcts-dfs", "ggms"], default="ggms")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--time-limit", type=float, default=None, help="seconds")
    p.add_argument("--out", default=None, help="write the machine JSON here")
    p.add_argument("--log", default=None, help="write the per-episode CSV here")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("verify", help="exhaustively check a machine")
    p.add_argument("--machine", required=True)
    p.add_argument("--phase", default="final", help='phase id or "final"')
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("simulate", help="run a machine under one scenario")
    p.add_argument("--machine", required=True)
    p.add_argument("--scenario", required=True)

    p = sub.add_parser("builtin", help="emit a reference protocol")
    p.add_argument("kind", choices=["floodset", "atomic-commit"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--f", type=int, required=True)
    p.add_argument("--rounds", type=int, required=True)
    p.add_argument("--internal", type=int, default=2)
    p.add_argument("--out", default=None)

    p = sub.add_parser("bench", help="run the mode-comparison benchmark")
    p.add_argument("--config", required=True, help="TOML benchmark description")
    return parser


def cmd_synth(args) -> int:
    try:
        setting = Setting(n=args.n, r=args.rounds, f=args.f, k=args.internal)
        config = RunConfig(
            protocol=_protocol_arg(args.protocol),
            setting=setting,
            mode=_protocol_arg(args.mode),
            seed=args.seed,
            time_limit=args.time_limit,
            workers=args.workers,
            machine_out=args.out,
            log_out=args.log,
        )
    except (SpecError, ValueError) as exc:
        print("configuration error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    result = synthesize(config)
    spec = SPECS[config.protocol]()
    space = encode_state_space(spec, setting.k)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(machine_to_json(result.machine, space))
    print("status: %s after %d episodes (%.1f s)"
          % (result.status, len(result.episodes), result.wall_time))
    return EXIT_OK if result.status == "verified" else EXIT_TIMEOUT


def _load_machine(path: str):
    with open(path) as fh:
        machine = machine_from_json(fh.read())
    if machine.spec_name not in SPECS:
        raise SpecError("unknown protocol %r in machine file" % machine.spec_name)
    spec = SPECS[machine.spec_name]()
    space = encode_state_space(spec, machine.setting.k)
    return machine, spec, space


def cmd_verify(args) -> int:
    try:
        machine, spec, space = _load_machine(args.machine)
        setting = machine.setting
        if args.phase == "final":
            phase = final_phase(setting)
        else:
            phase = Phase(int(args.phase))
            if not (0 <= phase.phase_id <= setting.r + 1):
                raise SpecError("phase must be in [0, r+1]")
    except (OSError, SpecError, ValueError, KeyError) as exc:
        print("configuration error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    cexs = validate(machine, setting, spec, space, phase, workers=args.workers)
    if not cexs:
        print("verified: no counterexamples in phase %d" % phase.phase_id)
        return EXIT_OK
    print("%d counterexample(s):" % len(cexs), file=sys.stderr)
    for cex in cexs:
        print(scenario_to_json(cex.scenario))
    return EXIT_FAIL


def cmd_simulate(args) -> int:
    try:
        machine, spec, space = _load_machine(args.machine)
        with open(args.scenario) as fh:
            scenario = scenario_from_json(fh.read())
        if not scenario_is_valid(scenario, machine.setting, space):
            raise SpecError("scenario does not fit the machine's setting")
    except (OSError, SpecError, ValueError, KeyError) as exc:
        print("configuration error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    trace = run(machine, scenario, machine.setting, space)
    print(format_trace(trace, space))
    verdict = evaluate(spec, scenario, trace, space)
    if verdict.ok:
        print("result: pass")
        return EXIT_OK
    print("result: fail (%s)" % ", ".join(v for v, _ in verdict.violations))
    return EXIT_FAIL


def cmd_builtin(args) -> int:
    try:
        setting = Setting(n=args.n, r=args.rounds, f=args.f, k=args.internal)
        if args.kind == "floodset":
            spec = SPECS["consensus"]()
            space = encode_state_space(spec, setting.k)
            machine = builtin_floodset(setting, space, spec)
        else:
            spec = SPECS["atomic_commit"]()
            space = encode_state_space(spec, setting.k)
            machine = builtin_atomic_commit(setting, space, spec)
    except (SpecError, SettingMismatch) as exc:
        print("configuration error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    text = machine_to_json(machine, space)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        print(text)
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        with open(args.config, "rb") as fh:
            doc = tomllib.load(fh)
        repeats = int(doc.get("repeats", 1))
        configs = []
        for row in doc.get("runs", []):
            setting = Setting(
                n=int(row["n"]),
                r=int(row["rounds"]),
                f=int(row["f"]),
                k=int(row.get("internal", 2)),
            )
            configs.append(
                RunConfig(
                    protocol=_protocol_arg(row["protocol"]),
                    setting=setting,
                    mode=_protocol_arg(row.get("mode", "ggms")),
                    seed=int(row.get("seed", 0)),
                    time_limit=row.get("time_limit"),
                )
            )
        if not configs:
            raise SpecError("benchmark config has no [[runs]] entries")
    except (OSError, SpecError, ValueError, KeyError, tomllib.TOMLDecodeError) as exc:
        print("configuration error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    table = bench(configs, repeats)
    print(format_bench_table(table))
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "builtin": cmd_builtin,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
