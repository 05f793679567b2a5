"""Command line entry point: ``generate``, ``run``, ``compare`` and ``bench``.

Run options mirror :class:`~samknn.harness.RunConfig`.  ``--config FILE``
loads a JSON object of RunConfig fields; flags given on the command line
override it.  Exit status is 0 on success, 2 on invalid input or I/O failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
import typing
from pathlib import Path

from .core import InputError
from .harness import (
    METHODS,
    SUITE_NAMES,
    RunConfig,
    builtin_suite,
    compare_methods,
    load_scenario,
    run_experiment,
    run_scenario,
)
from .synth import ANOMALY_KINDS, AnomalySpec, ScenarioSpec, format_float, save_scenario

_HELP = {
    "inputs": "built-in scenario names, 'suite' or stream CSV paths",
    "method": f"regressor: {', '.join(METHODS)}",
    "window": "sliding window length of the knn baseline",
    "stm_max": "STM length cap ('none' for unbounded)",
    "calibration": "extra steps after warm-up with no alarms",
    "sensors": "restrict to these 0-based channel indices",
    "output": "directory for report files",
    "curves": "also write residual and ITTE curves as CSV",
    "log_all": "log every decision, not only alarms",
}


def _optional_int(text: str) -> int | None:
    return None if text.lower() == "none" else int(text)


def _add_run_flags(parser: argparse.ArgumentParser, skip: tuple[str, ...] = ()) -> None:
    hints = typing.get_type_hints(RunConfig)
    for f in dataclasses.fields(RunConfig):
        if f.name in skip:
            continue
        flag = "--" + f.name.replace("_", "-")
        kw = dict(dest=f.name, default=argparse.SUPPRESS, help=_HELP.get(f.name))
        hint = hints[f.name]
        if hint is bool:
            parser.add_argument(flag, action=argparse.BooleanOptionalAction, **kw)
        elif f.name == "inputs":
            parser.add_argument(flag, "--input", nargs="+", metavar="REF", **kw)
        elif f.name == "sensors":
            parser.add_argument(flag, nargs="+", type=int, metavar="J", **kw)
        elif f.name == "stm_max":
            parser.add_argument(flag, type=_optional_int, **kw)
        elif f.name == "method":
            parser.add_argument(flag, choices=METHODS, **kw)
        elif hint is int:
            parser.add_argument(flag, type=int, **kw)
        elif hint is float:
            parser.add_argument(flag, type=float, **kw)
        else:
            parser.add_argument(flag, **kw)


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(data, dict):
        raise InputError(f"{path}: config must be a JSON object")
    return data


def _config(args: argparse.Namespace, path: str | None, **overrides) -> RunConfig:
    names = {f.name for f in dataclasses.fields(RunConfig)}
    d = _load_config_file(path)
    d.update({k: v for k, v in vars(args).items() if k in names})
    d.update(overrides)
    return RunConfig.from_dict(d)


# ------------------------------------------------------------------- verbs


def _cmd_generate(args) -> int:
    if args.scenario is not None:
        suite = builtin_suite(args.seed)
        if args.scenario not in suite:
            raise InputError(f"unknown scenario {args.scenario!r}; built-ins: {', '.join(SUITE_NAMES)}")
        spec = suite[args.scenario]
    else:
        anomaly = AnomalySpec(
            kind=args.kind,
            sensor=args.sensor,
            onset=args.onset,
            end=args.end,
            magnitude=args.magnitude,
        )
        spec = ScenarioSpec(
            n_sensors=args.n_sensors,
            duration=args.duration,
            seed=args.seed,
            noise=args.noise,
            anomaly=anomaly,
            name=args.name or args.kind,
        )
    stream, sidecar = save_scenario(spec, args.out)
    print(f"wrote {stream} and {sidecar}")
    return 0


def _cmd_run(args) -> int:
    config = _config(args, args.config)
    report = run_experiment(config)
    sys.stdout.write(report.to_text())
    return 0


def _cmd_compare(args) -> int:
    paths = args.configs or []
    methods = args.methods or []
    if not paths and not methods:
        raise InputError("compare needs --configs or --methods")
    configs = [_config(args, p, output=None) for p in paths]
    configs += [_config(args, None, method=m, output=None) for m in methods]
    table = compare_methods(configs)
    if args.out is not None:
        out = Path(args.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "comparison.csv").write_text(table.to_csv())
            (out / "comparison.txt").write_text(table.to_text())
        except OSError as exc:
            raise InputError(f"{exc.filename or out}: {exc.strerror}") from None
    sys.stdout.write(table.to_text())
    return 0


def _cmd_bench(args) -> int:
    config = _config(args, args.config, output=None, sensors=(args.sensor,), inputs=(args.scenario,))
    config.validate()
    scenario = load_scenario(args.scenario, config.seed)
    if not 0 <= args.sensor < scenario.stream.shape[1]:
        raise InputError(f"sensor {args.sensor} out of range")
    started = time.perf_counter()
    result = run_scenario(config, scenario)
    elapsed = time.perf_counter() - started
    rate = result.n_steps / elapsed if elapsed > 0 else float("inf")
    print(
        f"method={config.method} scenario={scenario.name} sensor={args.sensor} "
        f"steps={result.n_steps} seconds={elapsed:.3f} steps_per_second={format_float(round(rate, 1))}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="samknn", description="SAM-kNN streaming regression and anomaly detection")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic scenario as CSV plus sidecar")
    gen.add_argument("out", help="stream CSV path")
    gen.add_argument("--scenario", choices=SUITE_NAMES, help="a built-in scenario (other options then ignored)")
    gen.add_argument("--kind", choices=ANOMALY_KINDS, default="none")
    gen.add_argument("--sensor", type=int, default=0, help="0-based affected channel")
    gen.add_argument("--onset", type=int, default=0)
    gen.add_argument("--end", type=_optional_int, default=None, help="last anomalous step ('none' for open)")
    gen.add_argument("--magnitude", type=float, default=0.0)
    gen.add_argument("--n-sensors", type=int, default=29)
    gen.add_argument("--duration", type=int, default=23000)
    gen.add_argument("--noise", type=float, default=0.01)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--name", default="")
    gen.set_defaults(func=_cmd_generate)

    run = sub.add_parser("run", help="run one method and write a report")
    run.add_argument("--config", help="JSON file of run options")
    _add_run_flags(run)
    run.set_defaults(func=_cmd_run)

    cmp_ = sub.add_parser("compare", help="one row per (method, scenario)")
    cmp_.add_argument("--configs", nargs="+", metavar="FILE", help="JSON config files to compare")
    cmp_.add_argument("--methods", nargs="+", choices=METHODS, help="methods run with the shared flags")
    cmp_.add_argument("--out", help="directory for comparison.csv and comparison.txt")
    _add_run_flags(cmp_, skip=("method", "output"))
    cmp_.set_defaults(func=_cmd_compare)

    bench = sub.add_parser("bench", help="time one virtual sensor over a scenario")
    bench.add_argument("--config", help="JSON file of run options")
    bench.add_argument("--scenario", default="leak1", help="built-in name or stream CSV")
    bench.add_argument("--sensor", type=int, default=0, help="0-based channel to time")
    _add_run_flags(bench, skip=("inputs", "sensors", "output", "curves", "log_all"))
    bench.set_defaults(func=_cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"samknn: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"samknn: error: {exc.filename or ''}: {exc.strerror}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
