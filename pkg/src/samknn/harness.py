"""Experiment runner: load scenarios, preprocess, run a detector bank, report.

A run takes one :class:`RunConfig` (one method, one or more scenarios) and
yields a :class:`Report` with per-scenario TP/FP/FN, per-sensor final ITTE and
the alarm log.  Everything written to the report files is a deterministic
function of the config; wall-clock timings go to a separate file.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .baselines import OnlineLinearRegressor, WindowKnnRegressor
from .core import InputError
from .detection import AlarmRecord, DetectionScore, ThresholdConfig, VirtualSensorBank, score_scenario
from .regressor import SamConfig, SamKnnRegressor
from .synth import (
    AnomalySpec,
    ScenarioSpec,
    format_float,
    generate,
    read_sidecar,
    read_stream,
    sidecar_path,
    sidecar_window,
)

METHODS = ("sam", "knn", "linear")


# ------------------------------------------------------------------ scenarios


def _suite_specs(seed: int = 0) -> dict[str, ScenarioSpec]:
    def spec(i, name, **anomaly):
        return ScenarioSpec(seed=seed * 100 + i, anomaly=AnomalySpec(**anomaly), name=name)

    specs = [
        spec(1, "leak1", kind="leak", sensor=3, onset=9000, end=12500, magnitude=0.3),
        spec(2, "leak2", kind="leak", sensor=12, onset=11500, end=15000, magnitude=0.25),
        spec(3, "leak3", kind="leak", sensor=20, onset=14000, end=17500, magnitude=0.2),
        spec(4, "leak4", kind="leak", sensor=7, onset=6500, end=10000, magnitude=0.35),
        spec(5, "leak5", kind="leak", sensor=26, onset=10200, end=13000, magnitude=0.3),
        spec(6, "overflow", kind="overflow", sensor=5, onset=12000, end=13000, magnitude=0.5),
        spec(7, "gaussian_noise", kind="gaussian_noise", sensor=9, onset=13000, end=15000, magnitude=0.2),
        spec(8, "constant_offset", kind="constant_offset", sensor=15, onset=12500, end=14500, magnitude=0.5),
        spec(9, "stuck_zero", kind="stuck_zero", sensor=3, onset=15000, end=15300),
        spec(10, "shift", kind="shift", sensor=22, onset=11000, end=14000, magnitude=0.2),
    ]
    return {s.name: s for s in specs}


def builtin_suite(seed: int = 0) -> dict[str, ScenarioSpec]:
    """The ten built-in scenarios: five leaks and one of each sensor fault."""
    return _suite_specs(seed)


SUITE_NAMES = tuple(_suite_specs(0))


@dataclass
class Scenario:
    name: str
    stream: np.ndarray  # raw (steps x sensors)
    window: tuple[int, int] | None  # raw ground-truth window (inclusive)


@lru_cache(maxsize=16)
def _generated(spec: ScenarioSpec) -> tuple[np.ndarray, tuple[int, int] | None]:
    stream, window = generate(spec)
    stream.setflags(write=False)
    return stream, window


def scenario_refs(inputs: Sequence[str]) -> list[str]:
    """Expand ``suite`` into the ten built-in names, keeping order."""
    out = []
    for ref in inputs:
        out.extend(SUITE_NAMES if ref == "suite" else [ref])
    return out


def load_scenario(ref: str, seed: int = 0) -> Scenario:
    """A built-in scenario name or a stream CSV (with optional sidecar)."""
    suite = _suite_specs(seed)
    if ref in suite:
        stream, window = _generated(suite[ref])
        return Scenario(ref, stream, window)
    path = Path(ref)
    if not path.exists():
        raise InputError(f"{ref}: neither a built-in scenario ({', '.join(SUITE_NAMES)}) nor an existing file")
    try:
        times, stream = read_stream(path)
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    if len(times) and np.any(times != np.arange(times[0], times[0] + len(times))):
        raise InputError(f"{path}: time column must count up by one")
    side = sidecar_path(path)
    window = sidecar_window(read_sidecar(side)) if side.exists() else None
    if window is not None and len(times):
        window = (window[0] - int(times[0]), window[1] - int(times[0]))
    return Scenario(path.stem, stream, window)


# -------------------------------------------------------------- preprocessing


def preprocess(stream, w: int = 4, stride: int = 1) -> np.ndarray:
    """Per-channel mean of each length-``w`` window, advancing by ``stride``.

    The mean is taken relative to the first row of each window, so constant
    windows (and ``w=1``) reproduce their input exactly.
    """
    if w < 1 or stride < 1:
        raise InputError("preprocessing window and stride must be at least 1")
    x = np.asarray(stream, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n_out = 0 if len(x) < w else (len(x) - w) // stride + 1
    if n_out == 0:
        return np.empty((0, x.shape[1]))
    starts = np.arange(n_out) * stride
    x0 = x[starts]
    acc = np.zeros_like(x0)
    for off in range(w):
        acc += x[starts + off] - x0
    return x0 + acc / w


def output_times(n_raw: int, w: int = 4, stride: int = 1) -> np.ndarray:
    """Raw time step of the last reading in each preprocessing window."""
    n_out = 0 if n_raw < w else (n_raw - w) // stride + 1
    return np.arange(n_out, dtype=np.int64) * stride + (w - 1)


def map_window(window: tuple[int, int] | None, w: int, stride: int, n_raw: int) -> tuple[int, int] | None:
    """Ground-truth window in output time: outputs whose inputs touch it."""
    if window is None:
        return None
    times = output_times(n_raw, w, stride)
    lo, hi = window
    hit = times[(times >= lo) & (times - (w - 1) <= hi)]
    if len(hit) == 0:
        raise InputError(f"anomaly window [{lo}, {hi}] vanishes under preprocessing")
    return int(hit[0]), int(hit[-1])


# --------------------------------------------------------------------- config


@dataclass(frozen=True)
class RunConfig:
    """One method over one or more scenarios.

    ``inputs`` holds built-in scenario names, ``suite`` (all ten) or paths to
    stream CSVs.  ``sensors`` restricts the run to some virtual sensors.
    """

    inputs: tuple[str, ...] = ("suite",)
    method: str = "sam"
    k: int = 5
    l_min: int = 50
    l_max: int = 5000
    stm_max: int | None = 5000
    weighted: bool = False
    window: int = 1000
    learning_rate: float = 0.01
    threshold_mode: str = "adaptive"
    threshold_c: float = 4.0
    threshold_floor: float = 0.05
    threshold_window: int = 1000
    threshold_min_history: int = 100
    threshold_value: float = math.inf
    one_sided: bool = False
    freeze_on_alarm: bool = False
    calibration: int = 0
    preprocess_window: int = 4
    stride: int = 1
    batch_size: int = 200
    sensors: tuple[int, ...] | None = None
    seed: int = 0
    output: str | None = None
    curves: bool = False
    log_all: bool = False

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        if self.sensors is not None:
            object.__setattr__(self, "sensors", tuple(int(s) for s in self.sensors))

    def validate(self) -> None:
        if self.method not in METHODS:
            raise InputError(f"unknown method {self.method!r}; expected one of {', '.join(METHODS)}")
        if not self.inputs:
            raise InputError("no input scenarios given")
        if self.batch_size < 1:
            raise InputError("batch_size must be at least 1")
        if self.preprocess_window < 1 or self.stride < 1:
            raise InputError("preprocess_window and stride must be at least 1")
        if self.window < 1:
            raise InputError("window must be at least 1")
        if not self.learning_rate > 0:
            raise InputError("learning_rate must be positive")
        if self.calibration < 0:
            raise InputError("calibration must be non-negative")
        self.sam_config()
        self.threshold_config()
        for ref in scenario_refs(self.inputs):
            if ref not in SUITE_NAMES and not Path(ref).exists():
                raise InputError(f"input {ref!r} does not exist")

    def sam_config(self) -> SamConfig:
        return SamConfig(k=self.k, l_min=self.l_min, l_max=self.l_max, stm_max=self.stm_max, weighted=self.weighted)

    def threshold_config(self) -> ThresholdConfig:
        return ThresholdConfig(
            mode=self.threshold_mode,
            c=self.threshold_c,
            floor=self.threshold_floor,
            window=self.threshold_window,
            min_history=self.threshold_min_history,
            value=self.threshold_value,
            one_sided=self.one_sided,
        )

    def factory(self):
        if self.method == "sam":
            cfg = self.sam_config()
            return lambda j: SamKnnRegressor(cfg)
        if self.method == "knn":
            return lambda j: WindowKnnRegressor(k=self.k, window=self.window, weighted=self.weighted)
        return lambda j: OnlineLinearRegressor(learning_rate=self.learning_rate)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["inputs"] = list(self.inputs)
        d["sensors"] = None if self.sensors is None else list(self.sensors)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise InputError(f"unknown config keys: {', '.join(unknown)}")
        d = dict(d)
        if isinstance(d.get("inputs"), str):
            d["inputs"] = (d["inputs"],)
        if d.get("threshold_value") in ("inf", "Infinity"):
            d["threshold_value"] = math.inf
        return cls(**d)


# --------------------------------------------------------------------- report


@dataclass
class ScenarioResult:
    scenario: str
    method: str
    score: DetectionScore
    window: tuple[int, int] | None
    n_steps: int
    n_records: int
    n_alarms: int
    sensor_itte: dict[int, float]
    failed: dict[int, str]
    alarms: list[AlarmRecord] = field(repr=False)
    records: list[AlarmRecord] | None = field(default=None, repr=False)
    runtime: float = field(default=0.0, compare=False)


@dataclass
class Report:
    config: RunConfig
    results: list[ScenarioResult]

    def rows(self) -> list[dict]:
        return [_row(r) for r in self.results]

    def to_csv(self) -> str:
        return _csv(self.rows())

    def to_text(self) -> str:
        lines = [f"method: {self.config.method}", _table(self.rows()), ""]
        for r in self.results:
            lines.append(f"[{r.scenario}] final ITTE per sensor")
            for j in sorted(r.sensor_itte):
                note = f"  failed: {r.failed[j]}" if j in r.failed else ""
                lines.append(f"  s{j + 1}: {_fmt(r.sensor_itte[j])}{note}")
        return "\n".join(lines) + "\n"

    def runtime(self) -> dict:
        return {r.scenario: r.runtime for r in self.results}


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format_float(v)
    return str(v)


def _row(r: ScenarioResult) -> dict:
    return {
        "method": r.method,
        "scenario": r.scenario,
        "tp": r.score.tp,
        "fp": r.score.fp,
        "fn": r.score.fn,
        "steps": r.n_steps,
        "alarms": r.n_alarms,
        "failed": len(r.failed),
    }


def _csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    cols = list(rows[0])
    lines = [",".join(cols)] + [",".join("" if r[c] is None else _fmt(r[c]) for c in cols) for r in rows]
    return "\n".join(lines) + "\n"


def _table(rows: list[dict]) -> str:
    if not rows:
        return "(no rows)"
    cols = list(rows[0])
    cells = [[_fmt(r[c]) for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    out = ["  ".join(c.ljust(wd) for c, wd in zip(cols, widths))]
    out.append("  ".join("-" * wd for wd in widths))
    out.extend("  ".join(v.ljust(wd) for v, wd in zip(row, widths)) for row in cells)
    return "\n".join(out)


def alarm_log(records: Iterable[AlarmRecord]) -> str:
    """Line-delimited ``t,sensor,residual,threshold,alarm`` with a header."""
    lines = ["t,sensor,residual,threshold,alarm"]
    for r in records:
        lines.append(f"{r.index},{r.sensor + 1},{_fmt(r.residual)},{_fmt(r.threshold)},{int(r.alarm)}")
    return "\n".join(lines) + "\n"


def curve_log(records: Iterable[AlarmRecord]) -> str:
    """Per-sensor residual and running ITTE, for external plotting."""
    sums: dict[int, tuple[int, float]] = {}
    lines = ["t,sensor,residual,itte"]
    for r in records:
        n, s = sums.get(r.sensor, (0, 0.0))
        n, s = n + 1, s + r.residual * r.residual
        sums[r.sensor] = (n, s)
        lines.append(f"{r.index},{r.sensor + 1},{_fmt(r.residual)},{_fmt(math.sqrt(s / n))}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------------ run


def run_scenario(config: RunConfig, scenario: Scenario) -> ScenarioResult:
    w, stride = config.preprocess_window, config.stride
    raw = scenario.stream
    data = preprocess(raw, w, stride)
    times = output_times(len(raw), w, stride)
    window = map_window(scenario.window, w, stride, len(raw))
    if data.shape[1] < 2:
        raise InputError(f"{scenario.name}: need at least two sensors")
    bank = VirtualSensorBank(
        data.shape[1],
        config.factory(),
        threshold=config.threshold_config(),
        freeze_on_alarm=config.freeze_on_alarm,
    )
    bank.warmup += config.calibration
    skipped = set(range(data.shape[1])) - set(config.sensors) if config.sensors is not None else set()
    for j in skipped:
        bank.failed[j] = "not selected"
    keep_all = config.log_all or config.curves
    started = time.perf_counter()
    alarms: list[AlarmRecord] = []
    records: list[AlarmRecord] = [] if keep_all else None
    n_records = 0
    for lo in range(0, len(data), config.batch_size):
        hi = min(lo + config.batch_size, len(data))
        out = bank.step_batch(data[lo:hi], times[lo:hi])
        n_records += len(out)
        alarms.extend(r for r in out if r.alarm)
        if keep_all:
            records.extend(out)
    elapsed = time.perf_counter() - started
    for j in skipped:
        del bank.failed[j]
    score = score_scenario(alarms, window)
    active = [j for j in range(data.shape[1]) if j not in skipped]
    return ScenarioResult(
        scenario=scenario.name,
        method=config.method,
        score=score,
        window=window,
        n_steps=len(data),
        n_records=n_records,
        n_alarms=len(alarms),
        sensor_itte={j: float(bank.regressors[j].itte()) for j in active},
        failed=dict(sorted(bank.failed.items())),
        alarms=alarms,
        records=records,
        runtime=elapsed,
    )


def run_experiment(config: RunConfig) -> Report:
    """Run ``config.method`` on every input scenario; writes files if ``output`` is set."""
    config.validate()
    results = [run_scenario(config, load_scenario(ref, config.seed)) for ref in scenario_refs(config.inputs)]
    report = Report(config, results)
    if config.output is not None:
        write_report(report, config.output)
    return report


def write_report(report: Report, directory: str | Path) -> None:
    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
        # the output directory is left out so that reruns elsewhere compare equal
        settings = {k: v for k, v in report.config.to_dict().items() if k != "output"}
        (out / "config.json").write_text(json.dumps(_json_safe(settings), indent=2, sort_keys=True) + "\n")
        (out / "report.csv").write_text(report.to_csv())
        (out / "report.txt").write_text(report.to_text())
        for r in report.results:
            log = r.records if report.config.log_all else r.alarms
            (out / f"alarms_{r.scenario}.csv").write_text(alarm_log(log))
            if report.config.curves:
                (out / f"curves_{r.scenario}.csv").write_text(curve_log(r.records))
        (out / "runtime.json").write_text(json.dumps(report.runtime(), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise InputError(f"{exc.filename or out}: {exc.strerror}") from None


def _json_safe(d: dict) -> dict:
    return {k: ("inf" if isinstance(v, float) and math.isinf(v) else v) for k, v in d.items()}


# ----------------------------------------------------------------- comparison


@dataclass
class Comparison:
    reports: list[Report]

    def rows(self) -> list[dict]:
        return [row for rep in self.reports for row in rep.rows()]

    def to_csv(self) -> str:
        return _csv(self.rows())

    def to_text(self) -> str:
        return _table(self.rows()) + "\n"


def compare_methods(configs: Sequence[RunConfig], reports: Sequence[Report] | None = None) -> Comparison:
    """One row per (method, scenario), method-major.

    Every config must cover the same scenarios.  Precomputed ``reports`` (one
    per config) skip the runs.
    """
    if not configs:
        raise InputError("nothing to compare")
    sets = [(scenario_refs(c.inputs), c.seed) for c in configs]
    if any(s != sets[0] for s in sets[1:]):
        raise InputError("all compared configs must use the same scenarios and seed")
    if reports is None:
        reports = [run_experiment(c) for c in configs]
    elif len(reports) != len(configs):
        raise InputError("need one report per config")
    return Comparison(list(reports))
