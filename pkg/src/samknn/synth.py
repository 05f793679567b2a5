"""Seeded synthetic pressure-sensor streams with one injected anomaly.

The baseline mimics a small water network sampled every five minutes
(288 steps per day).  Two latent demands drive every sensor: a residential
one with a double daily peak, a weekly harmonic and day-to-day level changes,
and a commercial one with a weekday office-hours peak.  Sensor i sees the mix

    D_i(t) = mix_i * res(t) + (1 - mix_i) * com(t)

through its own head-loss curve,

    p_i(t) = a_i - b_i * D_i(t) ** e_i + boost_i * pump(t) + noise,

where a booster pump lifts the pressure of an eastern zone on weekdays only.
No channel is an affine function of any single other channel, and
weekends form a second operating regime that recurs every week.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterator

import numpy as np

from .core import InputError

STEPS_PER_DAY = 288
STEPS_PER_WEEK = 7 * STEPS_PER_DAY

ANOMALY_KINDS = ("none", "leak", "overflow", "gaussian_noise", "constant_offset", "stuck_zero", "shift")

# leak drop on the leak sensor and its two nearest neighbours
LEAK_FACTORS = (1.0, 0.5, 0.25)

# scale of the head-loss coefficients
HEAD_LOSS_SCALE = 0.03

# booster pump head scale and start/stop ramp length (steps)
PUMP_BOOST = 0.15
PUMP_RAMP = 36

# weekday office-hours demand peak
COMMERCIAL_PEAK = 0.9

# weekly demand harmonic
WEEKLY_AMPLITUDE = 0.1

# spread of the day-to-day demand level
DAY_LEVEL_NOISE = 0.04


@dataclass(frozen=True)
class AnomalySpec:
    kind: str = "none"
    sensor: int = 0
    onset: int = 0
    end: int | None = None  # inclusive; None means until the end of the stream
    magnitude: float = 0.0
    ramp: int = STEPS_PER_DAY  # leak ramp-in length, in steps


@dataclass(frozen=True)
class ScenarioSpec:
    n_sensors: int = 29
    duration: int = 23000
    seed: int = 0
    noise: float = 0.01
    anomaly: AnomalySpec = field(default_factory=AnomalySpec)
    name: str = ""

    def validate(self) -> None:
        a = self.anomaly
        if a.kind not in ANOMALY_KINDS:
            raise InputError(f"unknown anomaly kind {a.kind!r}; expected one of {', '.join(ANOMALY_KINDS)}")
        if self.n_sensors < 2:
            raise InputError("a scenario needs at least two sensors")
        if self.duration < 1:
            raise InputError("duration must be positive")
        if self.noise < 0:
            raise InputError("noise must be non-negative")
        if a.kind == "none":
            return
        if not 0 <= a.sensor < self.n_sensors:
            raise InputError(f"anomaly sensor {a.sensor} outside 0..{self.n_sensors - 1}")
        end = self.anomaly_end
        if not (0 <= a.onset < end < self.duration) and not (a.end is None and 0 <= a.onset < self.duration):
            raise InputError(f"need 0 <= onset < end <= duration, got onset={a.onset} end={a.end}")
        if a.kind == "leak" and a.ramp < 1:
            raise InputError("leak ramp must be at least one step")

    @property
    def anomaly_end(self) -> int:
        return self.duration - 1 if self.anomaly.end is None else self.anomaly.end

    @property
    def window(self) -> tuple[int, int] | None:
        """Ground-truth anomaly window (inclusive), or None without an anomaly."""
        if self.anomaly.kind == "none":
            return None
        return (self.anomaly.onset, self.anomaly_end)


@dataclass
class BaselineModel:
    positions: np.ndarray  # (n, 2) sensor layout in the unit square
    mix: np.ndarray  # residential share of the demand seen by each sensor
    a: np.ndarray  # static head
    b: np.ndarray  # head-loss coefficient
    exponent: np.ndarray  # head-loss curve exponent
    boost: np.ndarray  # head added by the booster pump (zero outside its zone)
    phase: np.ndarray  # daily pattern phases
    day_level: np.ndarray  # per-day residential demand level

    def neighbours(self, sensor: int, count: int = 2) -> list[int]:
        d = np.linalg.norm(self.positions - self.positions[sensor], axis=1)
        d[sensor] = np.inf
        return [int(i) for i in np.argsort(d, kind="stable")[:count]]


def _smoothstep(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return 0.5 - 0.5 * np.cos(np.pi * u)


def baseline_model(spec: ScenarioSpec) -> BaselineModel:
    rng = np.random.default_rng([spec.seed, 0])
    n = spec.n_sensors
    positions = rng.uniform(0.0, 1.0, size=(n, 2))
    # the business district sits at the origin of the layout
    mix = 0.2 + 0.8 * np.clip(np.linalg.norm(positions, axis=1) / math.sqrt(2), 0.0, 1.0)
    a = rng.uniform(45.0, 75.0, size=n)
    b = HEAD_LOSS_SCALE * rng.uniform(4.0, 12.0, size=n)
    exponent = rng.uniform(1.5, 3.0, size=n)
    # the pumped zone is the east side of the layout
    zone = positions[:, 0] > 0.6
    zone[np.argmax(positions[:, 0])] = True
    boost = PUMP_BOOST * rng.uniform(1.0, 2.0, size=n) * zone
    phase = rng.uniform(-0.3, 0.3, size=2)
    n_days = spec.duration // STEPS_PER_DAY + 2
    level = np.empty(n_days)
    level[0] = 1.0
    for d in range(1, n_days):
        level[d] = 1.0 + 0.7 * (level[d - 1] - 1.0) + DAY_LEVEL_NOISE * rng.standard_normal()
    return BaselineModel(positions, mix, a, b, exponent, boost, phase, level)


def demand(model: BaselineModel, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(residential, commercial) latent demand at steps ``t``."""
    day = t / STEPS_PER_DAY
    hour = np.mod(t, STEPS_PER_DAY) * 24.0 / STEPS_PER_DAY
    # day levels interpolated between day midpoints
    level = np.interp(day - 0.5, np.arange(len(model.day_level)), model.day_level)
    res = level * (
        1.0
        + 0.3 * np.sin(2 * np.pi * day + model.phase[0])
        + 0.12 * np.sin(4 * np.pi * day + model.phase[1])
    ) + WEEKLY_AMPLITUDE * np.sin(2 * np.pi * t / STEPS_PER_WEEK)
    weekday = (np.mod(np.floor(day), 7) < 5).astype(float)
    office = np.sin(np.pi * np.clip((hour - 7.0) / 11.0, 0.0, 1.0)) ** 2
    com = 0.3 + COMMERCIAL_PEAK * weekday * office
    return res, com


def pump_schedule(t: np.ndarray, ramp: int | None = None) -> np.ndarray:
    """Booster pump output in [0, 1].

    The pump starts ramping up on Monday 00:00 and down on Saturday 00:00;
    week day 0 is a Monday.
    """
    ramp = PUMP_RAMP if ramp is None else ramp
    week_t = np.mod(np.asarray(t, dtype=np.float64), STEPS_PER_WEEK)
    stop = 5.0 * STEPS_PER_DAY
    if ramp <= 0:
        return (week_t < stop).astype(float)
    return np.where(week_t < stop, _smoothstep(week_t / ramp), 1.0 - _smoothstep((week_t - stop) / ramp))


def baseline(spec: ScenarioSpec) -> tuple[np.ndarray, np.ndarray]:
    """Noisy anomaly-free stream (duration x n) and its noiseless version."""
    model = baseline_model(spec)
    t = np.arange(spec.duration, dtype=np.float64)
    res, com = demand(model, t)
    D = model.mix[None, :] * res[:, None] + (1.0 - model.mix[None, :]) * com[:, None]
    clean = (
        model.a[None, :]
        - model.b[None, :] * D ** model.exponent[None, :]
        + model.boost[None, :] * pump_schedule(t)[:, None]
    )
    rng = np.random.default_rng([spec.seed, 1])
    noisy = clean + spec.noise * rng.standard_normal(clean.shape)
    return noisy, clean


def generate(spec: ScenarioSpec) -> tuple[np.ndarray, tuple[int, int] | None]:
    """The scenario stream (duration x n) and its ground-truth anomaly window."""
    spec.validate()
    stream, _ = baseline(spec)
    a = spec.anomaly
    if a.kind == "none":
        return stream, None
    lo, hi = spec.window
    sl = slice(lo, hi + 1)
    t = np.arange(lo, hi + 1, dtype=np.float64)
    j = a.sensor
    if a.kind == "leak":
        model = baseline_model(spec)
        drop = a.magnitude * _smoothstep((t - lo + 1) / a.ramp)
        for sensor, factor in zip([j] + model.neighbours(j), LEAK_FACTORS):
            stream[sl, sensor] -= factor * drop
    elif a.kind == "overflow":
        stream[sl, j] += a.magnitude * (t - lo + 1) / STEPS_PER_DAY
    elif a.kind == "gaussian_noise":
        rng = np.random.default_rng([spec.seed, 2])
        stream[sl, j] += a.magnitude * rng.standard_normal(hi - lo + 1)
    elif a.kind in ("constant_offset", "shift"):
        stream[sl, j] += a.magnitude
    elif a.kind == "stuck_zero":
        stream[sl, j] = 0.0
    return stream, spec.window


def affected_sensors(spec: ScenarioSpec) -> list[int]:
    a = spec.anomaly
    if a.kind == "none":
        return []
    if a.kind == "leak":
        return [a.sensor] + baseline_model(spec).neighbours(a.sensor)
    return [a.sensor]


# ------------------------------------------------------------------ file formats


def format_float(x: float) -> str:
    """Shortest round-tripping decimal (never exponent notation)."""
    return np.format_float_positional(float(x), unique=True, trim="-")


def write_stream(path: str | Path, stream: np.ndarray, start: int = 0) -> None:
    """CSV with header ``t,s1,...,sn`` and one row per time step."""
    stream = np.asarray(stream)
    n = stream.shape[1]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(["t"] + [f"s{i + 1}" for i in range(n)]) + "\n")
        for i, row in enumerate(stream):
            fh.write(str(start + i) + "," + ",".join(format_float(v) for v in row) + "\n")


class StreamFormatError(InputError):
    pass


def replay(path: str | Path) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(t, observation)`` from a stream CSV, in file order."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return
        if not header or header[0].strip() != "t" or len(header) < 3:
            raise StreamFormatError(f"{path}:1: expected header 't,s1,...,sn'")
        arity = len(header)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != arity:
                raise StreamFormatError(f"{path}:{lineno}: expected {arity} fields, got {len(row)}")
            try:
                t = int(row[0])
                obs = np.array([float(v) for v in row[1:]])
            except ValueError as exc:
                raise StreamFormatError(f"{path}:{lineno}: {exc}") from None
            if not np.all(np.isfinite(obs)):
                raise StreamFormatError(f"{path}:{lineno}: non-finite reading")
            yield t, obs


def read_stream(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    rows = list(replay(path))
    if not rows:
        return np.empty(0, dtype=np.int64), np.empty((0, 0))
    return np.array([t for t, _ in rows], dtype=np.int64), np.vstack([o for _, o in rows])


_SIDECAR_KEYS = ("anomaly_kind", "sensor", "onset", "end", "magnitude")


def write_sidecar(path: str | Path, spec: ScenarioSpec) -> None:
    """Key-value ground truth (``key=value`` per line)."""
    a = spec.anomaly
    values = {
        "anomaly_kind": a.kind,
        "sensor": a.sensor,
        "onset": a.onset,
        "end": spec.anomaly_end if a.kind != "none" else "",
        "magnitude": format_float(a.magnitude),
        "ramp": a.ramp,
        "name": spec.name,
        "n_sensors": spec.n_sensors,
        "duration": spec.duration,
        "seed": spec.seed,
        "noise": format_float(spec.noise),
    }
    with open(path, "w") as fh:
        for key, value in values.items():
            fh.write(f"{key}={value}\n")


def read_sidecar(path: str | Path) -> dict:
    path = Path(path)
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise StreamFormatError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    missing = [k for k in _SIDECAR_KEYS if k not in out]
    if missing:
        raise StreamFormatError(f"{path}: missing keys {', '.join(missing)}")
    return out


def sidecar_window(meta: dict) -> tuple[int, int] | None:
    if meta["anomaly_kind"] == "none":
        return None
    return int(meta["onset"]), int(meta["end"])


def sidecar_path(stream_path: str | Path) -> Path:
    p = Path(stream_path)
    return p.with_suffix(".scenario")


def spec_from_sidecar(meta: dict) -> ScenarioSpec:
    end = meta.get("end", "")
    anomaly = AnomalySpec(
        kind=meta["anomaly_kind"],
        sensor=int(meta["sensor"]),
        onset=int(meta["onset"]),
        end=int(end) if end not in ("", "None") else None,
        magnitude=float(meta["magnitude"]),
        ramp=int(meta.get("ramp", STEPS_PER_DAY)),
    )
    return ScenarioSpec(
        n_sensors=int(meta.get("n_sensors", 29)),
        duration=int(meta.get("duration", 23000)),
        seed=int(meta.get("seed", 0)),
        noise=float(meta.get("noise", 0.01)),
        anomaly=anomaly,
        name=meta.get("name", ""),
    )


def save_scenario(spec: ScenarioSpec, path: str | Path) -> tuple[Path, Path]:
    """Generate ``spec`` and write the stream CSV plus its sidecar."""
    stream, _ = generate(spec)
    path = Path(path)
    write_stream(path, stream)
    side = sidecar_path(path)
    write_sidecar(side, spec)
    return path, side
