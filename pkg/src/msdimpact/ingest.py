"""Accelerometer drop-test logs: parsing, writing, segmentation, synthesis.

Log format (text, one record per line)::

    # trial_id=drop-150-001
    # altitude_cm=150
    # sample_rate_hz=1000
    # units=g
    t,ax,ay,az
    0.000,0.012,-0.004,1.002
    ...

The four ``#`` metadata keys are required. Other ``#`` lines are ignored and
the ``t,ax,ay,az`` column header is optional. Internally everything is m/s^2.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, TextIO, Union

import numpy as np

from .model import ModelParams, init_from_altitude, simulate
from .signals import FilterSpec, Series, absolute_acceleration, lowpass

STANDARD_GRAVITY = 9.80665

REQUIRED_KEYS = ("trial_id", "altitude_cm", "sample_rate_hz", "units")
UNIT_SCALE = {"g": STANDARD_GRAVITY, "m/s2": 1.0}

DEFAULT_FF_THRESHOLD = 3.0
DEFAULT_FF_MIN_DURATION = 0.050
DEFAULT_IMPACT_THRESHOLD = 3.0 * STANDARD_GRAVITY
DEFAULT_PEAK_WINDOW = 0.100
DEFAULT_LOG_RATE_HZ = 1000.0

SPACING_TOL = 1e-6


class LogParseError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, source: Optional[str] = None):
        self.line = line
        self.source = source
        where = ""
        if source:
            where += f"{source}:"
        if line is not None:
            where += f"line {line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class SegmentationError(ValueError):
    """Raised when a phase of the drop cannot be located.

    ``phase`` is ``"free-fall"`` or ``"impact"``.
    """

    def __init__(self, phase: str, message: str):
        self.phase = phase
        super().__init__(f"{phase} phase: {message}")


@dataclass(frozen=True)
class AccelLog:
    trial_id: str
    altitude: float
    sample_rate_hz: float
    ax: Series
    ay: Series
    az: Series
    t0: float = 0.0

    def __post_init__(self):
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be > 0")
        if not self.altitude > 0:
            raise ValueError("altitude must be > 0")
        if not len(self.ax) == len(self.ay) == len(self.az):
            raise ValueError("axis series must have equal lengths")
        if len(self.ax) < 2:
            raise ValueError("a log needs at least two samples")

    def __len__(self) -> int:
        return len(self.ax)

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate_hz

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self)) * self.dt

    def magnitude(self) -> Series:
        return absolute_acceleration(self.ax, self.ay, self.az)

    @classmethod
    def from_arrays(cls, trial_id, altitude, sample_rate_hz, ax, ay, az, t0=0.0):
        dt = 1.0 / sample_rate_hz
        return cls(trial_id, altitude, sample_rate_hz, Series(dt, ax), Series(dt, ay), Series(dt, az), t0)


@dataclass(frozen=True)
class ImpactSegment:
    freefall_start: int
    impact_start: int
    peak: int

    def validate(self, n: Optional[int] = None) -> "ImpactSegment":
        if not (0 <= self.freefall_start < self.impact_start <= self.peak):
            raise ValueError(f"invalid segment ordering: {self}")
        if n is not None and self.peak >= n:
            raise ValueError(f"segment {self} exceeds series length {n}")
        return self


@dataclass
class TrialGroup:
    altitude: float
    trials: list = field(default_factory=list)

    def __post_init__(self):
        if not self.trials:
            raise ValueError("a trial group must not be empty")
        for log, _ in self.trials:
            if not math.isclose(log.altitude, self.altitude, rel_tol=1e-9):
                raise ValueError(
                    f"trial {log.trial_id} at {log.altitude} m does not belong to group {self.altitude} m"
                )

    def __len__(self) -> int:
        return len(self.trials)


def group_trials(trials: Iterable[tuple]) -> list[TrialGroup]:
    """Bucket ``(log, segment)`` pairs by altitude, ascending."""
    buckets: dict[float, list] = {}
    for log, seg in trials:
        key = round(log.altitude, 9)
        buckets.setdefault(key, []).append((log, seg))
    return [TrialGroup(alt, buckets[alt]) for alt in sorted(buckets)]


def parse_log(text: Union[str, TextIO], source: Optional[str] = None) -> AccelLog:
    if isinstance(text, str):
        text = io.StringIO(text)
    meta: dict[str, str] = {}
    rows: list[tuple[float, float, float, float]] = []
    row_lines: list[int] = []

    for lineno, raw in enumerate(text, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            key, sep, value = body.partition("=")
            key = key.strip()
            if sep and key in REQUIRED_KEYS:
                if key in meta:
                    raise LogParseError(f"duplicate header key {key!r}", lineno, source)
                meta[key] = value.strip()
            continue
        if not rows and line.replace(" ", "").lower() == "t,ax,ay,az":
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise LogParseError(f"expected 4 comma-separated fields, got {len(parts)}", lineno, source)
        try:
            row = tuple(float(p) for p in parts)
        except ValueError:
            raise LogParseError(f"non-numeric field in {line!r}", lineno, source) from None
        if not all(math.isfinite(v) for v in row):
            raise LogParseError(f"non-finite field in {line!r}", lineno, source)
        rows.append(row)
        row_lines.append(lineno)

    missing = [k for k in REQUIRED_KEYS if k not in meta]
    if missing:
        raise LogParseError(f"missing header keys: {', '.join(missing)}", None, source)
    units = meta["units"].lower().replace("²", "2")
    if units not in UNIT_SCALE:
        raise LogParseError(f"unknown units {meta['units']!r} (expected g or m/s2)", None, source)
    try:
        altitude = float(meta["altitude_cm"]) / 100.0
        rate = float(meta["sample_rate_hz"])
    except ValueError:
        raise LogParseError("altitude_cm and sample_rate_hz must be numeric", None, source) from None
    if not altitude > 0 or not rate > 0:
        raise LogParseError("altitude_cm and sample_rate_hz must be > 0", None, source)
    if len(rows) < 2:
        raise LogParseError(f"need at least 2 data rows, got {len(rows)}", None, source)

    data = np.array(rows)
    t = data[:, 0]
    steps = np.diff(t)
    for i, step in enumerate(steps):
        if step <= 0:
            raise LogParseError("time column must be strictly increasing", row_lines[i + 1], source)
        if abs(step - 1.0 / rate) > SPACING_TOL:
            raise LogParseError(
                f"sample spacing {step:.9g} s disagrees with sample_rate_hz={rate:g}", row_lines[i + 1], source
            )

    scale = UNIT_SCALE[units]
    return AccelLog.from_arrays(
        meta["trial_id"], altitude, rate, data[:, 1] * scale, data[:, 2] * scale, data[:, 3] * scale, t0=float(t[0])
    )


def read_log(path: Union[str, Path]) -> AccelLog:
    path = Path(path)
    with path.open() as fh:
        return parse_log(fh, source=str(path))


def format_log(log: AccelLog, units: str = "m/s2", comments: Iterable[str] = ()) -> str:
    scale = UNIT_SCALE[units]
    out = io.StringIO()
    for comment in comments:
        out.write(f"# {comment}\n")
    out.write(f"# trial_id={log.trial_id}\n")
    out.write(f"# altitude_cm={log.altitude * 100.0:.12g}\n")
    out.write(f"# sample_rate_hz={log.sample_rate_hz:.12g}\n")
    out.write(f"# units={units}\n")
    out.write("t,ax,ay,az\n")
    cols = (log.times, log.ax.values / scale, log.ay.values / scale, log.az.values / scale)
    for t, x, y, z in zip(*cols):
        out.write(f"{t:.12g},{x:.12g},{y:.12g},{z:.12g}\n")
    return out.getvalue()


def write_log(log: AccelLog, path: Union[str, Path], units: str = "m/s2", comments: Iterable[str] = ()) -> None:
    Path(path).write_text(format_log(log, units, comments))


def _first_run(mask: np.ndarray, min_len: int) -> Optional[int]:
    """Start of the first run of True at least ``min_len`` long."""
    run = 0
    for i, flag in enumerate(mask):
        run = run + 1 if flag else 0
        if run >= min_len:
            return i - min_len + 1
    return None


def segment_impact(
    log: AccelLog,
    ff_threshold: float = DEFAULT_FF_THRESHOLD,
    ff_min_duration: float = DEFAULT_FF_MIN_DURATION,
    impact_threshold: float = DEFAULT_IMPACT_THRESHOLD,
    peak_window: float = DEFAULT_PEAK_WINDOW,
) -> ImpactSegment:
    """Locate free fall, impact onset and peak in a drop log.

    Free fall is the first run of ``|acc| < ff_threshold`` lasting at least
    ``ff_min_duration`` seconds. Impact starts at the first later sample with
    ``|acc| >= impact_threshold``; the peak is the largest ``|acc|`` in the
    ``peak_window`` seconds that follow (onset included).
    """
    if not (ff_threshold > 0 and impact_threshold > 0 and ff_min_duration > 0 and peak_window > 0):
        raise ValueError("segmentation thresholds must be > 0")
    if not ff_threshold < impact_threshold:
        raise ValueError("ff_threshold must be below impact_threshold")

    mag = log.magnitude().values
    min_len = max(1, int(math.ceil(ff_min_duration * log.sample_rate_hz - 1e-9)))
    ff_start = _first_run(mag < ff_threshold, min_len)
    if ff_start is None:
        raise SegmentationError(
            "free-fall", f"no run below {ff_threshold:g} m/s^2 lasting {ff_min_duration:g} s in {log.trial_id}"
        )
    after = np.flatnonzero(mag[ff_start:] >= impact_threshold)
    if after.size == 0:
        raise SegmentationError(
            "impact", f"no sample reaches {impact_threshold:g} m/s^2 after free fall in {log.trial_id}"
        )
    impact = ff_start + int(after[0])
    width = max(1, int(round(peak_window * log.sample_rate_hz)))
    window = mag[impact : impact + width]
    peak_idx = impact + int(np.argmax(window))
    return ImpactSegment(ff_start, impact, peak_idx).validate(len(mag))


def model_sensor_on_grid(
    params: ModelParams,
    altitude: float,
    spec: FilterSpec,
    times: np.ndarray,
) -> np.ndarray:
    """Filtered model sensor magnitude at ``times`` after impact.

    The model runs on the filter grid ``1/spec.sample_rate_hz`` from impact and
    is linearly interpolated onto ``times``.
    """
    dt = 1.0 / spec.sample_rate_hz
    t_end = float(np.max(times)) if len(times) else 0.0
    t_max = max(t_end, 0.0) + 2.0 * dt
    trace = simulate(params, init_from_altitude(params, altitude), dt=dt, t_max=t_max)
    filtered = lowpass(trace.sensor, spec)
    return np.interp(times, trace.t, filtered)


def generate_synthetic_log(
    params: ModelParams,
    h: float,
    spec: Optional[FilterSpec] = None,
    noise_sigma: float = 0.0,
    seed: int = 0,
    pre_roll: float = 0.5,
    log_rate_hz: float = DEFAULT_LOG_RATE_HZ,
    post_roll: float = 0.2,
    trial_id: Optional[str] = None,
) -> tuple[AccelLog, ImpactSegment]:
    """Synthesize a drop log from the model, with its ground-truth segment.

    The log holds ``pre_roll`` seconds at rest (reading g), the free fall
    (reading 0) and ``post_roll`` seconds of filtered model response. The
    magnitude lies on z; every axis gets independent white noise.
    """
    if not h > 0:
        raise ValueError("altitude must be > 0")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    spec = spec or FilterSpec()
    n_rest = int(round(pre_roll * log_rate_hz))
    n_fall = max(1, int(round(math.sqrt(2.0 * h / params.g) * log_rate_hz)))
    n_impact = max(2, int(round(post_roll * log_rate_hz)))

    t_impact = np.arange(n_impact) / log_rate_hz
    response = model_sensor_on_grid(params, h, spec, t_impact)
    clean = np.concatenate([np.full(n_rest, params.g), np.zeros(n_fall), response])

    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, noise_sigma, size=(3, clean.size)) if noise_sigma > 0 else np.zeros((3, clean.size))

    impact = n_rest + n_fall
    width = int(round(DEFAULT_PEAK_WINDOW * log_rate_hz))
    peak_idx = impact + int(np.argmax(response[:width]))
    truth = ImpactSegment(n_rest, impact, peak_idx).validate(clean.size)

    log = AccelLog.from_arrays(
        trial_id or f"synth-{h * 100:g}cm-{seed}",
        h,
        log_rate_hz,
        noise[0],
        noise[1],
        clean + noise[2],
    )
    return log, truth
