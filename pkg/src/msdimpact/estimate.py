"""Parameter identification from static and drop-test data."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .ingest import AccelLog, ImpactSegment, TrialGroup, model_sensor_on_grid
from .model import ModelParams
from .optimize import MinimizeResult, NelderMeadOptions, nelder_mead
from .signals import FilterSpec

FIXED_K = "fixed"
JOINT = "joint"

#: Relative loss gap under which the static stiffness is preferred.
ADOPTION_TOL = 1e-4


class DegenerateDataError(ValueError):
    pass


@dataclass(frozen=True)
class StaticMeasurement:
    displacement: float
    force: float

    def __post_init__(self):
        if self.displacement < 0 or self.force < 0:
            raise ValueError("displacement and force must be >= 0")


@dataclass(frozen=True)
class StiffnessFit:
    k: float
    intercept: float
    rmse: float


@dataclass(frozen=True)
class FitResult:
    c: float
    k: float
    loss: float
    iterations: int
    converged: bool
    mode: str = FIXED_K


@dataclass(frozen=True)
class LossSurface:
    c_values: np.ndarray
    k_values: np.ndarray
    loss: np.ndarray  # loss[i, j] at (c_values[i], k_values[j])

    @property
    def transformed(self) -> np.ndarray:
        return np.log1p(self.loss)

    def argmin(self) -> tuple[int, int]:
        i, j = np.unravel_index(int(np.argmin(self.loss)), self.loss.shape)
        return int(i), int(j)


def fit_stiffness(data: Sequence[StaticMeasurement], W: float) -> StiffnessFit:
    """Least-squares slope of force vs displacement through the fixed point (0, W)."""
    if len(data) < 1:
        raise DegenerateDataError("no static measurements")
    x = np.array([d.displacement for d in data], dtype=float)
    F = np.array([d.force for d in data], dtype=float)
    sxx = float(np.dot(x, x))
    if sxx == 0.0:
        raise DegenerateDataError("all displacements are zero; slope is undetermined")
    k = float(np.dot(F - W, x)) / sxx
    if not k > 0:
        raise DegenerateDataError(f"fitted stiffness {k:g} N/m is not positive")
    residual = F - (W + k * x)
    return StiffnessFit(k=k, intercept=W, rmse=float(np.sqrt(np.mean(residual**2))))


def _window(log: AccelLog, seg: ImpactSegment) -> np.ndarray:
    lo, hi = seg.impact_start, seg.peak + 1
    return np.sqrt(log.ax.values[lo:hi] ** 2 + log.ay.values[lo:hi] ** 2 + log.az.values[lo:hi] ** 2)


def _check_window(log: AccelLog, seg: ImpactSegment) -> int:
    if seg.peak <= seg.impact_start:
        raise DegenerateDataError(f"empty comparison window in {log.trial_id}: peak == impact_start")
    if seg.peak >= len(log):
        raise ValueError(f"segment exceeds log {log.trial_id}")
    return seg.peak - seg.impact_start + 1


def trial_loss(params: ModelParams, spec: FilterSpec, trial: tuple[AccelLog, ImpactSegment]) -> float:
    """Mean squared error between filtered model and measured ``|acc|``.

    Model time zero sits on ``impact_start``; the comparison runs through the
    peak sample inclusive.
    """
    log, seg = trial
    n = _check_window(log, seg)
    times = np.arange(n) / log.sample_rate_hz
    predicted = model_sensor_on_grid(params, log.altitude, spec, times)
    return float(np.mean((predicted - _window(log, seg)) ** 2))


def group_loss(params: ModelParams, spec: FilterSpec, group: TrialGroup) -> float:
    """Mean trial loss over a group; the model is evaluated once per sample rate."""
    lengths = [_check_window(log, seg) for log, seg in group.trials]
    longest: dict[float, int] = {}
    for (log, _), n in zip(group.trials, lengths):
        longest[log.sample_rate_hz] = max(longest.get(log.sample_rate_hz, 0), n)
    predictions = {
        rate: model_sensor_on_grid(params, group.altitude, spec, np.arange(n) / rate) for rate, n in longest.items()
    }
    total = 0.0
    for (log, seg), n in zip(group.trials, lengths):
        err = predictions[log.sample_rate_hz][:n] - _window(log, seg)
        total += float(np.mean(err**2))
    return total / len(group.trials)


def weighted_loss(params: ModelParams, spec: FilterSpec, groups: Sequence[TrialGroup]) -> float:
    """Equal-weight mean over altitude groups of the per-group mean trial loss.

    Each altitude counts once whatever its number of trials. Groups are reduced
    in ascending altitude order so the sum is independent of input order.
    """
    if not groups:
        raise ValueError("no trial groups")
    ordered = sorted(groups, key=lambda g: g.altitude)
    return sum(group_loss(params, spec, g) for g in ordered) / len(ordered)


def fit_damping(
    groups: Sequence[TrialGroup],
    spec: FilterSpec,
    m: float,
    k_mode: str = FIXED_K,
    c0: float = 50.0,
    k0: float = 7040.0,
    g: float = 9.81,
    options: Optional[NelderMeadOptions] = None,
) -> FitResult:
    """Minimize the weighted loss over ``c`` (``k`` held at ``k0``) or over ``(c, k)``.

    The search runs on ``log c`` / ``log k`` so both stay positive.
    """
    if not groups or any(len(grp.trials) == 0 for grp in groups):
        raise ValueError("fit_damping needs non-empty trial groups")
    if not c0 > 0 or not k0 > 0:
        raise ValueError("initial c and k must be > 0")
    if k_mode not in (FIXED_K, JOINT):
        raise ValueError(f"k_mode must be {FIXED_K!r} or {JOINT!r}")

    def unpack(z):
        c = math.exp(z[0])
        k = math.exp(z[1]) if k_mode == JOINT else k0
        return c, k

    def objective(z):
        try:
            c, k = unpack(z)
            return weighted_loss(ModelParams(m=m, c=c, k=k, g=g), spec, groups)
        except (OverflowError, ValueError):
            return math.inf

    start = [math.log(c0)] + ([math.log(k0)] if k_mode == JOINT else [])
    res: MinimizeResult = nelder_mead(objective, start, options)
    c, k = unpack(res.x)
    return FitResult(c=c, k=k, loss=res.fun, iterations=res.iterations, converged=res.converged, mode=k_mode)


def adopt(joint: FitResult, static: FitResult, rel_tol: float = ADOPTION_TOL) -> FitResult:
    """Prefer the fit that keeps the measured static stiffness when it costs almost nothing."""
    if static.loss <= joint.loss * (1.0 + rel_tol):
        return static
    return joint


def loss_surface(
    groups: Sequence[TrialGroup],
    spec: FilterSpec,
    m: float,
    c_range: tuple[float, float],
    k_range: tuple[float, float],
    resolution,
    g: float = 9.81,
) -> LossSurface:
    if isinstance(resolution, int):
        nc = nk = resolution
    else:
        nc, nk = resolution
    if nc < 2 or nk < 2:
        raise ValueError("resolution must be >= 2 on each axis")
    for lo, hi in (c_range, k_range):
        if not (0 < lo < hi):
            raise ValueError("ranges must be positive and ascending")
    c_values = np.linspace(c_range[0], c_range[1], nc)
    k_values = np.linspace(k_range[0], k_range[1], nk)
    loss = np.empty((nc, nk))
    for i, c in enumerate(c_values):
        for j, k in enumerate(k_values):
            loss[i, j] = weighted_loss(ModelParams(m=m, c=float(c), k=float(k), g=g), spec, groups)
    return LossSurface(c_values, k_values, loss)
