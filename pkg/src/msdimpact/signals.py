"""Accelerometer latency filter and small series utilities."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

#: Model filter: 500 Hz first-order low-pass run on the 10 kHz trace grid.
DEFAULT_CUTOFF_HZ = 500.0
DEFAULT_SAMPLE_RATE_HZ = 10_000.0


@dataclass(frozen=True)
class FilterSpec:
    cutoff_hz: float = DEFAULT_CUTOFF_HZ
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ

    def __post_init__(self):
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be > 0")
        if not 0 < self.cutoff_hz < self.sample_rate_hz / 2:
            raise ValueError(
                f"cutoff {self.cutoff_hz} Hz must lie in (0, Nyquist={self.sample_rate_hz / 2} Hz)"
            )

    @property
    def time_constant(self) -> float:
        return 1.0 / (2.0 * math.pi * self.cutoff_hz)


@dataclass(frozen=True)
class FilterCoeffs:
    """``y[n] = b0*x[n] + b1*x[n-1] - a1*y[n-1]``."""

    b0: float
    b1: float
    a1: float

    @property
    def b(self):
        return np.array([self.b0, self.b1])

    @property
    def a(self):
        return np.array([1.0, self.a1])


@dataclass(frozen=True)
class Series:
    dt: float
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("series values must be one-dimensional")
        if not self.dt > 0:
            raise ValueError("series dt must be > 0")
        if not np.all(np.isfinite(values)):
            raise ValueError("series values must be finite")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.values)) * self.dt


def design_lowpass(spec: FilterSpec) -> FilterCoeffs:
    """First-order Butterworth low-pass via the pre-warped bilinear transform.

    The analogue prototype ``wc/(s + wc)`` is mapped with ``s = 2/T (z-1)/(z+1)``
    after warping ``wc`` so the -3 dB point lands exactly on the cutoff.
    """
    # Re-validate in case the caller bypassed the dataclass.
    if not 0 < spec.cutoff_hz < spec.sample_rate_hz / 2:
        raise ValueError("cutoff must lie strictly below Nyquist")
    K = math.tan(math.pi * spec.cutoff_hz / spec.sample_rate_hz)
    b0 = K / (1.0 + K)
    return FilterCoeffs(b0=b0, b1=b0, a1=(K - 1.0) / (K + 1.0))


def apply_filter(coeffs: FilterCoeffs, s: Series) -> Series:
    """Causal single pass from a zero initial state."""
    if len(s) == 0:
        raise ValueError("cannot filter an empty series")
    return Series(s.dt, lfilter(coeffs.b, coeffs.a, s.values))


def lowpass(values, spec: FilterSpec) -> np.ndarray:
    """Filter a raw array sampled at ``spec.sample_rate_hz``."""
    series = Series(1.0 / spec.sample_rate_hz, values)
    return apply_filter(design_lowpass(spec), series).values


def absolute_acceleration(ax: Series, ay: Series, az: Series) -> Series:
    if not len(ax) == len(ay) == len(az):
        raise ValueError("axis series must have equal lengths")
    if not (math.isclose(ax.dt, ay.dt) and math.isclose(ax.dt, az.dt)):
        raise ValueError("axis series must share the same dt")
    return Series(ax.dt, np.sqrt(ax.values**2 + ay.values**2 + az.values**2))


def peak(s: Series) -> tuple[int, float]:
    """Index and value of the global maximum, earliest index on ties."""
    if len(s) == 0:
        raise ValueError("peak of an empty series")
    i = int(np.argmax(s.values))
    return i, float(s.values[i])
