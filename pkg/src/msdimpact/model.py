"""Closed-form solution of the gravity-forced mass-spring-damper impact model.

The frame is reduced to a single mass ``m`` riding on a spring ``k`` and a
damper ``c``. ``x`` is compression (positive toward the ground) and gravity
acts as a constant ``+m*g`` forcing::

    m*x'' + c*x' + k*x = m*g

All traces are produced by evaluating the exact solution on a grid, so no
integration error leaks into the fits downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np
from scipy.optimize import brentq

#: |zeta - 1| below this is treated as critical damping.
CRITICAL_BAND = 1e-9

#: Time tolerance for root polishing, in seconds.
ROOT_XTOL = 1e-9

DEFAULT_DT = 1e-4

TIME_LIMIT = "time-limit"
DISPLACEMENT_LIMIT = "displacement-limit"
REBOUND = "rebound"


@dataclass(frozen=True)
class ModelParams:
    """Lumped constants: mass [kg], damping [N s/m], stiffness [N/m], gravity [m/s^2]."""

    m: float
    c: float
    k: float
    g: float = 9.81

    def __post_init__(self):
        for name in ("m", "c", "k", "g"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")

    @property
    def natural_frequency(self) -> float:
        return math.sqrt(self.k / self.m)

    @property
    def damping_ratio(self) -> float:
        return self.c / (2.0 * math.sqrt(self.k * self.m))

    @property
    def static_sag(self) -> float:
        """Equilibrium compression under the frame's own weight."""
        return self.m * self.g / self.k

    def replace(self, **changes) -> "ModelParams":
        fields = {"m": self.m, "c": self.c, "k": self.k, "g": self.g}
        fields.update(changes)
        return ModelParams(**fields)


@dataclass(frozen=True)
class ImpactInit:
    x0: float = 0.0
    v0: float = 0.0
    h: Optional[float] = None

    def __post_init__(self):
        if self.x0 < 0 or self.v0 < 0:
            raise ValueError("initial compression and velocity must be >= 0")


@dataclass(frozen=True)
class ImpactState:
    t: float
    x: float
    v: float
    a: float


@dataclass(frozen=True)
class ImpactTrace:
    """Uniformly sampled impact response.

    ``sensor`` is the specific force ``(c*v + k*x)/m`` an accelerometer on the
    payload would read, i.e. ``g - a``.
    """

    dt: float
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    a: np.ndarray
    sensor: np.ndarray
    truncation_reason: str

    def __len__(self) -> int:
        return len(self.t)

    def state(self, i: int) -> ImpactState:
        return ImpactState(float(self.t[i]), float(self.x[i]), float(self.v[i]), float(self.a[i]))

    def states(self) -> Iterator[ImpactState]:
        for i in range(len(self)):
            yield self.state(i)


def init_from_altitude(params: ModelParams, h: float) -> ImpactInit:
    """Impact conditions after a drag-free fall from altitude ``h`` [m]."""
    if not h >= 0:
        raise ValueError(f"altitude must be >= 0, got {h!r}")
    return ImpactInit(x0=0.0, v0=math.sqrt(2.0 * params.g * h), h=h)


def _branch(params: ModelParams) -> str:
    zeta = params.damping_ratio
    if abs(zeta - 1.0) < CRITICAL_BAND:
        return "critical"
    return "under" if zeta < 1.0 else "over"


def _solve(params: ModelParams, init: ImpactInit, t):
    """Displacement and velocity at times ``t`` (scalar or array)."""
    t = np.asarray(t, dtype=float)
    wn = params.natural_frequency
    sigma = params.damping_ratio * wn
    y0 = init.x0 - params.static_sag
    b = init.v0 + sigma * y0
    branch = _branch(params)

    # y = x - sag = e^{-sigma t} (y0*C(t) + b*S(t)), with C' = -w2*S and S' = C
    # where w2 = wd^2 (under), 0 (critical), -mu^2 (over).
    if branch == "under":
        wd = wn * math.sqrt(1.0 - params.damping_ratio**2)
        decay = np.exp(-sigma * t)
        C = decay * np.cos(wd * t)
        S = decay * np.sin(wd * t) / wd
        w2 = wd * wd
    elif branch == "critical":
        decay = np.exp(-sigma * t)
        C = decay
        S = decay * t
        w2 = 0.0
    else:
        mu = wn * math.sqrt(params.damping_ratio**2 - 1.0)
        # e^{-sigma t} cosh(mu t) and e^{-sigma t} sinh(mu t)/mu without overflow
        slow = np.exp((mu - sigma) * t)
        C = 0.5 * slow * (1.0 + np.exp(-2.0 * mu * t))
        S = slow * (-np.expm1(-2.0 * mu * t)) / (2.0 * mu)
        w2 = -mu * mu
    y = y0 * C + b * S
    v = -sigma * y + b * C - y0 * w2 * S
    return params.static_sag + y, v


def acceleration(params: ModelParams, x, v):
    """Second derivative of ``x`` taken from the equation of motion itself."""
    return params.g - (params.c * np.asarray(v) + params.k * np.asarray(x)) / params.m


def closed_form_state(params: ModelParams, init: ImpactInit, t: float) -> ImpactState:
    if t < 0:
        raise ValueError("t must be >= 0")
    x, v = _solve(params, init, t)
    x, v = float(x), float(v)
    return ImpactState(t=float(t), x=x, v=v, a=float(acceleration(params, x, v)))


def sensor_reading(params: ModelParams, x, v):
    """Specific force transmitted through the frame, ``(c*v + k*x)/m``."""
    return (params.c * np.asarray(v) + params.k * np.asarray(x)) / params.m


def simulate(
    params: ModelParams,
    init: ImpactInit,
    dt: float = DEFAULT_DT,
    t_max: float = 0.05,
    x_limit: Optional[float] = None,
    stop_on_rebound: bool = False,
) -> ImpactTrace:
    """Sample the exact response on ``t = 0, dt, 2*dt, ...`` up to ``t_max``.

    Stops at the first sample with ``x >= x_limit`` if a limit is given, or at
    the first sample moving back out (``v < 0``) once past maximum compression
    when ``stop_on_rebound`` is set. The stopping sample is kept.
    """
    if not dt > 0 or not t_max > 0:
        raise ValueError("dt and t_max must be > 0")
    if t_max <= dt:
        raise ValueError("t_max must exceed dt")
    n = int(math.floor(t_max / dt + 1e-9)) + 1
    t = np.arange(n) * dt
    x, v = _solve(params, init, t)

    stop = n
    reason = TIME_LIMIT
    if x_limit is not None:
        hits = np.flatnonzero(x >= x_limit)
        if hits.size:
            stop = int(hits[0]) + 1
            reason = DISPLACEMENT_LIMIT
    if stop_on_rebound:
        t_peak = time_of_max_displacement(params, init)
        if math.isfinite(t_peak):
            back = np.flatnonzero((v < 0) & (t >= t_peak))
            if back.size and back[0] + 1 < stop:
                stop = int(back[0]) + 1
                reason = REBOUND

    t, x, v = t[:stop], x[:stop], v[:stop]
    return ImpactTrace(
        dt=dt,
        t=t,
        x=x,
        v=v,
        a=acceleration(params, x, v),
        sensor=sensor_reading(params, x, v),
        truncation_reason=reason,
    )


def _velocity(params, init, t):
    return float(_solve(params, init, t)[1])


def time_of_max_displacement(params: ModelParams, init: ImpactInit) -> float:
    """Time of the first maximum of ``x``.

    Returns 0 when the frame starts out moving back, and ``inf`` when ``x``
    creeps monotonically up to the static sag (overdamped approach from
    below) so the maximum is only reached in the limit.
    """
    wn = params.natural_frequency
    sigma = params.damping_ratio * wn
    y0 = init.x0 - params.static_sag
    v0 = init.v0
    b = v0 + sigma * y0
    branch = _branch(params)

    # The bracketing times below come from the sign structure of
    # v = e^{-sigma t} (v0*C~ + q*S~); brentq polishes the root.
    if branch == "under":
        wd = wn * math.sqrt(1.0 - params.damping_ratio**2)
        q = -(y0 * wd * wd + sigma * b) / wd
        if v0 == 0 and q <= 0:
            return 0.0
        phi = math.atan2(q, v0)
        theta = phi + 0.5 * math.pi
        lo = max(theta - 0.25 * math.pi, 0.0) / wd
        hi = (theta + 0.25 * math.pi) / wd
    else:
        mu = 0.0 if branch == "critical" else wn * math.sqrt(params.damping_ratio**2 - 1.0)
        q = mu * mu * y0 - sigma * b
        # v ~ v0*cosh(mu t) + q*sinh(mu t)/mu
        if v0 == 0:
            return 0.0 if q <= 0 else math.inf
        if q >= 0:
            return math.inf
        ratio = v0 / -q
        if branch == "critical":
            t_star = ratio
        else:
            if mu * ratio >= 1.0:
                return math.inf
            t_star = math.atanh(mu * ratio) / mu
        lo, hi = 0.5 * t_star, 2.0 * t_star
        while _velocity(params, init, hi) > 0:
            hi *= 2.0

    if _velocity(params, init, lo) <= 0:
        lo = 0.0
    if _velocity(params, init, lo) <= 0:
        return 0.0
    return brentq(lambda s: _velocity(params, init, s), lo, hi, xtol=ROOT_XTOL)


def max_compression(params: ModelParams, init: ImpactInit) -> float:
    t_peak = time_of_max_displacement(params, init)
    if math.isinf(t_peak):
        return max(init.x0, params.static_sag)
    return max(init.x0, float(_solve(params, init, t_peak)[0]))


def max_displacement(params: ModelParams, h: float) -> float:
    """Largest compression reached after a drop from ``h`` metres."""
    return max_compression(params, init_from_altitude(params, h))
