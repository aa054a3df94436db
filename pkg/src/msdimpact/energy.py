"""Where the impact energy goes: spring, damper, or rigid payload collision.

The kinetic energy at first contact is taken as the whole budget. Work done
by gravity while the frame compresses is deliberately left out of that
budget, so ``E_damper`` here is smaller than the true damper dissipation by
``m*g*x`` at the evaluation point (see :func:`damper_work`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import brentq

from .model import (
    ROOT_XTOL,
    ModelParams,
    _solve,
    init_from_altitude,
    max_compression,
    time_of_max_displacement,
)

DEFAULT_X_LIMIT = 0.016


@dataclass(frozen=True)
class PayloadClearance:
    x_limit: float = DEFAULT_X_LIMIT

    def __post_init__(self):
        if not self.x_limit > 0:
            raise ValueError("x_limit must be > 0")


@dataclass(frozen=True)
class EnergyPartition:
    altitude: float
    E_total: float
    E_spring: float
    E_damper: float
    E_collision: float
    collided: bool
    x_eval: float  # compression where the split is taken
    t_eval: float  # time of that point (inf for an asymptotic maximum)

    @property
    def frac_spring(self) -> float:
        return self.E_spring / self.E_total

    @property
    def frac_damper(self) -> float:
        return self.E_damper / self.E_total

    @property
    def frac_collision(self) -> float:
        return self.E_collision / self.E_total

    @property
    def fractions(self) -> tuple[float, float, float]:
        return self.frac_spring, self.frac_damper, self.frac_collision


def contact_time(params: ModelParams, h: float, x_limit: float) -> float:
    """First time the compression reaches ``x_limit``, or ``inf`` if it never does."""
    init = init_from_altitude(params, h)
    t_peak = time_of_max_displacement(params, init)
    if max_compression(params, init) < x_limit:
        return math.inf
    if init.x0 >= x_limit:
        return 0.0
    # x rises monotonically on [0, t_peak]
    return brentq(lambda t: float(_solve(params, init, t)[0]) - x_limit, 0.0, t_peak, xtol=ROOT_XTOL)


def partition(params: ModelParams, h: float, clearance: PayloadClearance = PayloadClearance()) -> EnergyPartition:
    if not h > 0:
        raise ValueError("altitude must be > 0")
    init = init_from_altitude(params, h)
    E_total = 0.5 * params.m * init.v0**2
    x_max = max_compression(params, init)

    if x_max < clearance.x_limit:
        E_spring = 0.5 * params.k * x_max**2
        return EnergyPartition(
            altitude=h,
            E_total=E_total,
            E_spring=E_spring,
            E_damper=E_total - E_spring,
            E_collision=0.0,
            collided=False,
            x_eval=x_max,
            t_eval=time_of_max_displacement(params, init),
        )

    t_hit = contact_time(params, h, clearance.x_limit)
    _, v_hit = _solve(params, init, t_hit)
    E_collision = 0.5 * params.m * float(v_hit) ** 2
    E_spring = 0.5 * params.k * clearance.x_limit**2
    return EnergyPartition(
        altitude=h,
        E_total=E_total,
        E_spring=E_spring,
        E_damper=E_total - E_collision - E_spring,
        E_collision=E_collision,
        collided=True,
        x_eval=clearance.x_limit,
        t_eval=t_hit,
    )


def extrapolate(
    params: ModelParams, altitudes: Sequence[float], clearance: PayloadClearance = PayloadClearance()
) -> list[EnergyPartition]:
    altitudes = [float(h) for h in altitudes]
    if any(b < a for a, b in zip(altitudes, altitudes[1:])):
        raise ValueError("altitudes must be sorted ascending")
    if any(h <= 0 for h in altitudes):
        raise ValueError("altitudes must be > 0")
    return [partition(params, h, clearance) for h in altitudes]


def collision_onset_altitude(
    params: ModelParams, clearance: PayloadClearance = PayloadClearance(), h_max: float = 1000.0
) -> float:
    """Smallest drop altitude whose maximum compression reaches the clearance."""
    gap = lambda h: max_compression(params, init_from_altitude(params, h)) - clearance.x_limit  # noqa: E731
    if gap(0.0) >= 0:
        return 0.0
    if gap(h_max) < 0:
        return math.inf
    return brentq(gap, 0.0, h_max, xtol=1e-12)


def damper_work(params: ModelParams, part: EnergyPartition, dt: float = 1e-6) -> float:
    """Trapezoid integral of ``c*v**2`` on a dense trace up to the split point.

    Independent of the closure bookkeeping in :func:`partition`; the gap
    between the two is the gravity work ``m*g*x_eval``.
    """
    if not math.isfinite(part.t_eval):
        raise ValueError("split point is asymptotic; no finite integration horizon")
    init = init_from_altitude(params, part.altitude)
    n = max(2, int(math.ceil(part.t_eval / dt)))
    t = np.linspace(0.0, part.t_eval, n + 1)
    _, v = _solve(params, init, t)
    return float(trapezoid(params.c * v**2, t))

