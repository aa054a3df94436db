"""Derivative-free Nelder-Mead simplex minimizer."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

REFLECTION = 1.0
EXPANSION = 2.0
CONTRACTION = 0.5
SHRINK = 0.5

NONZERO_STEP = 0.05
ZERO_STEP = 0.00025


@dataclass(frozen=True)
class NelderMeadOptions:
    xtol: float = 1e-4
    ftol: float = 1e-4
    max_iter: int = 2000


@dataclass(frozen=True)
class MinimizeResult:
    x: np.ndarray
    fun: float
    iterations: int
    evaluations: int
    converged: bool


def initial_simplex(x0: np.ndarray) -> np.ndarray:
    n = x0.size
    sim = np.tile(x0, (n + 1, 1))
    for i in range(n):
        if x0[i] != 0:
            sim[i + 1, i] = (1.0 + NONZERO_STEP) * x0[i]
        else:
            sim[i + 1, i] = ZERO_STEP
    return sim


def _converged(sim, fsim, opts) -> bool:
    # Tolerances are relative to the best vertex, floored at unit scale.
    x_scale = max(1.0, float(np.max(np.abs(sim[0]))))
    f_scale = max(1.0, abs(float(fsim[0])))
    x_spread = float(np.max(np.abs(sim[1:] - sim[0])))
    f_spread = float(np.max(np.abs(fsim[1:] - fsim[0])))
    return x_spread <= opts.xtol * x_scale and f_spread <= opts.ftol * f_scale


def nelder_mead(
    f: Callable[[np.ndarray], float],
    x0: Sequence[float],
    options: NelderMeadOptions | None = None,
) -> MinimizeResult:
    """Minimize ``f`` starting from ``x0``.

    Reflection 1, expansion 2, contraction 0.5, shrink 0.5. The initial simplex
    perturbs each coordinate by 5% (0.00025 when it is zero). Stops when both
    the vertex spread and the value spread fall below their tolerances, or
    after ``max_iter`` iterations with ``converged=False``.
    """
    opts = options or NelderMeadOptions()
    x0 = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    if x0.ndim != 1 or x0.size < 1:
        raise ValueError("x0 must be a non-empty vector")
    n = x0.size
    evaluations = 0

    def call(x):
        nonlocal evaluations
        evaluations += 1
        value = float(f(x))
        return value if math.isfinite(value) else math.inf

    sim = initial_simplex(x0)
    fsim = np.empty(n + 1)
    for i in range(n + 1):
        fsim[i] = call(sim[i])
    if not np.all(np.isfinite(fsim)):
        raise ValueError("objective is not finite on the initial simplex")

    order = np.argsort(fsim, kind="stable")
    sim, fsim = sim[order], fsim[order]

    iterations = 0
    converged = False
    while True:
        if _converged(sim, fsim, opts):
            converged = True
            break
        if iterations >= opts.max_iter:
            break
        iterations += 1

        centroid = sim[:-1].mean(axis=0)
        worst = sim[-1]
        xr = centroid + REFLECTION * (centroid - worst)
        fr = call(xr)
        shrink = False

        if fr < fsim[0]:
            xe = centroid + EXPANSION * (xr - centroid)
            fe = call(xe)
            if fe < fr:
                sim[-1], fsim[-1] = xe, fe
            else:
                sim[-1], fsim[-1] = xr, fr
        elif fr < fsim[-2]:
            sim[-1], fsim[-1] = xr, fr
        elif fr < fsim[-1]:
            xc = centroid + CONTRACTION * (xr - centroid)
            fc = call(xc)
            if fc <= fr:
                sim[-1], fsim[-1] = xc, fc
            else:
                shrink = True
        else:
            xcc = centroid + CONTRACTION * (worst - centroid)
            fcc = call(xcc)
            if fcc < fsim[-1]:
                sim[-1], fsim[-1] = xcc, fcc
            else:
                shrink = True

        if shrink:
            for i in range(1, n + 1):
                sim[i] = sim[0] + SHRINK * (sim[i] - sim[0])
                fsim[i] = call(sim[i])

        order = np.argsort(fsim, kind="stable")
        sim, fsim = sim[order], fsim[order]

    return MinimizeResult(
        x=sim[0].copy(),
        fun=float(fsim[0]),
        iterations=iterations,
        evaluations=evaluations,
        converged=converged,
    )
