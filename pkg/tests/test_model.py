import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msdimpact.model import (
    DISPLACEMENT_LIMIT,
    REBOUND,
    TIME_LIMIT,
    ImpactInit,
    ModelParams,
    closed_form_state,
    init_from_altitude,
    max_compression,
    max_displacement,
    simulate,
    time_of_max_displacement,
)
from oracles import dense_max, rk4_msd

FRAME = ModelParams(m=0.241, c=46.0, k=7040.0, g=9.81)

# RK4 at dt = 1e-6 s, maximum over the step grid (tests/oracles.py)
RK4_XMAX_1M0 = 0.013557444130837766
RK4_XMAX_1M5 = 0.01657210107563083


def test_params_reject_nonpositive():
    for bad in (dict(m=0), dict(c=-1), dict(k=0), dict(g=0), dict(m=float("nan"))):
        kw = dict(m=0.241, c=46.0, k=7040.0, g=9.81)
        kw.update(bad)
        with pytest.raises(ValueError):
            ModelParams(**kw)


def test_init_from_altitude():
    assert init_from_altitude(FRAME, 0.0).v0 == 0.0
    init = init_from_altitude(FRAME, 1.5)
    assert init.x0 == 0.0 and init.h == 1.5
    assert init.v0 == pytest.approx(5.4249, abs=1e-4)
    # 262 cm ceiling drop: "approximately 7 m/s"
    assert init_from_altitude(FRAME, 2.62).v0 == pytest.approx(7.17, abs=0.01)
    with pytest.raises(ValueError):
        init_from_altitude(FRAME, -0.1)


def test_frame_params_derived_quantities():
    assert FRAME.damping_ratio == pytest.approx(0.558, abs=1e-3)
    assert FRAME.natural_frequency == pytest.approx(170.9, abs=0.1)


def test_initial_state_and_equilibrium():
    init = init_from_altitude(FRAME, 1.5)
    s0 = closed_form_state(FRAME, init, 0.0)
    assert s0.x == pytest.approx(0.0, abs=1e-15)
    assert s0.v == pytest.approx(init.v0, rel=1e-14)
    late = closed_form_state(FRAME, init, 1.0)
    assert late.x == pytest.approx(FRAME.m * FRAME.g / FRAME.k, rel=1e-9)
    assert late.x * 1000 == pytest.approx(0.336, abs=1e-3)
    assert abs(late.v) < 1e-12
    with pytest.raises(ValueError):
        closed_form_state(FRAME, init, -1e-3)


@pytest.mark.parametrize("zeta", [0.1, 0.558, 1.0, 1.5, 3.0])
def test_closed_form_matches_rk4_each_branch(zeta):
    m, k = 0.3, 5000.0
    c = 2 * zeta * math.sqrt(k * m)
    p = ModelParams(m=m, c=c, k=k)
    init = ImpactInit(x0=0.002, v0=3.0)
    t, xs, vs = rk4_msd(m, c, k, p.g, init.x0, init.v0, 1e-6, 0.03)
    sel = slice(None, None, 500)
    from msdimpact.model import _solve

    x, v = _solve(p, init, t[sel])
    assert np.max(np.abs(x - xs[sel, 0])) < 1e-9
    assert np.max(np.abs(v - vs[sel, 0])) < 1e-7


@pytest.mark.parametrize("sign", [+1, -1])
def test_branch_continuity_near_critical(sign):
    m, k = 0.241, 7040.0
    crit = ModelParams(m=m, c=2 * math.sqrt(k * m), k=k)
    near = crit.replace(c=crit.c * (1 + sign * 1e-7))
    assert abs(near.damping_ratio - 1) > 1e-9  # really on the other branch
    init = init_from_altitude(crit, 1.0)
    for t in np.linspace(0.0005, 0.05, 40):
        a = closed_form_state(crit, init, t).x
        b = closed_form_state(near, init, t).x
        assert abs(a - b) <= 1e-6 * abs(a)


def test_ode_residual_on_trace():
    trace = simulate(FRAME, init_from_altitude(FRAME, 1.5), dt=1e-5, t_max=0.1)
    residual = FRAME.m * trace.a + FRAME.c * trace.v + FRAME.k * trace.x - FRAME.m * FRAME.g
    assert np.max(np.abs(residual)) < 1e-6 * FRAME.m * FRAME.g


def test_trace_structure():
    init = init_from_altitude(FRAME, 1.0)
    trace = simulate(FRAME, init, dt=1e-4, t_max=0.05)
    assert trace.truncation_reason == TIME_LIMIT
    assert len(trace) == 501
    assert trace.t[0] == 0 and trace.x[0] == 0 and trace.v[0] == init.v0
    assert np.allclose(np.diff(trace.t), 1e-4, rtol=0, atol=1e-15)
    # specific force is the reading g - a
    assert np.allclose(trace.sensor, FRAME.g - trace.a)
    loading = (trace.x >= 0) & (trace.v >= 0)
    assert np.all(trace.sensor[loading] >= 0)
    first = trace.state(0)
    assert first.v == init.v0
    assert sum(1 for _ in trace.states()) == len(trace)


def test_simulate_rejects_bad_grid():
    init = init_from_altitude(FRAME, 1.0)
    for dt, t_max in ((0.0, 0.1), (-1e-4, 0.1), (1e-4, 0.0), (1e-3, 1e-3)):
        with pytest.raises(ValueError):
            simulate(FRAME, init, dt=dt, t_max=t_max)


def test_rest_drop_settles_at_static_sag():
    trace = simulate(FRAME, ImpactInit(0.0, 0.0), dt=1e-4, t_max=1.0)
    assert trace.x[-1] == pytest.approx(FRAME.static_sag, rel=1e-9)
    assert trace.sensor[-1] == pytest.approx(FRAME.g, rel=1e-9)


def test_displacement_limit_truncation():
    t10 = simulate(FRAME, init_from_altitude(FRAME, 1.0), dt=1e-5, t_max=0.05, x_limit=0.016)
    assert t10.truncation_reason == TIME_LIMIT
    assert 0.013 < t10.x.max() < 0.014
    t15 = simulate(FRAME, init_from_altitude(FRAME, 1.5), dt=1e-5, t_max=0.05, x_limit=0.016)
    assert t15.truncation_reason == DISPLACEMENT_LIMIT
    assert t15.x[-1] >= 0.016 and np.all(t15.x[:-1] < 0.016)


def test_rebound_truncation():
    trace = simulate(FRAME, init_from_altitude(FRAME, 1.0), dt=1e-5, t_max=0.05, stop_on_rebound=True)
    assert trace.truncation_reason == REBOUND
    assert trace.v[-1] < 0 and np.all(trace.v[:-1] >= 0)


def test_max_displacement_frozen_values():
    assert max_displacement(FRAME, 1.0) == pytest.approx(RK4_XMAX_1M0, abs=1e-8)
    assert max_displacement(FRAME, 1.5) == pytest.approx(RK4_XMAX_1M5, abs=1e-8)
    assert max_displacement(FRAME, 1.5) == pytest.approx(0.0168, abs=0.0005)
    assert max_displacement(FRAME, 1.0) < max_displacement(FRAME, 1.5)


def test_max_displacement_matches_dense_search():
    from msdimpact.model import _solve

    for p in (FRAME, FRAME.replace(c=200.0), FRAME.replace(c=20.0)):
        init = init_from_altitude(p, 0.8)
        t_star, x_star = dense_max(lambda t: _solve(p, init, t)[0], 0.05)
        assert max_compression(p, init) == pytest.approx(x_star, rel=1e-9)
        assert time_of_max_displacement(p, init) == pytest.approx(t_star, abs=1e-7)


def test_zero_drop_maximum():
    # Heavily damped frame creeps up to the sag and never passes it.
    stiff = FRAME.replace(c=500.0)
    assert math.isinf(time_of_max_displacement(stiff, init_from_altitude(stiff, 0.0)))
    assert max_displacement(stiff, 0.0) == pytest.approx(stiff.static_sag)
    # An underdamped frame set down with no speed overshoots the sag once.
    overshoot = math.exp(-FRAME.damping_ratio * math.pi / math.sqrt(1 - FRAME.damping_ratio**2))
    assert max_displacement(FRAME, 0.0) == pytest.approx(FRAME.static_sag * (1 + overshoot), rel=1e-9)


def test_max_displacement_monotone_on_grid():
    hs = [0.1, 0.3, 0.6, 1.0, 1.5, 3.0, 10.0]
    ks = [2000.0, 4000.0, 7040.0, 12000.0, 20000.0]
    grid = np.array([[max_displacement(FRAME.replace(k=k), h) for k in ks] for h in hs])
    assert np.all(np.diff(grid, axis=0) > 0)  # increasing in h
    assert np.all(np.diff(grid, axis=1) < 0)  # decreasing in k


def test_energy_balance_along_trace():
    for p in (FRAME, FRAME.replace(c=150.0), FRAME.replace(c=2 * math.sqrt(FRAME.k * FRAME.m))):
        init = init_from_altitude(p, 1.2)
        trace = simulate(p, init, dt=1e-5, t_max=0.1)
        dissipated = np.concatenate(
            [[0.0], np.cumsum(0.5 * (p.c * trace.v[1:] ** 2 + p.c * trace.v[:-1] ** 2) * trace.dt)]
        )
        lhs = 0.5 * p.m * trace.v**2 + 0.5 * p.k * trace.x**2 + dissipated
        rhs = 0.5 * p.m * init.v0**2 + p.m * p.g * trace.x
        assert np.max(np.abs(lhs - rhs)) <= 1e-4 * rhs.max()


@settings(max_examples=40, deadline=None)
@given(
    m=st.floats(0.05, 2.0),
    k=st.floats(500.0, 50000.0),
    zeta=st.floats(0.05, 5.0),
    h=st.floats(0.0, 5.0),
    t=st.floats(0.0, 0.5),
)
def test_state_satisfies_equation_of_motion(m, k, zeta, h, t):
    p = ModelParams(m=m, c=2 * zeta * math.sqrt(k * m), k=k)
    s = closed_form_state(p, init_from_altitude(p, h), t)
    scale = p.m * p.g + p.c * abs(s.v) + p.k * abs(s.x) + p.m * abs(s.a)
    assert abs(p.m * s.a + p.c * s.v + p.k * s.x - p.m * p.g) <= 1e-9 * scale
    assert math.isfinite(s.x) and math.isfinite(s.v)
