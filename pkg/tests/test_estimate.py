import math

import numpy as np
import pytest

from msdimpact.estimate import (
    FIXED_K,
    JOINT,
    DegenerateDataError,
    FitResult,
    StaticMeasurement,
    adopt,
    fit_damping,
    fit_stiffness,
    group_loss,
    loss_surface,
    trial_loss,
    weighted_loss,
)
from msdimpact.ingest import TrialGroup, generate_synthetic_log, group_trials, segment_impact
from msdimpact.model import ModelParams
from msdimpact.signals import FilterSpec

FRAME = ModelParams(0.241, 46.0, 7040.0)
SPEC = FilterSpec()
W = 2.36


def synth_groups(params=FRAME, counts=(10, 10, 10), sigma=0.0, seed=0):
    trials = []
    s = seed * 100_000
    for h, n in zip((0.5, 1.0, 1.5), counts):
        for _ in range(n):
            log, truth = generate_synthetic_log(params, h, SPEC, noise_sigma=sigma, seed=s)
            s += 1
            trials.append((log, truth))
    return group_trials(trials)


@pytest.fixture(scope="module")
def clean_groups():
    return synth_groups(counts=(3, 3, 3))


def test_fit_stiffness_exact_line():
    xs = np.array([1, 2, 4, 8]) * 1e-3
    data = [StaticMeasurement(x, W + 7040.0 * x) for x in xs]
    fit = fit_stiffness(data, W)
    assert fit.k == pytest.approx(7040.0, rel=1e-12)
    assert fit.rmse == pytest.approx(0.0, abs=1e-12)
    assert fit.intercept == W


def test_fit_stiffness_single_point():
    assert fit_stiffness([StaticMeasurement(0.01, W + 70.4)], W).k == pytest.approx(7040.0)


def test_fit_stiffness_noisy():
    rng = np.random.default_rng(0)
    xs = rng.uniform(0.0, 0.016, size=50)
    data = [StaticMeasurement(x, max(0.0, W + 7040.0 * x + rng.normal(0, 1.0))) for x in xs]
    assert fit_stiffness(data, W).k == pytest.approx(7040.0, rel=0.02)


def test_fit_stiffness_degenerate():
    with pytest.raises(DegenerateDataError):
        fit_stiffness([StaticMeasurement(0.0, 3.0), StaticMeasurement(0.0, 2.0)], W)
    with pytest.raises(DegenerateDataError):
        fit_stiffness([], W)


def test_trial_loss_self_consistent(clean_groups):
    for group in clean_groups:
        for trial in group.trials:
            assert trial_loss(FRAME, SPEC, trial) < 1e-10


def test_trial_loss_with_detected_segment():
    log, _ = generate_synthetic_log(FRAME, 1.0, SPEC, seed=9)
    assert trial_loss(FRAME, SPEC, (log, segment_impact(log))) < 1e-10


def test_trial_loss_noise_level():
    sigma = 0.5
    losses = []
    for seed in range(200):
        log, truth = generate_synthetic_log(FRAME, 1.0, SPEC, noise_sigma=sigma, seed=seed)
        losses.append(trial_loss(FRAME, SPEC, (log, segment_impact(log))))
    assert np.mean(losses) == pytest.approx(sigma**2, rel=0.3)


def test_trial_loss_prefers_generator():
    log, truth = generate_synthetic_log(FRAME, 1.5, SPEC, noise_sigma=0.5, seed=1)
    base = trial_loss(FRAME, SPEC, (log, truth))
    assert trial_loss(FRAME.replace(c=92.0), SPEC, (log, truth)) > base


def test_trial_loss_empty_window():
    log, truth = generate_synthetic_log(FRAME, 1.0, SPEC, seed=0)
    from msdimpact.ingest import ImpactSegment

    seg = ImpactSegment(truth.freefall_start, truth.impact_start, truth.impact_start)
    with pytest.raises(DegenerateDataError):
        trial_loss(FRAME, SPEC, (log, seg))


@pytest.mark.parametrize("dc, dk", [(0.5, 0), (-0.5, 0), (0, 0.5), (0, -0.5), (0.5, 0.5), (-0.5, -0.5)])
def test_generator_params_are_a_minimum(clean_groups, dc, dk):
    trial = clean_groups[2].trials[0]
    other = FRAME.replace(c=FRAME.c * (1 + dc), k=FRAME.k * (1 + dk))
    assert trial_loss(FRAME, SPEC, trial) <= trial_loss(other, SPEC, trial)


def test_group_loss_matches_trial_losses():
    groups = synth_groups(counts=(4, 4, 4), sigma=0.7, seed=3)
    p = FRAME.replace(c=40.0)
    for g in groups:
        expected = np.mean([trial_loss(p, SPEC, t) for t in g.trials])
        assert group_loss(p, SPEC, g) == pytest.approx(expected, rel=1e-12)


def test_weighted_loss_equal_group_weights():
    groups = synth_groups(counts=(5, 3, 2), sigma=0.5, seed=4)
    p = FRAME.replace(c=50.0)
    means = [np.mean([trial_loss(p, SPEC, t) for t in g.trials]) for g in groups]
    assert weighted_loss(p, SPEC, groups) == pytest.approx(sum(means) / 3, rel=1e-12)
    assert weighted_loss(p, SPEC, groups[:1]) == pytest.approx(means[0], rel=1e-12)


def test_weighted_loss_unequal_group_sizes():
    # (a + b + c)/3 no matter how many trials each altitude has
    groups = synth_groups(counts=(101, 97, 89), sigma=0.5, seed=5)
    p = FRAME.replace(c=55.0)
    per_group = [group_loss(p, SPEC, g) for g in groups]
    pooled = np.mean([trial_loss(p, SPEC, t) for g in groups for t in g.trials])
    assert weighted_loss(p, SPEC, groups) == pytest.approx(np.mean(per_group), rel=1e-12)
    assert weighted_loss(p, SPEC, groups) != pytest.approx(pooled, rel=1e-6)


def test_weighted_loss_invariances():
    groups = synth_groups(counts=(3, 4, 2), sigma=0.5, seed=6)
    p = FRAME.replace(c=42.0, k=7500.0)
    base = weighted_loss(p, SPEC, groups)
    doubled = [TrialGroup(groups[0].altitude, groups[0].trials * 2)] + groups[1:]
    assert weighted_loss(p, SPEC, doubled) == base
    assert weighted_loss(p, SPEC, groups[::-1]) == base
    with pytest.raises(ValueError):
        weighted_loss(p, SPEC, [])


def test_fit_damping_fixed_k_noise_free():
    groups = synth_groups(counts=(5, 5, 5))
    res = fit_damping(groups, SPEC, FRAME.m, FIXED_K, c0=50.0, k0=7040.0)
    assert res.converged
    assert res.k == 7040.0
    assert res.c == pytest.approx(46.0, rel=1e-3)
    assert res.loss >= 0


def test_fit_damping_joint_noisy():
    groups = synth_groups(counts=(30, 30, 30), sigma=0.5, seed=7)
    res = fit_damping(groups, SPEC, FRAME.m, JOINT, c0=50.0, k0=7040.0)
    assert res.converged and res.mode == JOINT
    assert res.c == pytest.approx(46.0, rel=0.05)
    assert res.k == pytest.approx(7040.0, rel=0.05)


def test_fit_damping_rejects_empty():
    with pytest.raises(ValueError):
        fit_damping([], SPEC, FRAME.m, FIXED_K, 50.0, 7040.0)


def test_fit_damping_reports_non_convergence():
    from msdimpact.optimize import NelderMeadOptions

    groups = synth_groups(counts=(2, 2, 2), sigma=0.5)
    res = fit_damping(groups, SPEC, FRAME.m, JOINT, 50.0, 7040.0, options=NelderMeadOptions(max_iter=2))
    assert isinstance(res, FitResult)
    assert not res.converged


@pytest.mark.slow
def test_recovery_error_shrinks_with_noise():
    mean_err = []
    for sigma in (1.0, 0.5, 0.1, 0.0):
        errs = []
        for seed in range(10):
            groups = synth_groups(counts=(10, 10, 10), sigma=sigma, seed=seed)
            res = fit_damping(groups, SPEC, FRAME.m, JOINT, 50.0, 7040.0)
            errs.append(math.hypot(res.c / 46.0 - 1, res.k / 7040.0 - 1))
        mean_err.append(np.mean(errs))
    assert all(a > b for a, b in zip(mean_err, mean_err[1:])), mean_err


def test_adopt_prefers_static_k_when_close():
    joint = FitResult(46.315, 6996.12, 12.559869, 50, True, JOINT)
    static = FitResult(46.0, 7040.0, 12.559883, 20, True, FIXED_K)
    assert adopt(joint, static) is static
    worse = FitResult(46.0, 7040.0, 13.0, 20, True, FIXED_K)
    assert adopt(joint, worse) is joint


def test_loss_surface_grid():
    groups = synth_groups(counts=(2, 2, 2), sigma=0.2, seed=8)
    surf = loss_surface(groups, SPEC, FRAME.m, (40.0, 52.0), (6540.0, 7540.0), (7, 11))
    assert surf.loss.shape == (7, 11)
    assert np.allclose(surf.transformed, np.log(1 + surf.loss))
    i, j = surf.argmin()
    assert surf.c_values[i] == pytest.approx(46.0)
    assert surf.k_values[j] == pytest.approx(7040.0)
    # exhaustive check against direct evaluation
    assert surf.loss[i, j] == pytest.approx(weighted_loss(FRAME, SPEC, groups), rel=1e-12)


def test_loss_surface_two_by_two():
    groups = synth_groups(counts=(1, 1, 1))
    surf = loss_surface(groups, SPEC, FRAME.m, (40.0, 50.0), (7000.0, 7100.0), 2)
    assert surf.loss.shape == (2, 2) and surf.transformed.shape == (2, 2)
    assert len(surf.c_values) == 2 and len(surf.k_values) == 2


def test_loss_surface_preconditions():
    groups = synth_groups(counts=(1, 1, 1))
    with pytest.raises(ValueError):
        loss_surface(groups, SPEC, FRAME.m, (50.0, 40.0), (7000.0, 7100.0), 3)
    with pytest.raises(ValueError):
        loss_surface(groups, SPEC, FRAME.m, (40.0, 50.0), (7000.0, 7100.0), 1)
