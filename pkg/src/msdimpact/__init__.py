"""Lumped mass-spring-damper impact model for collision-resilient drone frames."""

__version__ = "0.1.0"

from .energy import EnergyPartition, PayloadClearance, extrapolate, partition
from .estimate import (
    FitResult,
    LossSurface,
    StaticMeasurement,
    StiffnessFit,
    fit_damping,
    fit_stiffness,
    loss_surface,
    trial_loss,
    weighted_loss,
)
from .ingest import (
    AccelLog,
    ImpactSegment,
    TrialGroup,
    generate_synthetic_log,
    parse_log,
    segment_impact,
    write_log,
)
from .model import (
    ImpactInit,
    ImpactState,
    ImpactTrace,
    ModelParams,
    closed_form_state,
    init_from_altitude,
    max_displacement,
    simulate,
)
from .optimize import nelder_mead
from .signals import FilterSpec, Series, absolute_acceleration, apply_filter, design_lowpass, peak
