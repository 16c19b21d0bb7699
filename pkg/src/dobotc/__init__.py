"""Disturbance-observer-based optimal output tracking control for LTI plants."""

__version__ = "0.1.0"

from dobotc.errors import (
    CompensationError,
    ConfigError,
    DataError,
    DimensionError,
    DivergenceError,
    DobotcError,
    IntegrationError,
    NumericalError,
    ObserverDesignError,
    ParameterError,
    SingularEquationError,
    StabilizabilityError,
    SynthesisError,
)
from dobotc.plantmodel import (
    AugmentedPlant,
    LtiPlant,
    ReferenceGen,
    augment,
    build_weighting,
    constant_reference,
    wafer_plant,
    validate,
)
from dobotc.synthesis import (
    CompensatorGain,
    ObserverDesign,
    TrackingGain,
    compensator_gain,
    design_observer,
    lqr_tracking_gain,
)
from dobotc.simulate import (
    DisturbanceSignal,
    Metrics,
    SimConfig,
    Trajectory,
    cost_J,
    evaluate_disturbance,
    metrics,
    rk4_step,
    simulate_closed_loop,
)
