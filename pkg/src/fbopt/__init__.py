"""Optimization-based feedback control for LTI plants with IQC/LMI certificates."""

from .model import (
    DisturbanceSchedule,
    QuadraticCost,
    SmoothCost,
    StateSpace,
    controllability_rank,
    cost_gradient,
    cost_minimizer,
    hurwitz_margin,
    observability_rank,
    sector_constants,
    steady_state_input,
    validate_state_space,
)
from .iqc import (
    PointwiseIqc,
    affine_compose,
    gradient_iqc,
    phi1_iqc,
    phi2_iqc,
    prox_iqc,
    sample_verify_iqc,
)
from .controller import (
    ControllerConfig,
    EstimatorMode,
    FeedbackState,
    Optimizer,
    driver_output,
    observer_rhs,
    phi1_eval,
    phi2_eval,
    prox_eval,
    wellposedness_check,
)
from .closed_loop import (
    AugmentedSystem,
    Equilibrium,
    Layout,
    Trajectory,
    augment,
    closed_loop_rhs,
    decay_rate_estimate,
    equilibrium,
    simulate,
)
from .certify import (
    AlphaSearch,
    LmiProblem,
    StabilityCertificate,
    assemble_lmi,
    max_alpha,
    optimizer_iqc,
    sdp_feasible,
    verify_certificate,
)

__version__ = "0.1.0"
