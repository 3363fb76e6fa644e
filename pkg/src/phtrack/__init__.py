"""Contraction-based trajectory tracking for port-Hamiltonian mechanical
systems: controller construction, certificate verification, fixed-step
simulation, and shipped benchmarks."""

__version__ = "0.1.0"

from .errors import (
    PhtrackError,
    ModelError,
    DesignError,
    MatchingError,
    CertificationError,
    FeasibilityError,
    SimulationError,
    ConfigError,
)
from .ph_core import (
    PhSystem,
    MechanicalPH,
    Annihilator,
    annihilator_of,
    mechanical_system,
    hamiltonian_grad,
    kinetic_grad_q,
    open_loop_vector_field,
)
from .certificates import (
    Box,
    HessianBounds,
    ContractionCertificate,
    hurwitz_check,
    estimate_hessian_bounds,
    n_matrix,
    certify,
    certify_design,
)
from .reference import (
    TimeTable,
    ReferenceTrajectory,
    tabulate,
    tabulate_ode,
    ball_on_wheel_reference,
    feasibility_residual,
    reference_rows,
)
from .controllers import (
    DesignNoVelocity,
    DesignRobust,
    DesignRobustNoVelocity,
    FullyActuatedPotential,
    UnderactuatedPotential,
    design_no_velocity,
    design_robust,
    design_robust_no_velocity,
    control_no_velocity,
    extension_no_velocity,
    control_robust,
    control_robust_no_velocity,
    theta,
    phi,
    gamma1,
    gamma2,
    zeta_dot,
    z_dot,
    mu1,
    mu2,
    assemble_P1,
    assemble_P2,
    assemble_P3,
    design_reduction_S1,
    design_reduction_W,
    design_reduction_F1,
    matching_residual,
    underactuated_ell3,
)
from .simulate import (
    DisturbanceSchedule,
    SimulationTrace,
    rk4_step,
    simulate,
    convergence_fit,
    log_decay_fit,
    random_perturbation,
    write_csv,
    read_csv,
    default_ctrl0,
)
from .scenarios import (
    BallOnWheelParams,
    FullyActuated2DofParams,
    ScenarioBundle,
    build_ball_on_wheel,
    build_fully_actuated_2dof,
    load_scenario,
    matched_ctrl0,
)

__all__ = [name for name in dir() if not name.startswith("_")]
