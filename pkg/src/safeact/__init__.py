"""safeact: constraint-manifold safety filter with a planar air-hockey harness.

The library wraps any action-producing policy over a control-affine system
and maps its nominal actions into the tangent space of a slack-augmented
constraint manifold, guaranteeing constraint-satisfying state transitions.
The :mod:`safeact.airhockey` / :mod:`safeact.harness` modules reproduce a
hitting-task evaluation with safety on/off, per-trajectory maximum
constraint violation, and success rate.
"""

from .airhockey import (
    EpisodeConfig,
    Observation,
    TableGeometry,
    WorldState,
    check_success,
    default_constraints,
    observe,
    reset_episode,
    step_world,
)
from .constraints import (
    ConstraintEvaluation,
    ConstraintSet,
    box_constraints,
    evaluate,
    finite_difference_jacobian,
    max_violation,
    point_in_rectangle_constraints,
    stack_constraints,
)
from .dynamics import (
    ArmModel,
    ControlAffineSystem,
    default_arm,
    dls_inverse_kinematics,
    ee_jacobian,
    forward_kinematics,
    link_jacobian,
    make_velocity_integrator,
    step,
)
from .harness import (
    EpisodeResult,
    ExperimentConfig,
    compare_report,
    make_policy,
    run_episode,
    run_experiment,
)
from .policies import (
    AdversarialPolicy,
    ExpertParams,
    RandomPolicy,
    RemotePolicy,
    ScriptedExpertPolicy,
    WireMessage,
    adversarial_policy_action,
    decode_message,
    encode_message,
    random_policy_action,
    scripted_expert_action,
)
from .safety import (
    FilterConfig,
    FilterDiagnostics,
    SafetyFilter,
    SlackState,
    augmented_jacobian,
    initialize_slack,
    slack_map,
    slack_map_derivative,
    tangent_projector,
    weighted_pseudoinverse,
)

__version__ = "0.1.0"
