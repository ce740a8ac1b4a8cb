"""goylab: a numerical laboratory for stochastic dyadic shell models.

Simulate the small-noise shell-model SDE, solve the controlled deterministic
skeleton, minimize the large-deviation action with exact discrete adjoints,
and check the supporting operator identities, energy estimates, and
rare-event scaling by Monte Carlo — all at desk scale with reproducible
seeding.
"""
from .space import (
    ModelParams,
    Variant,
    WNorm,
    as_state,
    basis_state,
    check_finite,
    compensated_sum,
    inner_h,
    norm,
    project,
    wavenumbers,
    zero_state,
)
from .operators import (
    OperatorConstantsReport,
    apply_a,
    apply_b,
    apply_b_general,
    apply_b_sabra,
    drift_f,
    estimate_operator_constants,
    quadratic_term,
)
from .noise import (
    AdditiveNoise,
    CovarianceSpec,
    DiagonalMultiplicativeNoise,
    NoiseHypothesesReport,
    check_noise_hypotheses,
    h0_inner,
    h0_norm,
    lq_norm,
    member_stream,
    sample_wiener_increment,
)
from .integrate import (
    BlowupError,
    ControlPath,
    EnergyBudget,
    Forcing,
    TimeGrid,
    Trajectory,
    energy_budget,
    girsanov_log_lr,
    integrate_controlled_sde,
    integrate_sde,
    integrate_skeleton,
)
from .action import (
    ActionProblem,
    ActionResult,
    ContinuityReport,
    PointTarget,
    RateRow,
    SphereTarget,
    action_gradient,
    action_value,
    continuity_check,
    minimize_action,
    rate_function,
)
from .experiments import (
    EnergyReport,
    EnsembleSpec,
    LdpRow,
    LdpTable,
    RareEventEstimate,
    TerminalSphereEvent,
    WeakConvergenceReport,
    ldp_check,
    rare_event_probability,
    verify_energy_estimates,
    weak_convergence_study,
    wilson_interval,
)

__version__ = "0.1.0"

# cli_io reads __version__ for run manifests, so it imports after the binding
from .cli_io import (  # noqa: E402
    ConfigError,
    RunConfig,
    RunManifest,
    config_hash,
    parse_config,
    read_binary,
    run,
    serialize_config,
)

__all__ = [
    "ModelParams",
    "Variant",
    "WNorm",
    "as_state",
    "basis_state",
    "check_finite",
    "compensated_sum",
    "inner_h",
    "norm",
    "project",
    "wavenumbers",
    "zero_state",
    "OperatorConstantsReport",
    "apply_a",
    "apply_b",
    "apply_b_general",
    "apply_b_sabra",
    "drift_f",
    "estimate_operator_constants",
    "quadratic_term",
    "AdditiveNoise",
    "CovarianceSpec",
    "DiagonalMultiplicativeNoise",
    "NoiseHypothesesReport",
    "check_noise_hypotheses",
    "h0_inner",
    "h0_norm",
    "lq_norm",
    "member_stream",
    "sample_wiener_increment",
    "BlowupError",
    "ControlPath",
    "EnergyBudget",
    "Forcing",
    "TimeGrid",
    "Trajectory",
    "energy_budget",
    "girsanov_log_lr",
    "integrate_controlled_sde",
    "integrate_sde",
    "integrate_skeleton",
    "ActionProblem",
    "ActionResult",
    "ContinuityReport",
    "PointTarget",
    "RateRow",
    "SphereTarget",
    "action_gradient",
    "action_value",
    "continuity_check",
    "minimize_action",
    "rate_function",
    "EnergyReport",
    "EnsembleSpec",
    "LdpRow",
    "LdpTable",
    "RareEventEstimate",
    "TerminalSphereEvent",
    "WeakConvergenceReport",
    "ldp_check",
    "rare_event_probability",
    "verify_energy_estimates",
    "weak_convergence_study",
    "wilson_interval",
    "ConfigError",
    "RunConfig",
    "RunManifest",
    "config_hash",
    "parse_config",
    "read_binary",
    "run",
    "serialize_config",
    "__version__",
]
