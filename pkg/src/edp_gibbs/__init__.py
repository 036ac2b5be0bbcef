"""Tilted-density calculus and conditional Gibbs limits for light tails."""

from .densities import (
    DensitySpec,
    QBoundCheck,
    RegularityReport,
    appendix_decay_diagnostics,
    check_q_bound,
    double_exp,
    epsilon_profile,
    from_document,
    hazard_and_derivatives,
    hazard_floor,
    local_scale,
    log_density,
    psi_inverse,
    regularity_report,
    to_document,
    weibull,
)
from .conditional import (
    ConditionalReport,
    ConditioningPoint,
    ConvolutionLadder,
    SequentialTilts,
    concentration_check,
    conditioning_point,
    exact_conditional_density,
    exact_marginal_grid,
    gaussian_baseline,
    gibbs_adaptive,
    gibbs_fixed,
    growth_condition,
    sequential_tilts,
    tv_distance,
)
from .edgeworth import (
    EdgeworthReport,
    GridDensity,
    edgeworth_density,
    edgeworth_error_scan,
    n_fold_convolution,
    normalized_tilted_grid,
    rho_grid,
)
from .errors import (
    AcceptanceStarvationError,
    BoundaryError,
    DegenerateEstimateError,
    EdpError,
    EvaluationOverflowError,
    IncompatibleConditionError,
    NonConcaveWindowError,
    NumericError,
    PreconditionError,
    SubMeanTargetError,
    UnreachableTargetError,
    WrapAroundError,
)
from .tilting import (
    M6,
    MomentComparison,
    PsiExpansion,
    TiltRecord,
    Window,
    asymptotic_moments,
    laplace_psi_expansion,
    log_mgf,
    moments,
    saddle_window,
    skewness_ratio,
    solve_tilt,
    tilted_log_density,
)
from .rng import SHARD_SIZE, sharded_uniforms, stream, worker_count
from .sampling import (
    DemocracyEstimate,
    democracy_demo,
    quantile_table,
    sample_conditional_exceedance,
    sample_conditional_point,
    sample_tilted,
)
from .tail import (
    RatePoint,
    TailEstimate,
    eta_schedule,
    exceedance_density,
    exceedance_grid,
    exceedance_raw_log_integral,
    mc_tail_estimate,
    point_density_H,
    rate_I,
    split_mass_ratio,
    tail_prob_approx,
)

__version__ = "0.1.0"
