"""q-Ornstein-Uhlenbeck process toolkit.

Explicit stationary and transition densities, inverse-CDF path sampling on
dyadic time grids, boundary-crossing detection, and the quadrature/Monte
Carlo experiments that verify the cubic small-margin crossing law and the
Poisson behavior of crossing counts over enlarged windows.
"""

from .errors import (
    BracketInvalid,
    BudgetExceeded,
    DomainError,
    MaxSubdivisionsExceeded,
    NonConvergent,
    NonFinite,
    QouError,
    SingularInput,
    WindowOutOfRange,
)
from .qseries import (
    DEFAULT_SERIES,
    Psi_inf,
    QParams,
    SeriesConfig,
    alpha_q,
    phi,
    psi,
    qpochhammer_inf,
)
from .numerics import (
    DEFAULT_QUAD,
    QuadConfig,
    QuadResult,
    integrate_1d,
    integrate_2d,
    integrate_edge,
    invert_monotone,
)
from .density import (
    DensityPoint,
    TransitionQuery,
    chapman_kolmogorov_residual,
    conditional_cdf,
    kernel_ratio,
    marginal_cdf,
    marginal_pdf,
    moment,
    transition_pdf,
)
from .sampler import (
    PathGrid,
    RngSeed,
    TransitionTable,
    build_transition_table,
    sample_stationary,
    sample_transition,
    simulate_path,
)
from .jumps import JumpCount, JumpEvent, JumpSpec, bernoulli_indicators, count_events, detect_jumps
from .experiments import (
    Estimate,
    ExperimentReport,
    margin_mass_asymptotics,
    mc_double_jump,
    mc_jump_probability,
    mc_poisson_limit,
    mixing_decay,
    quadrature_jump_rate,
    verify_kernel_bounds,
    verify_small_rho_expansions,
)

__version__ = "0.1.0"
