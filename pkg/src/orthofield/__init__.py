"""Exact and Monte Carlo laboratory for stationary linear random fields on the
two-dimensional integer lattice.

The package builds scale-indexed three-point noise fields, splits the derived
linear fields into a two-parameter martingale part plus coboundary
corrections, evaluates certified norm and summability diagnostics, simulates
normalized rectangular partial sums, and constructs a stacked-levels
counterexample system whose column sums defeat the usual normal limit.
"""

from .errors import (
    ConfigError,
    DegenerateSigmaError,
    InsufficientReplicationsError,
    InvalidLawError,
    InvalidParameterError,
    OrthofieldError,
    ResourceLimitError,
    ScheduleOverflowError,
    SurrogateValidityError,
    TooFewSamplesError,
    UnsupportedFamilyError,
)
from .noise import (
    LawFamily,
    LawMoments,
    StreamKey,
    ThreePointLaw,
    law_moments,
    sample_atom,
    sample_atoms,
    site_hashes,
    stream_root,
    uniform_from_hash,
)
from .fields import (
    CoefficientField,
    PartialSumSample,
    ScaleWeights,
    TruncationSpec,
    WindowWeights,
    auto_truncation,
    exact_second_moment,
    export_weights_csv,
    form_window_weights,
    retained_second_moment,
    sample_partial_sum,
    sample_partial_sums,
    tail_bound,
    window_weights,
)
from .decomposition import (
    DecompositionTerms,
    LinearForm,
    MartingaleNorm,
    coboundary_growth,
    decompose_diagonal,
    decompose_superlinear,
    field_form,
    hannan_partial_sums,
    hannan_term,
    l1_projective_partial,
    l1_projective_tail,
    m_norm_l2,
    recombine,
)
from .conditions import (
    CONDITION_SLUGS,
    ConditionEntry,
    ConditionReport,
    EvidenceRow,
    condition_report,
)
from .stats import (
    EmpiricalSummary,
    ExceedanceEstimate,
    KsResult,
    MeanAbsRatio,
    ks_distance_to_normal,
    mean_abs_ratio,
    normal_cdf,
    summarize,
)
from .tower import (
    ColumnSimSpec,
    CounterexampleRun,
    ExceedanceBound,
    ScaleSchedule,
    ScheduleStep,
    TowerFunction,
    TowerScale,
    exact_stat_variance,
    exceedance_exact,
    multi_scale_l2_bound,
    scale_l1_norms,
    schedule_scales,
    shifted_diff,
    simulate_counterexample,
    sq_sum,
    tower_scale,
    verify_schedule,
)

__version__ = "0.1.0"
