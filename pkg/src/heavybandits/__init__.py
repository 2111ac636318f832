"""Regret minimisation for heavy-tailed multi-armed bandits.

Arms are only known to satisfy ``E|X|^(1+eps) <= B``. The package provides
the KLinf divergence for that class, the resulting upper-confidence
indices, the batched KLinf-UCB policy and baselines, and a small simulation
harness.
"""
from .distributions import (
    DiscreteDist,
    DivergentMomentError,
    EmpiricalDistribution,
    GenParetoParams,
    InfiniteMeanError,
    MomentClass,
    abs_moment,
    class_max_mean,
    dist_mean,
    genpareto_mean,
    genpareto_sample,
    sample_arm,
)
from .indices import (
    IndexQuery,
    InfeasibleQueryError,
    RobustUcbTracker,
    TruncationMode,
    TruncationSpec,
    index_bisect,
    index_bounded01,
    index_dual,
    index_search,
    robust_ucb_index,
    truncated_mean,
    truncation_envelope,
)
from .klinf import (
    ConvergenceError,
    DualPoint,
    InfeasibleTargetError,
    KlinfResult,
    dual_box,
    dual_feasible,
    dual_objective,
    klinf,
    klinf_bounded01,
    moment_projection,
    primal_reconstruct,
)
from .policies import (
    ArmState,
    PolicyConfig,
    PolicyName,
    PolicyState,
    RegretTrace,
    ThresholdKind,
    ThresholdVariant,
    batch_size,
    run_policy,
    select_arm,
    threshold_value,
)
from .simulator import (
    BanditInstance,
    ClassMembershipError,
    DegenerateInstanceError,
    concentration_check,
    deviation_maxima,
    lower_bound_curve,
    run_many,
)

__version__ = "0.1.0"
