"""Scenario-tree wealth-process laboratory.

Finite filtered spaces, discrete stochastic calculus, integration-robust
smallness metrics, rebalancing-closed wealth sets with arbitrage
certificates, growth-optimal and utility-duality solvers, and convergence
experiments, all with checkable numerics.
"""

from .calculus import (
    DoobMeyerParts,
    SupermartingaleVerdict,
    doob_meyer,
    is_supermartingale,
    quadratic_covariation,
    running_sup,
    stochastic_integral,
    total_variation,
)
from .convergence import (
    QvStabilityReport,
    SconvReport,
    SupermartingaleDecomposition,
    UcpReport,
    decompose,
    qv_stability_experiment,
    sconv_criterion,
    ucp_experiment,
)
from .duality import (
    ApproximationReport,
    BipolarVerdict,
    DualityResult,
    FinDualReport,
    NumeraireResult,
    PolarVerdict,
    UtilitySpec,
    approximating_sequence,
    bipolar_membership,
    direct_terminal_membership,
    fin_dual_check,
    numeraire,
    polar_check,
    primal_hull_utility,
    solve_utility,
)
from .metrics import (
    EmeryOptions,
    EmeryResult,
    FatouVerdict,
    emery_distance,
    emery_metric,
    emery_objective,
    fatou_check,
    p_metric,
    up_metric,
)
from .tree import (
    AdaptedProcess,
    Measure,
    PredictableProcess,
    ScenarioTree,
    binomial_tree,
    build_tree,
    conditional_expectation,
    node_probability,
    uniform_tree,
)
from .wealthset import (
    MembershipResult,
    Na1Verdict,
    WealthSet,
    arbitrage_wealth_from_certificate,
    blend,
    contains,
    fork_convex_combine,
    growth_hull,
    na1_check,
    sample_process,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
