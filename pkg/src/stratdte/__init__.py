"""Distributional and probability treatment effects under stratified
randomization, with cross-fitted regression adjustment.

The library estimates contrasts of outcome CDFs (and bin probabilities)
between experiment arms when assignment was randomized within strata,
tightens them with cross-fitted learners, and provides pointwise and
uniform inference built on per-unit influence contributions.
"""

from .core import (
    Dataset,
    StratumTable,
    ThresholdGrid,
    explicit_grid,
    quantile_grid,
    validate_dataset,
)
from .errors import (
    BadFoldCount,
    BadLevel,
    BadRepetitions,
    ConfigError,
    DataError,
    DegenerateCell,
    EmptyProbs,
    EmptyStratum,
    EstimationError,
    GridMismatch,
    MissingColumn,
    MissingNuisance,
    NotIncreasing,
    ParseError,
    SingularDesignWarning,
    SmallCellWarning,
    StratdteError,
    UnknownLearner,
    UnknownScheme,
    UnsupportedArms,
    ZeroBaseline,
)
from .estimators import (
    CdfEstimate,
    EffectCurve,
    PmfEstimate,
    adjusted_cdf,
    adjusted_pmf,
    dte,
    empirical_cdf,
    empirical_pmf,
    pte,
)
from .inference import (
    BootstrapBand,
    CovKernelEstimate,
    InfluenceTable,
    VarianceDecomposition,
    classical_variance,
    influence,
    moment_variance,
    multiplier_bootstrap,
    pointwise_ci,
    variance,
    variance_decomposition,
    with_band,
)
from .learners import LEARNER_KINDS, LearnerSpec, fit_learner
from .nuisance import (
    FoldPlan,
    NuisanceFit,
    fit_crossfit,
    make_folds,
    stratum_cdf_fit,
    stratum_means,
)
from .randomization import (
    SCHEMES,
    ConvergenceReport,
    SchemeSpec,
    assign,
    check_convergence,
)
from .simulation import (
    DECILES,
    DgpSpec,
    EstimatorConfig,
    EstimatorMetrics,
    GroundTruth,
    McReport,
    default_configs,
    gen_continuous,
    gen_discrete,
    ground_truth,
    oracle_fit,
    rmse_reduction,
    run_monte_carlo,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "DECILES",
    "Dataset",
    "StratumTable",
    "ThresholdGrid",
    "explicit_grid",
    "quantile_grid",
    "validate_dataset",
    "StratdteError",
    "ConfigError",
    "DataError",
    "EstimationError",
    "EmptyStratum",
    "DegenerateCell",
    "MissingColumn",
    "ParseError",
    "EmptyProbs",
    "NotIncreasing",
    "UnknownScheme",
    "UnsupportedArms",
    "UnknownLearner",
    "BadFoldCount",
    "BadLevel",
    "BadRepetitions",
    "GridMismatch",
    "MissingNuisance",
    "ZeroBaseline",
    "SmallCellWarning",
    "SingularDesignWarning",
    "CdfEstimate",
    "PmfEstimate",
    "EffectCurve",
    "empirical_cdf",
    "adjusted_cdf",
    "empirical_pmf",
    "adjusted_pmf",
    "dte",
    "pte",
    "InfluenceTable",
    "CovKernelEstimate",
    "VarianceDecomposition",
    "BootstrapBand",
    "influence",
    "variance",
    "classical_variance",
    "moment_variance",
    "variance_decomposition",
    "pointwise_ci",
    "multiplier_bootstrap",
    "with_band",
    "LEARNER_KINDS",
    "LearnerSpec",
    "fit_learner",
    "FoldPlan",
    "NuisanceFit",
    "make_folds",
    "fit_crossfit",
    "stratum_means",
    "stratum_cdf_fit",
    "SCHEMES",
    "SchemeSpec",
    "ConvergenceReport",
    "assign",
    "check_convergence",
    "DgpSpec",
    "EstimatorConfig",
    "EstimatorMetrics",
    "GroundTruth",
    "McReport",
    "default_configs",
    "gen_continuous",
    "gen_discrete",
    "ground_truth",
    "oracle_fit",
    "rmse_reduction",
    "run_monte_carlo",
]
