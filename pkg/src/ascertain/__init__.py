"""Detection and correction of differential ascertainment in multi-list
case counts.

The package fits sequential logistic capture models with a group-level
ascertainment shift, estimates true group totals from incomplete
contingency tables, completes tables by log-linear capture-recapture, and
calibrates a three-sided equivalence/superiority/inferiority test of the
shift by parametric bootstrap.
"""

from . import backend
from .errors import (
    AscertainError,
    FitError,
    NumericalError,
    ValidationError,
)
from .estimation import FitResult, FitSpec, fit, odds_ratio, profile_gamma
from .likelihood import (
    RandomEffectsParams,
    complete_loglik,
    joint_loglik,
    observed_loglik,
    re_complete_loglik,
    re_observed_loglik,
)
from .loglinear import (
    LoglinearModel,
    ModelSelectionReport,
    complete_tables,
    fit_loglinear,
    lincoln_petersen,
    missing_cell,
    select_model,
)
from .rasch import (
    PoissonRates,
    RaschParams,
    capture_prob,
    cell_probabilities,
    cell_probability,
    expected_missing,
    miss_probability,
)
from .simstudy import SimConfig, bias_study, estimator_study, generate_population, or_bias
from .tables import ContingencyTable, RecordRow, aggregate, as_pair, read_tables_csv, write_tables_csv
from .threesided import (
    NullDistribution,
    ThreeSidedOutcome,
    bootstrap_null,
    decide,
    delta_thresholds,
)

__version__ = "0.1.0"

__all__ = [
    "AscertainError",
    "ContingencyTable",
    "FitError",
    "FitResult",
    "FitSpec",
    "LoglinearModel",
    "ModelSelectionReport",
    "NullDistribution",
    "NumericalError",
    "PoissonRates",
    "RandomEffectsParams",
    "RaschParams",
    "RecordRow",
    "SimConfig",
    "ThreeSidedOutcome",
    "ValidationError",
    "aggregate",
    "as_pair",
    "backend",
    "bias_study",
    "bootstrap_null",
    "capture_prob",
    "cell_probabilities",
    "cell_probability",
    "complete_loglik",
    "complete_tables",
    "decide",
    "delta_thresholds",
    "estimator_study",
    "expected_missing",
    "fit",
    "fit_loglinear",
    "generate_population",
    "joint_loglik",
    "lincoln_petersen",
    "miss_probability",
    "missing_cell",
    "observed_loglik",
    "odds_ratio",
    "or_bias",
    "profile_gamma",
    "re_complete_loglik",
    "re_observed_loglik",
    "read_tables_csv",
    "select_model",
    "write_tables_csv",
]
