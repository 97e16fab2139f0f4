"""Exact instrumental-variable identification of optimal treatment regimes."""

__version__ = "0.1.0"

from .bounds import BoundsResult, balke_pearl_bounds, response_type_polytope, sign_from_bounds
from .conditions import (
    CONDITIONS,
    ConditionReport,
    check_condition,
    classify_identification,
    implication_audit,
)
from .estimands import (
    EstimandTable,
    TieError,
    UndefinedEstimandError,
    observed_law,
    optimal_regime,
    policy_objective,
    stratum_estimands,
    value_function,
)
from .montecarlo import SampleDataset, empirical_estimands, evaluate_regret, learn_regime, sample
from .scm import LatentClass, OutcomeModel, ScmSpec, SpecError, Stratum, load_spec, validate_spec
from .search import PredicateExpr, SearchConfig, find_witness, random_spec
