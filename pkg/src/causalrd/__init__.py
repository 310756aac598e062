"""Causal discrimination discovery through propensity score weighting."""

__version__ = "0.1.0"

from .dataset import (AttributeSchema, BaseRates, Dataset, MinMaxNormalizer, PositiveCondition,
                      Record, SchemaConfig, base_rates, binarize_decision, load_dataset,
                      make_dataset, normalize_numeric, partition_by_group, write_dataset)
from .discovery import (CausalSituationTester, IndividualScore, Rule, classify,
                        compare_rule_across_groups, extract_rules, score_all)
from .measures import (ContingencyTable, causal_negative_rate, causal_risk_difference,
                       contingency, risk_difference)
from .neighborhood import KSet, RankedNeighbor, distance, kset, rank_neighbors
from .propensity import (CovariateSelection, CovariateSelector, PropensityModel,
                         fit_propensity, information_gain, propensity_score,
                         select_covariates, weight_of)
from .tamper import TamperSpec, tamper
from .tree import RegressionTree, learn_tree
from .trends import TrendRow, bin_trends

__all__ = [
    "AttributeSchema", "BaseRates", "CausalSituationTester", "ContingencyTable",
    "CovariateSelection", "CovariateSelector", "Dataset", "IndividualScore", "KSet",
    "MinMaxNormalizer", "PositiveCondition", "PropensityModel", "RankedNeighbor", "Record",
    "RegressionTree", "Rule", "SchemaConfig", "TamperSpec", "TrendRow", "base_rates",
    "bin_trends", "binarize_decision", "causal_negative_rate", "causal_risk_difference",
    "classify", "compare_rule_across_groups", "contingency", "distance", "extract_rules",
    "fit_propensity", "information_gain", "kset", "learn_tree", "load_dataset", "make_dataset",
    "normalize_numeric", "partition_by_group", "propensity_score", "rank_neighbors",
    "risk_difference", "score_all", "select_covariates", "tamper", "weight_of",
    "write_dataset",
]
