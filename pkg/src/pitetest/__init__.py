"""Permutation test for heterogeneity in predicted individual treatment effects."""

__version__ = "0.1.0"

from .data import ArmView, Dataset, Schema, permute_treatment, read_csv, split_arms, validate, write_csv
from .permtest import PermutationReport, exhaustive_null_distribution, run_permutation_test
from .pite import PiteResult, estimate_pite, pite_effect_size, screen_interactions, sd_of_pite
from .predictors import ForestParams, PredictorSpec
from .simgen import AlsDesign, NullDesign, Spread, generate_als, generate_null

__all__ = [
    "AlsDesign",
    "ArmView",
    "Dataset",
    "ForestParams",
    "NullDesign",
    "PermutationReport",
    "PiteResult",
    "PredictorSpec",
    "Schema",
    "Spread",
    "estimate_pite",
    "exhaustive_null_distribution",
    "generate_als",
    "generate_null",
    "permute_treatment",
    "pite_effect_size",
    "read_csv",
    "run_permutation_test",
    "screen_interactions",
    "sd_of_pite",
    "split_arms",
    "validate",
    "write_csv",
]
