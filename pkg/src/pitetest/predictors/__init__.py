"""Per-arm outcome models: OLS and a regression random forest.

Each model is fit on the rows of one arm and then predicts for every
individual in a dataset, regardless of that individual's actual arm.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..data import ArmView, Dataset
from ..errors import ConfigError, DegenerateArm
from .forest import ForestModel, ForestParams, fit_trees, forest_from_trees
from .linear import LinearModel, augment, fit_ols, ols_batch

__all__ = [
    "ForestModel",
    "ForestParams",
    "LinearModel",
    "PredictorSpec",
    "fit_arm",
    "fit_forest",
    "fit_linear",
    "forest_from_trees",
    "predict_forest",
    "predict_linear",
]

LINEAR = "linear"
FOREST = "forest"


@dataclass(frozen=True)
class PredictorSpec:
    kind: str = LINEAR
    forest: ForestParams | None = None

    def __post_init__(self):
        if self.kind not in (LINEAR, FOREST):
            raise ConfigError(f"unknown predictor kind {self.kind!r}")
        if self.kind == FOREST and self.forest is None:
            object.__setattr__(self, "forest", ForestParams())
        if self.kind == LINEAR and self.forest is not None:
            raise ConfigError("forest parameters given for a linear predictor")

    @classmethod
    def linear(cls):
        return cls(LINEAR)

    @classmethod
    def random_forest(cls, **params):
        return cls(FOREST, ForestParams(**params))

    def to_dict(self):
        out = {"kind": self.kind}
        if self.forest is not None:
            out["forest"] = asdict(self.forest)
        return out

    @classmethod
    def from_dict(cls, d):
        kind = d.get("kind", LINEAR)
        forest = d.get("forest")
        return cls(kind, ForestParams(**forest) if forest is not None else None)


def fit_linear(d: Dataset, arm: ArmView) -> LinearModel:
    """OLS of outcome on covariates (with intercept) over the arm's rows."""
    return fit_ols(d.covariates[arm.indices], d.outcome[arm.indices])


def predict_linear(m: LinearModel, d: Dataset) -> np.ndarray:
    if not isinstance(m, LinearModel):
        raise ConfigError("predict_linear needs a linear model")
    return m.predict(d.covariates)


def fit_forest(d: Dataset, arm: ArmView, params: ForestParams, rng: np.random.Generator) -> ForestModel:
    if len(arm) < 2 * params.min_leaf_size:
        raise DegenerateArm(arm.arm, len(arm), 2 * params.min_leaf_size)
    return fit_trees(d.covariates[arm.indices], d.outcome[arm.indices], params, rng)


def predict_forest(m: ForestModel, d: Dataset) -> np.ndarray:
    if not isinstance(m, ForestModel):
        raise ConfigError("predict_forest needs a forest model")
    return m.predict(d.covariates)


def fit_arm(d: Dataset, arm: ArmView, spec: PredictorSpec, rng=None):
    if spec.kind == LINEAR:
        return fit_linear(d, arm)
    if rng is None:
        raise ConfigError("a random generator is required to fit a forest")
    return fit_forest(d, arm, spec.forest, rng)
