"""Synthetic trial generators.

Two designs are provided:

* ``NullDesign``: five prognostic covariates with the same effect in both
  arms, a constant treatment effect and optional nuisance covariates. The
  true PITE is identical for everyone.
* ``AlsDesign``: seven covariates with ALS-registry moments, a prognostic
  part from the control-arm regression, and a heterogeneous effect
  ``c * delta . (x - E x)`` whose variance is split across covariates
  according to a spread condition and scaled to a target PITE effect size.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats
from scipy.stats import qmc

from .data import BINARY, CONTINUOUS, Dataset
from .errors import CalibrationFailure, ConfigError


@dataclass(frozen=True, eq=False)
class GeneratorConstants:
    null_prognostic_betas: tuple = (0.406, -0.239, 0.703, -0.090, -0.299)
    # name: (mean, sd)
    als_covariate_moments: dict = field(default_factory=lambda: {
        "respiratory_rate": (17.19, 3.27),
        "systolic_bp": (131.88, 16.63),
        "age": (54.70, 11.35),
    })
    als_binary_probs: dict = field(default_factory=lambda: {
        "delta_flag": 0.0320,
        "limb_only": 0.6708,
        "gender_male": 0.6351,
        "use_riluzole": 0.3821,
    })
    # linear-model coefficients fitted separately in each arm of the ALS data
    als_control_betas: dict = field(default_factory=lambda: {
        "intercept": -2.88826,
        "respiratory_rate": 0.01067,
        "systolic_bp": -0.00113,
        "age": -0.00327,
        "delta_flag": 0.17810,
        "limb_only": 0.08838,
        "gender_male": -0.03439,
        "use_riluzole": -0.22549,
    })
    als_treated_betas: dict = field(default_factory=lambda: {
        "intercept": -3.56945,
        "respiratory_rate": -0.00099,
        "systolic_bp": 0.00110,
        "age": 0.00130,
        "delta_flag": 0.01969,
        "limb_only": -0.08336,
        "gender_male": 0.00712,
        "use_riluzole": -0.07150,
    })

    @property
    def als_names(self):
        return (*self.als_covariate_moments, *self.als_binary_probs)

    @property
    def als_kinds(self):
        return (CONTINUOUS,) * len(self.als_covariate_moments) + (BINARY,) * len(self.als_binary_probs)

    def als_means(self):
        return np.array([m for m, _ in self.als_covariate_moments.values()]
                        + list(self.als_binary_probs.values()))

    def als_variances(self):
        return np.array([s * s for _, s in self.als_covariate_moments.values()]
                        + [p * (1 - p) for p in self.als_binary_probs.values()])

    def als_base_betas(self):
        """Control-arm intercept and slopes for the seven covariates."""
        b = self.als_control_betas
        return b["intercept"], np.array([b[k] for k in self.als_names])

    def als_effect_signs(self):
        d = [self.als_treated_betas[k] - self.als_control_betas[k] for k in self.als_names]
        return np.where(np.array(d) < 0, -1.0, 1.0)


CONSTANTS = GeneratorConstants()


class Spread(str, enum.Enum):
    SPREAD = "Spread"
    CONT90_10 = "Cont90_10"
    CONT75_25 = "Cont75_25"
    CONT50_50 = "Cont50_50"
    CONT25_75 = "Cont25_75"
    BIN90_10 = "Bin90_10"

    @property
    def label(self):
        return {
            "Spread": "Spread", "Cont90_10": "90/10 Cont.", "Cont75_25": "75/25 Cont.",
            "Cont50_50": "50/50 Cont.", "Cont25_75": "25/75 Cont.", "Bin90_10": "90/10 Bin.",
        }[self.value]


@dataclass(frozen=True)
class NullDesign:
    n: int
    ate: float = 0.0
    n_nuisance_cont: int = 0
    n_nuisance_bin: int = 0
    residual_sd: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 20:
            raise ConfigError(f"null design needs n >= 20, got {self.n}")
        if self.n_nuisance_cont < 0 or self.n_nuisance_bin < 0:
            raise ConfigError("nuisance counts must be >= 0")
        if not self.residual_sd >= 0:
            raise ConfigError("residual_sd must be >= 0")

    @property
    def n_nuisance(self):
        return self.n_nuisance_cont + self.n_nuisance_bin


@dataclass(frozen=True)
class AlsDesign:
    n: int
    target_effect_size: float = 0.19
    spread: Spread = Spread.SPREAD
    n_nuisance: int = 0
    residual_sd: float = 1.0
    correlation: tuple | None = None
    seed: int = 0
    ate: float = 0.0
    prognostic: bool = True  # include the control-arm linear predictor in both arms

    def __post_init__(self):
        object.__setattr__(self, "spread", Spread(self.spread))
        if self.n < 4 or self.n % 2:
            raise ConfigError(f"ALS design needs an even n >= 4, got {self.n}")
        if not self.target_effect_size >= 0:
            raise ConfigError("target_effect_size must be >= 0")
        if self.n_nuisance < 0:
            raise ConfigError("n_nuisance must be >= 0")
        if not self.residual_sd > 0:
            raise ConfigError("residual_sd must be > 0")
        if self.correlation is not None:
            r = np.asarray(self.correlation, dtype=float)
            k = len(CONSTANTS.als_names)
            if r.shape != (k, k) or not np.allclose(r, r.T) or not np.allclose(np.diag(r), 1):
                raise ConfigError(f"correlation must be a symmetric {k}x{k} matrix with unit diagonal")
            try:
                np.linalg.cholesky(r)
            except np.linalg.LinAlgError:
                raise ConfigError("correlation matrix is not positive definite") from None
            object.__setattr__(self, "correlation", tuple(map(tuple, r)))

    @property
    def nuisance_split(self):
        """(continuous, binary); odd counts give the extra one to continuous."""
        n_bin = self.n_nuisance // 2
        return self.n_nuisance - n_bin, n_bin


@dataclass(frozen=True)
class SimulatedTrial:
    """A generated dataset with its ground truth, for audits and oracles."""

    dataset: Dataset
    true_effect: np.ndarray
    delta: np.ndarray | None = None


def _assign_half(n, rng):
    t = np.zeros(n, dtype=np.int8)
    t[rng.choice(n, n // 2, replace=False)] = 1
    return t


def _nuisance(n, n_cont, n_bin, rng):
    cont = rng.standard_normal((n, n_cont))
    binary = (rng.random((n, n_bin)) < 0.5).astype(np.float64)
    names = [f"nuis_c{j + 1}" for j in range(n_cont)] + [f"nuis_b{j + 1}" for j in range(n_bin)]
    kinds = [CONTINUOUS] * n_cont + [BINARY] * n_bin
    return np.concatenate([cont, binary], axis=1), names, kinds


def simulate_null(design: NullDesign, rng=None) -> SimulatedTrial:
    rng = np.random.default_rng(design.seed) if rng is None else rng
    n = design.n
    t = _assign_half(n, rng)
    prog = np.concatenate([rng.standard_normal((n, 3)),
                           (rng.random((n, 2)) < 0.5).astype(np.float64)], axis=1)
    noise = rng.standard_normal(n) * design.residual_sd
    nuis, nnames, nkinds = _nuisance(n, design.n_nuisance_cont, design.n_nuisance_bin, rng)
    y = prog @ np.array(CONSTANTS.null_prognostic_betas) + design.ate * t + noise
    x = np.concatenate([prog, nuis], axis=1)
    names = ["prog_c1", "prog_c2", "prog_c3", "prog_b1", "prog_b2", *nnames]
    kinds = [CONTINUOUS] * 3 + [BINARY] * 2 + nkinds
    d = Dataset(y, t, x, tuple(names), tuple(kinds))
    return SimulatedTrial(d, np.full(n, float(design.ate)))


def generate_null(design: NullDesign, rng=None) -> Dataset:
    return simulate_null(design, rng).dataset


_SHARES = {
    Spread.CONT90_10: 0.90,
    Spread.CONT75_25: 0.75,
    Spread.CONT50_50: 0.50,
    Spread.CONT25_75: 0.25,
}


def variance_shares(spread, constants=CONSTANTS):
    k = len(constants.als_names)
    spread = Spread(spread)
    if spread is Spread.SPREAD:
        return np.full(k, 1.0 / k)
    if spread is Spread.BIN90_10:
        lead, share = len(constants.als_covariate_moments), 0.90
    else:
        lead, share = 0, _SHARES[spread]
    out = np.full(k, (1.0 - share) / (k - 1))
    out[lead] = share
    return out


def distribute_heterogeneity(spread, constants=CONSTANTS) -> np.ndarray:
    """Unit-variance effect direction for a spread condition.

    Covariate k contributes ``delta_k**2 * Var(X_k)`` to ``Var(delta . X)``
    (independent covariates); those contributions follow the condition's
    shares and sum to 1. Signs follow the treated-minus-control ALS
    coefficient differences.
    """
    shares = variance_shares(spread, constants)
    return constants.als_effect_signs() * np.sqrt(shares / constants.als_variances())


def _als_covariates_from_normals(z, correlation, constants=CONSTANTS):
    """Map standard normals (m, 7) to ALS covariates, optionally via a Gaussian copula."""
    if correlation is not None:
        z = z @ np.linalg.cholesky(np.asarray(correlation)).T
    n_cont = len(constants.als_covariate_moments)
    moments = np.array(list(constants.als_covariate_moments.values()))
    probs = np.array(list(constants.als_binary_probs.values()))
    x = np.empty_like(z)
    x[:, :n_cont] = moments[:, 0] + moments[:, 1] * z[:, :n_cont]
    # upper tail, so a positive latent correlation gives a positive observed one
    x[:, n_cont:] = (z[:, n_cont:] > stats.norm.isf(probs)).astype(np.float64)
    return x


def _als_covariates(n, correlation, rng, constants=CONSTANTS):
    k = len(constants.als_names)
    if correlation is None:
        n_cont = len(constants.als_covariate_moments)
        moments = np.array(list(constants.als_covariate_moments.values()))
        probs = np.array(list(constants.als_binary_probs.values()))
        cont = moments[:, 0] + moments[:, 1] * rng.standard_normal((n, n_cont))
        binary = (rng.random((n, k - n_cont)) < probs).astype(np.float64)
        return np.concatenate([cont, binary], axis=1)
    return _als_covariates_from_normals(rng.standard_normal((n, k)), correlation, constants)


CALIBRATION_DRAWS_LOG2 = 18
_CALIBRATION_SEED = 20_190_101


@functools.lru_cache(maxsize=4)
def _calibration_sample(correlation, constants=CONSTANTS):
    k = len(constants.als_names)
    u = qmc.Sobol(k, scramble=True, seed=_CALIBRATION_SEED).random_base2(CALIBRATION_DRAWS_LOG2)
    u = np.clip(u, 1e-12, 1 - 1e-12)
    return _als_covariates_from_normals(stats.norm.ppf(u), correlation, constants)


def effect_size_curve(delta, design: AlsDesign, constants=CONSTANTS):
    """Population PITE effect size as a function of the scale ``c``.

    Evaluated on a fixed scrambled-Sobol sample of the design's covariate
    distribution; returns ``(f, sup)`` where ``f(c)`` is the effect size and
    ``sup`` its limit as ``c`` grows.
    """
    x = _calibration_sample(design.correlation, constants)
    h = (x - constants.als_means()) @ np.asarray(delta, dtype=float)
    if design.prognostic:
        _, beta = constants.als_base_betas()
        base = x @ beta
    else:
        base = np.zeros(x.shape[0])
    m = design.n // 2
    w = (m - 1) / (2 * m - 1)
    r2 = design.residual_sd ** 2
    mean_abs_h = np.mean(np.abs(h))
    var_base = np.var(base)
    cov_bh = np.mean((base - base.mean()) * (h - h.mean()))
    var_h = np.var(h)

    def f(c):
        var_c = var_base + r2
        var_t = var_base + 2 * c * cov_bh + c * c * var_h + r2
        return c * mean_abs_h / np.sqrt(w * (var_t + var_c))

    sup = mean_abs_h / np.sqrt(w * var_h) if var_h > 0 else 0.0
    return f, sup


def calibrate_effect_size(delta, design: AlsDesign, constants=CONSTANTS) -> np.ndarray:
    """Scale ``delta`` so the population PITE effect size hits the design target."""
    delta = np.asarray(delta, dtype=float)
    return _calibrated_scale(tuple(delta), design, constants) * delta


@functools.lru_cache(maxsize=64)
def _calibrated_scale(delta, design, constants):
    target = design.target_effect_size
    if target == 0:
        return 0.0
    f, sup = effect_size_curve(delta, design, constants)
    if not target < sup:
        raise CalibrationFailure(
            f"target effect size {target} unreachable (supremum {sup:.4f}) for this effect direction"
        )
    hi = 1.0
    while f(hi) < target:
        hi *= 2.0
        if hi > 1e12:
            raise CalibrationFailure(f"could not bracket target effect size {target}")
    return optimize.brentq(lambda c: f(c) - target, 0.0, hi, xtol=1e-12, rtol=1e-12)


def simulate_als(design: AlsDesign, rng=None, constants=CONSTANTS) -> SimulatedTrial:
    rng = np.random.default_rng(design.seed) if rng is None else rng
    n = design.n
    delta = calibrate_effect_size(distribute_heterogeneity(design.spread, constants), design, constants)
    t = _assign_half(n, rng)
    x = _als_covariates(n, design.correlation, rng, constants)
    noise = rng.standard_normal(n) * design.residual_sd
    n_cont, n_bin = design.nuisance_split
    nuis, nnames, nkinds = _nuisance(n, n_cont, n_bin, rng)
    effect = (x - constants.als_means()) @ delta + design.ate
    y = noise + t * effect
    if design.prognostic:
        intercept, beta = constants.als_base_betas()
        y = y + intercept + x @ beta
    d = Dataset(
        y, t, np.concatenate([x, nuis], axis=1),
        (*constants.als_names, *nnames), (*constants.als_kinds, *nkinds),
    )
    return SimulatedTrial(d, effect, delta)


def generate_als(design: AlsDesign, rng=None) -> Dataset:
    return simulate_als(design, rng).dataset


def simulate(design, rng=None) -> SimulatedTrial:
    if isinstance(design, NullDesign):
        return simulate_null(design, rng)
    if isinstance(design, AlsDesign):
        return simulate_als(design, rng)
    raise ConfigError(f"unknown design type {type(design).__name__}")
