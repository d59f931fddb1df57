"""Predicted individual treatment effects and their summaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .data import Dataset, split_arms
from .errors import DegenerateArm, RankDeficient, TooFewValues, ZeroPooledSD
from .predictors import LINEAR, PredictorSpec, augment, fit_arm, ols_batch


@dataclass(frozen=True)
class PiteResult:
    pite: np.ndarray
    sd: float
    mean: float
    effect_size: float
    predictor_spec: PredictorSpec
    raw_ate: float  # difference of observed arm means

    def summary(self):
        return {
            "n": int(self.pite.shape[0]),
            "sd": self.sd,
            "mean": self.mean,
            "effect_size": self.effect_size,
            "raw_ate": self.raw_ate,
        }


def sd_of_pite(pite) -> float:
    """Sample standard deviation (n - 1 denominator)."""
    v = np.asarray(pite, dtype=np.float64)
    if v.shape[0] < 2:
        raise TooFewValues(v.shape[0])
    return float(np.std(v, ddof=1))


def pooled_outcome_sd(d: Dataset) -> float:
    """Pooled within-arm outcome SD with an N_T + N_C - 1 denominator."""
    yt = d.outcome[d.treatment == 1]
    yc = d.outcome[d.treatment == 0]
    nt, nc = len(yt), len(yc)
    if nt < 2 or nc < 2:
        raise DegenerateArm("treatment" if nt < 2 else "control", min(nt, nc))
    num = (nt - 1) * np.var(yt, ddof=1) + (nc - 1) * np.var(yc, ddof=1)
    return float(np.sqrt(num / (nt + nc - 1)))


def pite_effect_size(pite, d: Dataset) -> float:
    """Mean absolute PITE divided by the pooled outcome SD."""
    pooled = pooled_outcome_sd(d)
    if pooled == 0.0:
        raise ZeroPooledSD()
    return float(np.mean(np.abs(np.asarray(pite, dtype=np.float64))) / pooled)


def linear_pite(xa, y, treated_idx, control_idx):
    """PITEs for a stack of assignments under the linear predictor.

    ``treated_idx`` (B, n_t) and ``control_idx`` (B, n_c) hold sorted row
    indices. Returns a (B, n) array of ``[1, x_i] . (beta_t - beta_c)``.
    """
    bt = ols_batch(xa[treated_idx], y[treated_idx])
    bc = ols_batch(xa[control_idx], y[control_idx])
    return (xa @ (bt - bc).T).T


def estimate_pite(d: Dataset, spec: PredictorSpec = None, rng=None) -> PiteResult:
    """Fit one model per arm and difference their predictions for everyone.

    ``rng`` is only consumed by the forest; the treated-arm forest is grown
    before the control-arm forest.
    """
    spec = spec or PredictorSpec()
    treated, control = split_arms(d)
    if spec.kind == LINEAR:
        pite = linear_pite(augment(d.covariates), d.outcome,
                           treated.indices[None], control.indices[None])[0]
    else:
        m_t = fit_arm(d, treated, spec, rng)
        m_c = fit_arm(d, control, spec, rng)
        pite = m_t.predict(d.covariates) - m_c.predict(d.covariates)
    pite.setflags(write=False)
    raw_ate = float(d.outcome[treated.indices].mean() - d.outcome[control.indices].mean())
    return PiteResult(
        pite=pite,
        sd=sd_of_pite(pite),
        mean=float(pite.mean()),
        effect_size=pite_effect_size(pite, d),
        predictor_spec=spec,
        raw_ate=raw_ate,
    )


@dataclass(frozen=True)
class InteractionTable:
    names: tuple
    estimate: np.ndarray
    std_error: np.ndarray
    t_value: np.ndarray
    p_value: np.ndarray
    df_resid: int

    def selected(self, alpha=0.05):
        return [int(j) for j in np.flatnonzero(self.p_value < alpha)]


def interaction_tests(d: Dataset) -> InteractionTable:
    """Pooled OLS with treatment and every covariate x treatment interaction.

    Classical homoskedastic standard errors; two-sided t tests on the
    interaction coefficients.
    """
    x = d.covariates
    t = d.treatment.astype(np.float64)[:, None]
    design = np.concatenate([np.ones((d.n, 1)), x, t, x * t], axis=1)
    n, k = design.shape
    coef = ols_batch(design[None], d.outcome[None])[0]
    resid = d.outcome - design @ coef
    df = n - k
    if df <= 0:
        raise RankDeficient(n, k, n)
    sigma2 = resid @ resid / df
    _, r = np.linalg.qr(design)
    rinv = np.linalg.inv(r)
    cov = sigma2 * (rinv @ rinv.T)
    p = d.p
    sl = slice(p + 2, 2 * p + 2)
    est = coef[sl]
    se = np.sqrt(np.diag(cov)[sl])
    tval = est / se
    pval = 2 * stats.t.sf(np.abs(tval), df)
    return InteractionTable(d.covariate_names, est, se, tval, pval, df)


def screen_interactions(d: Dataset, alpha: float = 0.05) -> list:
    """Indices of covariates whose treatment interaction is significant at ``alpha``."""
    return interaction_tests(d).selected(alpha)
