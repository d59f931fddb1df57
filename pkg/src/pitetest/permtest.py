"""Permutation test for heterogeneity of predicted individual treatment effects.

The observed PITE standard deviation is compared with its distribution over
refits on label-permuted data. Permutation ``p`` (1-based) draws everything
it needs from ``substream(seed, p)``; the observed forest fit uses index 0.
Statistics are stored by permutation index, so the report is identical for
any number of worker threads.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import ConfigError, DegenerateArm, PermutationFitFailure, PiteError, TooLarge
from .pite import linear_pite
from .predictors import LINEAR, PredictorSpec, augment
from .predictors.forest import fit_trees
from .streams import substream

DEFAULT_PERMUTATIONS = 1000
_LINEAR_CHUNK = 32


@dataclass(frozen=True)
class PermutationReport:
    observed_sd: float
    permuted_sds: np.ndarray
    p_value: float
    n_permutations: int
    alpha: float
    reject: bool
    seed: int
    predictor_spec: PredictorSpec
    statistic: str = "sd"
    n: int = 0
    n_treated: int = 0
    chance_sd_summary: dict = field(default_factory=dict)

    def to_dict(self, include_permuted=True):
        out = {
            "observed_sd": self.observed_sd,
            "p_value": self.p_value,
            "n_permutations": self.n_permutations,
            "alpha": self.alpha,
            "reject": self.reject,
            "seed": self.seed,
            "statistic": self.statistic,
            "n": self.n,
            "n_treated": self.n_treated,
            "predictor": self.predictor_spec.to_dict(),
            "chance_sd_summary": self.chance_sd_summary,
        }
        if include_permuted:
            out["permuted_sds"] = [float(v) for v in self.permuted_sds]
        return out


def permutation_p_value(observed, permuted):
    """Fraction of permuted statistics strictly greater than the observed one."""
    permuted = np.asarray(permuted)
    return float(np.count_nonzero(permuted > observed) / permuted.shape[0])


def chance_summary(permuted):
    q = np.quantile(permuted, [0.025, 0.05, 0.5, 0.95, 0.975])
    return {
        "mean": float(np.mean(permuted)),
        "sd": float(np.std(permuted, ddof=1)) if len(permuted) > 1 else 0.0,
        "min": float(np.min(permuted)),
        "q025": float(q[0]),
        "q05": float(q[1]),
        "median": float(q[2]),
        "q95": float(q[3]),
        "q975": float(q[4]),
        "max": float(np.max(permuted)),
    }


def _stat(pite, statistic):
    if statistic == "sd":
        return np.std(pite, axis=-1, ddof=1)
    return np.var(pite, axis=-1, ddof=1)


class _Engine:
    """Computes the PITE statistic for arbitrary treatment assignments of one dataset."""

    def __init__(self, d: Dataset, spec: PredictorSpec, statistic="sd"):
        if statistic not in ("sd", "variance"):
            raise ConfigError(f"unknown statistic {statistic!r}")
        self.d = d
        self.spec = spec
        self.statistic = statistic
        if spec.kind == LINEAR:
            self.xa = augment(d.covariates)
            self.y = np.ascontiguousarray(d.outcome)
        else:
            self.x = np.ascontiguousarray(d.covariates)
            self.y = np.ascontiguousarray(d.outcome)
            min_arm = 2 * spec.forest.min_leaf_size
            if min(d.n_treated, d.n_control) < min_arm:
                arm = "treatment" if d.n_treated < d.n_control else "control"
                raise DegenerateArm(arm, min(d.n_treated, d.n_control), min_arm)

    def linear_stats(self, assignments):
        """Statistics for a (B, n) array of 0/1 assignments."""
        a = np.asarray(assignments)
        order = np.argsort(1 - a, axis=1, kind="stable")
        n_t = int(a[0].sum())
        t_idx = np.sort(order[:, :n_t], axis=1)
        c_idx = np.sort(order[:, n_t:], axis=1)
        return _stat(linear_pite(self.xa, self.y, t_idx, c_idx), self.statistic)

    def forest_stat(self, assignment, rng):
        t = np.asarray(assignment) == 1
        params = self.spec.forest
        m_t = fit_trees(self.x[t], self.y[t], params, rng)
        m_c = fit_trees(self.x[~t], self.y[~t], params, rng)
        pite = m_t.predict(self.x) - m_c.predict(self.x)
        return float(_stat(pite, self.statistic))


def _run_chunks(fn, chunks, threads):
    if threads is None or threads <= 1 or len(chunks) <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, chunks))


def run_permutation_test(
    d: Dataset,
    spec: PredictorSpec = None,
    n_permutations: int = DEFAULT_PERMUTATIONS,
    alpha: float = 0.05,
    seed: int = 0,
    threads: int = 1,
    statistic: str = "sd",
) -> PermutationReport:
    """Permutation test of H0: the PITE SD is no larger than chance.

    Returns the observed statistic, the ``n_permutations`` permuted
    statistics, ``p = #(permuted > observed) / P`` and ``reject = p < alpha``.
    A fit failure in any permutation aborts the test.
    """
    spec = spec or PredictorSpec()
    if isinstance(n_permutations, bool) or int(n_permutations) < 1:
        raise ConfigError(f"permutation count must be >= 1, got {n_permutations!r}")
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha!r}")
    n_permutations = int(n_permutations)
    engine = _Engine(d, spec, statistic)

    if spec.kind == LINEAR:
        observed = float(engine.linear_stats(d.treatment[None])[0])
    else:
        observed = engine.forest_stat(d.treatment, substream(seed, 0))

    def permuted_labels(p):
        return substream(seed, p).permutation(d.treatment)

    indices = list(range(1, n_permutations + 1))
    if spec.kind == LINEAR:
        chunks = [indices[i:i + _LINEAR_CHUNK] for i in range(0, len(indices), _LINEAR_CHUNK)]

        def work(chunk):
            labels = np.stack([permuted_labels(p) for p in chunk])
            try:
                return engine.linear_stats(labels)
            except PiteError as exc:
                # locate the first failing permutation for the error message
                for p, lab in zip(chunk, labels):
                    try:
                        engine.linear_stats(lab[None])
                    except PiteError as inner:
                        raise PermutationFitFailure(p, inner) from inner
                raise PermutationFitFailure(chunk[0], exc) from exc
    else:
        n_chunks = max(1, min(len(indices), 4 * (threads or 1)))
        size = math.ceil(len(indices) / n_chunks)
        chunks = [indices[i:i + size] for i in range(0, len(indices), size)]

        def work(chunk):
            out = np.empty(len(chunk))
            for k, p in enumerate(chunk):
                rng = substream(seed, p)
                lab = rng.permutation(d.treatment)
                try:
                    out[k] = engine.forest_stat(lab, rng)
                except PiteError as exc:
                    raise PermutationFitFailure(p, exc) from exc
            return out

    permuted = np.concatenate(_run_chunks(work, chunks, threads))
    permuted.setflags(write=False)
    p_value = permutation_p_value(observed, permuted)
    return PermutationReport(
        observed_sd=observed,
        permuted_sds=permuted,
        p_value=p_value,
        n_permutations=n_permutations,
        alpha=float(alpha),
        reject=bool(p_value < alpha),
        seed=int(seed),
        predictor_spec=spec,
        statistic=statistic,
        n=d.n,
        n_treated=d.n_treated,
        chance_sd_summary=chance_summary(permuted),
    )


def enumerate_assignments(n, n_treated):
    """All 0/1 vectors of length n with n_treated ones, in lexicographic order of treated sets."""
    out = np.zeros((math.comb(n, n_treated), n), dtype=np.int8)
    for i, combo in enumerate(itertools.combinations(range(n), n_treated)):
        out[i, list(combo)] = 1
    return out


def exhaustive_null_distribution(
    d: Dataset, spec: PredictorSpec = None, limit: int = 10_000, seed: int = 0, statistic="sd"
) -> np.ndarray:
    """The statistic under every assignment with the observed arm sizes.

    Forest fits for assignment ``k`` use ``substream(seed, k)``.
    """
    spec = spec or PredictorSpec()
    count = math.comb(d.n, d.n_treated)
    if count > limit:
        raise TooLarge(count, limit)
    engine = _Engine(d, spec, statistic)
    assignments = enumerate_assignments(d.n, d.n_treated)
    if spec.kind == LINEAR:
        return np.concatenate([
            engine.linear_stats(assignments[i:i + _LINEAR_CHUNK])
            for i in range(0, count, _LINEAR_CHUNK)
        ])
    return np.array([engine.forest_stat(a, substream(seed, k)) for k, a in enumerate(assignments)])


def exact_p_value(d: Dataset, spec: PredictorSpec = None, **kwargs) -> float:
    """One-sided p-value over the full permutation distribution."""
    spec = spec or PredictorSpec()
    null = exhaustive_null_distribution(d, spec, **kwargs)
    engine = _Engine(d, spec, kwargs.get("statistic", "sd"))
    if spec.kind == LINEAR:
        observed = float(engine.linear_stats(d.treatment[None])[0])
    else:
        observed = engine.forest_stat(d.treatment, substream(kwargs.get("seed", 0), 0))
    return permutation_p_value(observed, null)
