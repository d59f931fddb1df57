import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from pitetest import Dataset, estimate_pite, pite_effect_size, screen_interactions, sd_of_pite, split_arms
from pitetest.errors import RankDeficient, TooFewValues, ZeroPooledSD
from pitetest.pite import interaction_tests, pooled_outcome_sd
from pitetest.predictors import PredictorSpec, fit_linear
from pitetest.predictors.linear import augment
from pitetest.simgen import CONSTANTS, AlsDesign, simulate_als

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def _registry_covariates(n, rng):
    return simulate_als(AlsDesign(n), rng).dataset.covariates


def _two_column_data(n=600, seed=0, noise=0.0):
    """Outcomes from the treated and control registry coefficient columns."""
    rng = np.random.default_rng(seed)
    x = _registry_covariates(n, rng)
    names = CONSTANTS.als_names
    bc = np.array([CONSTANTS.als_control_betas[k] for k in ("intercept", *names)])
    bt = np.array([CONSTANTS.als_treated_betas[k] for k in ("intercept", *names)])
    t = np.repeat([1, 0], n // 2)
    xa = augment(x)
    y = np.where(t == 1, xa @ bt, xa @ bc) + noise * rng.normal(size=n)
    return Dataset(y, t, x, names), bt - bc


# ---------------------------------------------------------------- sd_of_pite


def test_sd_small_examples():
    assert sd_of_pite([1.0, 2.0, 3.0]) == 1.0
    assert sd_of_pite(np.full(9, 2.7)) == 0.0
    with pytest.raises(TooFewValues):
        sd_of_pite([1.0])


def test_sd_of_standard_normal_sample():
    v = np.random.default_rng(0).standard_normal(10_000)
    assert 0.97 <= sd_of_pite(v) <= 1.03


@settings(max_examples=200, deadline=None)
@given(v=arrays(np.float64, st.integers(2, 50), elements=finite), c=finite)
def test_sd_translation_invariant(v, c):
    scale = np.max(np.abs(v)) + abs(c)
    assert sd_of_pite(v + c) == pytest.approx(sd_of_pite(v), rel=1e-9, abs=1e-12 * scale)


@settings(max_examples=200, deadline=None)
@given(v=arrays(np.float64, st.integers(2, 50), elements=finite),
       c=st.floats(-1e3, 1e3).filter(lambda c: c == 0 or abs(c) > 1e-100))
def test_sd_absolutely_homogeneous(v, c):
    scale = abs(c) * np.max(np.abs(v))
    assume(scale == 0 or scale > 1e-100)  # squared deviations would underflow
    assert sd_of_pite(c * v) == pytest.approx(abs(c) * sd_of_pite(v), rel=1e-9, abs=1e-12 * scale)


# ---------------------------------------------------------------- effect size


def test_effect_size_plug_in():
    rng = np.random.default_rng(1)
    y = rng.normal(size=40)
    t = np.repeat([1, 0], [15, 25])
    yt, yc = y[t == 1], y[t == 0]
    pooled = np.sqrt((14 * yt.var(ddof=1) + 24 * yc.var(ddof=1)) / 39)
    d = Dataset(y * 2 / pooled, t, rng.normal(size=(40, 1)))
    assert pooled_outcome_sd(d) == pytest.approx(2.0, rel=1e-12)
    pite = np.where(rng.random(40) < 0.5, -0.5, 0.5)
    assert pite_effect_size(pite, d) == pytest.approx(0.25, rel=1e-12)
    assert pite_effect_size(np.zeros(40), d) == 0.0


def test_effect_size_zero_pooled_sd():
    d = Dataset(np.ones(6), [1, 1, 1, 0, 0, 0], np.arange(6.0)[:, None])
    with pytest.raises(ZeroPooledSD):
        pite_effect_size(np.ones(6), d)


@settings(max_examples=100, deadline=None)
@given(signs=arrays(np.int8, 30, elements=st.sampled_from([-1, 1])))
def test_effect_size_sign_invariant(signs):
    rng = np.random.default_rng(2)
    d = Dataset(rng.normal(size=30), np.repeat([1, 0], 15), rng.normal(size=(30, 2)))
    pite = rng.normal(size=30)
    assert pite_effect_size(pite * signs, d) == pite_effect_size(pite, d)


def test_calibrated_generator_effect_size_recovered():
    trial = simulate_als(AlsDesign(3000, 0.19), np.random.default_rng(3))
    assert pite_effect_size(trial.true_effect, trial.dataset) == pytest.approx(0.19, abs=0.02)


# ---------------------------------------------------------------- estimate_pite


def test_identical_arms_give_zero_pite():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(50, 3))
    d = Dataset(1.0 + x @ [0.3, -1.0, 2.0], np.repeat([1, 0], 25), x)
    r = estimate_pite(d)
    assert np.max(np.abs(r.pite)) < 1e-10
    assert r.sd < 1e-10


def test_registry_coefficient_difference():
    d, diff = _two_column_data()
    r = estimate_pite(d)
    np.testing.assert_allclose(r.pite, augment(d.covariates) @ diff, atol=1e-10)
    assert diff[7] == pytest.approx(0.15399, abs=1e-12)


def test_linear_pite_is_affine_in_covariates():
    d, _ = _two_column_data(noise=1.0, seed=5)
    treated, control = split_arms(d)
    bt = fit_linear(d, treated).coef
    bc = fit_linear(d, control).coef
    r = estimate_pite(d)
    np.testing.assert_allclose(r.pite, augment(d.covariates) @ (bt - bc), atol=1e-10)


def test_pite_mean_is_difference_of_prediction_means():
    d, _ = _two_column_data(noise=1.0, seed=6)
    treated, control = split_arms(d)
    mt = fit_linear(d, treated).predict(d.covariates).mean()
    mc = fit_linear(d, control).predict(d.covariates).mean()
    r = estimate_pite(d)
    assert r.mean == pytest.approx(mt - mc, abs=1e-10)
    assert r.raw_ate == pytest.approx(d.outcome[d.treatment == 1].mean() - d.outcome[d.treatment == 0].mean())


def test_forest_pite_deterministic():
    d, _ = _two_column_data(n=200, noise=1.0, seed=7)
    spec = PredictorSpec.random_forest(n_trees=20)
    a = estimate_pite(d, spec, np.random.default_rng(1))
    b = estimate_pite(d, spec, np.random.default_rng(1))
    assert np.array_equal(a.pite, b.pite)
    assert a.sd > 0


# ---------------------------------------------------------------- screening


def _interaction_data(n, p, gamma, rng):
    x = rng.normal(size=(n, p))
    t = np.zeros(n, dtype=int)
    t[rng.choice(n, n // 2, replace=False)] = 1
    y = x @ rng.normal(size=p) * 0.5 + 0.3 * t + (x * t[:, None]) @ gamma + rng.normal(size=n)
    return Dataset(y, t, x)


def _interaction_power(n, gamma_k, var_x, sigma, df, alpha):
    # SE of a covariate x treatment interaction with balanced arms: sigma * sqrt(4 / (n Var X))
    se = sigma * np.sqrt(4.0 / (n * var_x))
    crit = stats.t.ppf(1 - alpha / 2, df)
    nc = gamma_k / se
    return stats.nct.sf(crit, df, nc) + stats.nct.cdf(-crit, df, nc)


def test_single_large_interaction_selected():
    n, p = 2000, 5
    gamma = np.zeros(p)
    gamma[2] = 0.3
    power = _interaction_power(n, 0.3, 1.0, 1.0, n - 2 * p - 2, 0.05)
    assert power > 0.99
    rng = np.random.default_rng(8)
    hits = sum(2 in screen_interactions(_interaction_data(n, p, gamma, rng)) for _ in range(200))
    assert hits / 200 >= power - 3 * np.sqrt(power * (1 - power) / 200) - 0.005


def test_null_interactions_false_positive_rate():
    rng = np.random.default_rng(9)
    counts = [len(screen_interactions(_interaction_data(400, 10, np.zeros(10), rng))) for _ in range(300)]
    # each run selects Binomial(10, 0.05) covariates on average: 0.5
    assert np.mean(counts) == pytest.approx(0.5, abs=3 * np.sqrt(10 * 0.05 * 0.95 / 300))


def test_registry_interaction_selection_frequencies():
    # registry coefficient differences as interactions; empirical selection
    # frequency per covariate compared with the analytic t-test power
    n, sigma, reps = 2910, 0.25, 200
    names = CONSTANTS.als_names
    _, diff = _two_column_data(n=10)
    variances = CONSTANTS.als_variances()
    df = n - 2 * len(names) - 2
    expected = np.array([_interaction_power(n, diff[k + 1], variances[k], sigma, df, 0.05)
                         for k in range(len(names))])
    hits = np.zeros(len(names))
    for seed in range(reps):
        d, _ = _two_column_data(n=n, seed=1000 + seed, noise=sigma)
        hits[screen_interactions(d)] += 1
    freq = hits / reps
    band = 4 * np.sqrt(expected * (1 - expected) / reps) + 0.05
    assert np.all(np.abs(freq - expected) <= band), (freq, expected)
    stable = (expected > 0.95) | (expected < 0.1)
    assert np.all((freq[stable] > 0.9) | (freq[stable] < 0.15))


def test_interaction_table_matches_reference_fit():
    rng = np.random.default_rng(10)
    d = _interaction_data(300, 3, np.array([0.5, 0.0, -0.2]), rng)
    tab = interaction_tests(d)
    t = d.treatment[:, None].astype(float)
    design = np.column_stack([np.ones(d.n), d.covariates, t, d.covariates * t])
    coef = np.linalg.solve(design.T @ design, design.T @ d.outcome)
    resid = d.outcome - design @ coef
    cov = resid @ resid / (d.n - design.shape[1]) * np.linalg.inv(design.T @ design)
    np.testing.assert_allclose(tab.estimate, coef[5:], rtol=1e-8)
    np.testing.assert_allclose(tab.std_error, np.sqrt(np.diag(cov))[5:], rtol=1e-8)
    assert tab.df_resid == d.n - 8


def test_screen_rank_deficient():
    x = np.ones((10, 1)) * np.arange(10.0)[:, None]
    d = Dataset(np.arange(10.0), np.repeat([1, 0], 5), np.column_stack([x, 2 * x]))
    with pytest.raises(RankDeficient):
        screen_interactions(d)
