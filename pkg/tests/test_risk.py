import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtr

from conftest import random_model
from wvar.mixture import FlattenedMixture, ScenarioComponent, TwoLayerMixture, flatten
from wvar.risk import (
    RiskError,
    empirical_var,
    invert_cdf,
    mixture_quantile,
    one_layer_overestimation_check,
    pooled_var,
    risk_report,
    scenario_vars,
    value_at_risk,
    worst_best_var,
)

PROBS = (0.01, 0.05, 0.5, 0.95, 0.99)


def grid_quantile(weights, mu, sigma, p, points=1_000_000):
    """Brute-force inversion: first grid point whose CDF reaches p."""
    w, mu, sigma = (np.asarray(a, dtype=float) for a in (weights, mu, sigma))
    lo = mu.min() - 10 * sigma.max()
    hi = mu.max() + 10 * sigma.max()
    grid = np.linspace(lo, hi, points)
    cdf = np.zeros_like(grid)
    for wk, mk, sk in zip(w, mu, sigma):
        cdf += wk * ndtr((grid - mk) / sk)
    k = int(np.searchsorted(cdf, p))
    return grid[min(k, points - 1)], grid[1] - grid[0]


# -- quantile ---------------------------------------------------------------------

def test_quantile_examples():
    std = ScenarioComponent.normal(0.0, 1.0)
    assert abs(mixture_quantile(std, 0.5)) <= 1e-10
    assert mixture_quantile(std, 0.05) == pytest.approx(-1.6449, abs=1e-4)
    pair = ScenarioComponent([0.5, 0.5], [-1.0, 1.0], [1.0, 1.0])
    assert abs(mixture_quantile(pair, 0.5)) <= 1e-10


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
def test_quantile_rejects_p(p):
    with pytest.raises(RiskError):
        mixture_quantile(ScenarioComponent.normal(0.0, 1.0), p)


def test_quantile_cdf_consistency(rng):
    for _ in range(30):
        m = random_model(rng)
        for s in m.scenarios:
            for p in np.arange(0.01, 1.0, 0.07):
                assert abs(float(s.cdf(mixture_quantile(s, p))) - p) <= 1e-9


def test_quantile_matches_grid_oracle(rng):
    for _ in range(15):
        k = int(rng.integers(1, 5))
        w = rng.dirichlet(np.ones(k))
        mu = rng.normal(0, 0.02, k)
        sigma = np.exp(rng.uniform(np.log(0.002), np.log(0.05), k))
        dist = FlattenedMixture(w, mu, sigma)
        for p in PROBS:
            want, step = grid_quantile(w, mu, sigma, p)
            assert abs(mixture_quantile(dist, p) - want) <= step


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.001, 0.998), st.floats(0.0005, 0.001))
def test_quantile_monotone_in_p(seed, p, dp):
    s = random_model(np.random.default_rng(seed)).scenarios[0]
    assert mixture_quantile(s, p) <= mixture_quantile(s, p + dp)


def test_invert_cdf_expands_bracket():
    x = invert_cdf(lambda v: ndtr(v), 0.975, 5.0, 6.0)
    assert x == pytest.approx(1.959963984540054, abs=1e-12)


def test_zero_weight_components_do_not_widen_bracket():
    dist = FlattenedMixture([1.0, 0.0], [0.0, 500.0], [1.0, 1e3])
    assert mixture_quantile(dist, 0.05) == pytest.approx(-1.6448536269514729, abs=1e-12)


# -- VaR -------------------------------------------------------------------------------

def test_var_examples():
    assert value_at_risk(ScenarioComponent.normal(0.0, 0.01), 0.95) == pytest.approx(0.016449, abs=1e-5)
    assert value_at_risk(ScenarioComponent.normal(0.001, 0.01), 0.95) == pytest.approx(0.015449, abs=1e-5)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 0.3, 1.2])
def test_var_rejects_alpha(alpha):
    with pytest.raises(RiskError):
        value_at_risk(ScenarioComponent.normal(0.0, 0.01), alpha)


def test_var_matches_grid_oracle(rng):
    for _ in range(5):
        m = random_model(rng)
        flat = flatten(m, 0)
        want, step = grid_quantile(flat.weights, flat.mu, flat.sigma, 0.05)
        assert abs(value_at_risk(flat, 0.95) + want) <= step


def test_worst_best_examples():
    one = TwoLayerMixture([[1.0]], [[0.0]], [[0.01]], [[1.0], [1.0]], [5, 5])
    rep = worst_best_var(one, 0.95)
    assert rep.wvar == rep.bvar == rep.per_scenario_var[0]
    two = TwoLayerMixture(np.ones((2, 1)), [[0.0], [0.0]], [[0.01], [0.02]], [[0.5, 0.5]], [10])
    rep = worst_best_var(two, 0.95)
    np.testing.assert_allclose(rep.per_scenario_var, [0.016449, 0.032898], atol=1e-5)
    assert rep.wvar == pytest.approx(0.032898, abs=1e-5)
    assert rep.bvar == pytest.approx(0.016449, abs=1e-5)
    assert (rep.worst_scenario, rep.best_scenario) == (1, 0)


def test_ties_go_to_lower_index():
    m = TwoLayerMixture(np.ones((3, 1)), np.zeros((3, 1)), np.full((3, 1), 0.01), [[0.2, 0.3, 0.5]], [4])
    rep = worst_best_var(m, 0.95)
    assert (rep.worst_scenario, rep.best_scenario) == (0, 0)


def test_worst_best_match_per_scenario_grid(rng):
    for _ in range(3):
        m = random_model(rng, k2=5)
        rep = worst_best_var(m, 0.95)
        oracle = [-grid_quantile(m.alpha[j], m.mu[j], m.sigma[j], 0.05)[0] for j in range(5)]
        step = max(grid_quantile(m.alpha[j], m.mu[j], m.sigma[j], 0.05)[1] for j in range(5))
        assert abs(rep.wvar - max(oracle)) <= step
        assert abs(rep.bvar - min(oracle)) <= step


def test_pooled_examples(rng):
    base = random_model(rng, k2=3, k1=2, n_seg=1)
    same = TwoLayerMixture(base.alpha, base.mu, base.sigma,
                           np.repeat(base.segment_weights, 3, axis=0), [10, 40, 7])
    assert pooled_var(same, 0.95) == pytest.approx(value_at_risk(flatten(same, 1), 0.95), abs=1e-12)
    single = TwoLayerMixture(base.alpha[:1], base.mu[:1], base.sigma[:1], [[1.0], [1.0]], [5, 6])
    assert pooled_var(single, 0.95) == pytest.approx(scenario_vars(single, 0.95)[0], abs=1e-12)


def test_pooled_uses_length_weighted_rows():
    m = TwoLayerMixture(np.ones((2, 1)), [[0.0], [0.0]], [[0.01], [0.03]], [[1.0, 0.0], [0.0, 1.0]], [300, 100])
    want = value_at_risk(FlattenedMixture([0.75, 0.25], [0.0, 0.0], [0.01, 0.03]), 0.95)
    assert pooled_var(m, 0.95) == pytest.approx(want, abs=1e-14)


def test_ordering_on_random_models(rng):
    for _ in range(200):
        m = random_model(rng, zero_weights=bool(rng.integers(2)))
        rep = worst_best_var(m, 0.95)
        assert rep.bvar <= rep.var <= rep.wvar
        assert rep.wvar == max(rep.per_scenario_var)
        assert rep.bvar == min(rep.per_scenario_var)


def test_translation_and_scaling(rng):
    for _ in range(30):
        m = random_model(rng)
        c, lam = rng.normal(0, 0.01), rng.uniform(0.2, 5.0)
        shifted = TwoLayerMixture(m.alpha, m.mu + c, m.sigma, m.segment_weights, m.segment_lengths)
        scaled = TwoLayerMixture(m.alpha, m.mu * lam, m.sigma * lam, m.segment_weights, m.segment_lengths)
        a, b, s = (worst_best_var(x, 0.95) for x in (m, shifted, scaled))
        for name in ("var", "wvar", "bvar"):
            assert getattr(b, name) == pytest.approx(getattr(a, name) - c, abs=1e-10)
            assert getattr(s, name) == pytest.approx(getattr(a, name) * lam, rel=1e-10)


# -- empirical ------------------------------------------------------------------------------

def test_empirical_examples():
    assert empirical_var(np.full(100, -0.01), 0.95) == pytest.approx(0.01, abs=1e-16)
    draws = np.random.default_rng(0).normal(0, 0.01, 1_000_000)
    assert empirical_var(draws, 0.95) == pytest.approx(0.016449, abs=5e-4)
    levels = [0.6, 0.8, 0.9, 0.95, 0.99]
    vals = [empirical_var(draws[:5000], a) for a in levels]
    assert vals == sorted(vals)


def test_empirical_linear_interpolation():
    x = np.arange(1.0, 21.0)
    # position 0.05 * 19 = 0.95 between 1 and 2
    assert empirical_var(x, 0.95) == pytest.approx(-1.95, abs=1e-14)


def test_empirical_too_short():
    with pytest.raises(RiskError, match="at least 20"):
        empirical_var(np.zeros(19), 0.95)


def test_report_bases(rng):
    m = random_model(rng)
    rep = risk_report(m, 0.95)
    assert rep.basis == "fitted_mixture"
    assert set(rep.to_dict()) == {"alpha", "var", "wvar", "bvar", "per_scenario_var",
                                  "worst_scenario", "best_scenario", "basis"}
    x = np.random.default_rng(1).normal(0, 0.01, 500)
    emp = risk_report(m, 0.95, "empirical", x)
    assert emp.var == empirical_var(x, 0.95)
    assert emp.wvar == rep.wvar
    with pytest.raises(RiskError):
        risk_report(m, 0.95, "empirical")
    with pytest.raises(RiskError):
        risk_report(m, 0.95, "other")


# -- flattened diagnostic --------------------------------------------------------------------

def test_overestimation_k1_one_coincides(rng):
    for _ in range(10):
        m = random_model(rng, k1=1)
        two, flat = one_layer_overestimation_check(m, 0, 0.95)
        assert two == pytest.approx(flat, abs=1e-15)


def test_overestimation_wide_and_narrow():
    m = TwoLayerMixture([[0.9, 0.1], [0.7, 0.3]], [[0.0, 0.0], [0.001, -0.002]],
                        [[0.005, 0.05], [0.008, 0.03]], [[0.5, 0.5]], [20])
    two, flat = one_layer_overestimation_check(m, 0, 0.95)
    assert flat >= two
    assert flat == pytest.approx(1.6448536269514729 * 0.05, abs=1e-12)
    oracle = max(-grid_quantile(m.alpha[j], m.mu[j], m.sigma[j], 0.05)[0] for j in range(2))
    assert abs(two - oracle) <= grid_quantile(m.alpha[0], m.mu[0], m.sigma[0], 0.05)[1] * 2


def test_overestimation_random_models(rng):
    for _ in range(300):
        m = random_model(rng, zero_weights=bool(rng.integers(2)))
        two, flat = one_layer_overestimation_check(m, int(rng.integers(m.n_segments)), 0.95)
        assert flat >= two


def test_overestimation_segment_checked(rng):
    m = random_model(rng, n_seg=2)
    with pytest.raises(ValueError):
        one_layer_overestimation_check(m, 2, 0.95)
