import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from threshreg.fht_analytic import ig_cdf, prob_finite_fht
from threshreg.process_kernel import (
    BernoulliSpec,
    GammaSpec,
    MarkovChainSpec,
    OuSpec,
    PoissonSpec,
    WienerSpec,
    correlated_wiener_fht,
    correlation_factor,
    sample_bernoulli_fht,
    sample_correlated_wiener,
    sample_gamma_path,
    sample_gamma_paths,
    sample_ig_exact,
    sample_markov_fht,
    sample_ou_fht,
    sample_poisson_fht,
    sample_wiener_fht,
    sample_wiener_readings,
)


def ks_vs_ig(t, mu, sigma2=1.0, x0=1.0):
    """KS distance between finite draws and the (possibly improper) IG cdf, mass at inf included."""
    fin = np.sort(t[np.isfinite(t)])
    n = t.size
    F = ig_cdf(fin, mu=mu, sigma2=sigma2, x0=x0)
    hi = np.arange(1, fin.size + 1) / n
    lo = np.arange(0, fin.size) / n
    return max(np.max(np.abs(hi - F)), np.max(np.abs(F - lo)))


@pytest.mark.parametrize(
    "kwargs",
    [dict(mu=1.0, sigma2=0.0), dict(mu=1.0, sigma2=-1.0), dict(mu=1.0, x0=0.0), dict(mu=1.0, x0=-2.0)],
)
def test_wiener_spec_rejects_invalid(kwargs):
    with pytest.raises(ValueError):
        WienerSpec(**kwargs)


def test_spec_validation_other_processes():
    with pytest.raises(ValueError):
        GammaSpec(alpha=0.0, beta=1.0, x0=1.0)
    with pytest.raises(ValueError):
        GammaSpec(alpha=1.0, beta=1.0, x0=1.0, p_susceptible=1.5)
    with pytest.raises(ValueError):
        PoissonSpec(lam=1.0, m=0)
    with pytest.raises(ValueError):
        BernoulliSpec(p=1.0, m=1)
    with pytest.raises(ValueError):
        OuSpec(theta=0.0, equilibrium=0.0, sigma2=1.0, x0=1.0)
    with pytest.raises(ValueError):
        MarkovChainSpec(np.array([[0.5, 0.6], [0.0, 1.0]]), 0, {1})
    with pytest.raises(ValueError):
        MarkovChainSpec(np.array([[0.5, 0.5], [0.0, 1.0]]), 1, {1})


def test_wiener_fht_matches_ig_cdf():
    t = sample_wiener_fht(WienerSpec(-1.0, 1.0, 1.0), dt=1e-3, t_max=50.0, seed=11, size=100_000)
    assert ks_vs_ig(t, -1.0) <= 0.02


def test_wiener_fht_deterministic_and_single_draw():
    spec = WienerSpec(-1.0, 1.0, 1.0)
    a = sample_wiener_fht(spec, dt=1e-2, seed=3, size=5000)
    b = sample_wiener_fht(spec, dt=1e-2, seed=3, size=5000)
    assert np.array_equal(a, b)
    one = sample_wiener_fht(spec, dt=1e-2, seed=3)
    assert isinstance(one, float) and one == sample_wiener_fht(spec, dt=1e-2, seed=3)


def test_wiener_no_hit_is_none():
    # strong upward drift, tiny horizon: essentially never hits
    assert sample_wiener_fht(WienerSpec(20.0, 0.01, 5.0), dt=1e-2, t_max=0.5, seed=0) is None


def test_zero_drift_hits_more_with_longer_horizon():
    spec = WienerSpec(0.0, 1.0, 1.0)
    fr = [np.isfinite(sample_wiener_fht(spec, dt=1e-2, t_max=T, seed=5, size=20_000)).mean() for T in (1, 10, 100)]
    assert fr[0] < fr[1] < fr[2]
    # P(S <= T) = 2 Phi(-1/sqrt(T)) for the driftless case
    assert abs(fr[2] - 2 * stats.norm.cdf(-0.1)) < 4 * np.sqrt(fr[2] * (1 - fr[2]) / 20_000)


def test_positive_drift_cure_fraction():
    # bridge correction makes hit/no-hit exact given step endpoints, so a coarse grid is unbiased
    n = 100_000
    t = sample_wiener_fht(WienerSpec(5.0, 1.0, 1.0), dt=0.05, t_max=100.0, seed=2, size=n)
    nohit = 1 - np.isfinite(t).mean()
    p = 1 - np.exp(-10.0)
    assert abs(nohit - p) <= 3 * np.sqrt(p * (1 - p) / n) + 1e-12


def test_bridge_correction_removes_grid_bias():
    spec = WienerSpec(-1.0, 1.0, 1.0)
    t = sample_wiener_fht(spec, dt=0.05, t_max=20.0, seed=9, size=50_000)
    # without the bridge term the hit fraction by r=1 would be biased low by several percent
    emp = np.mean(t <= 1.0)
    assert abs(emp - ig_cdf(1.0, mu=-1.0, x0=1.0)) < 0.01


def test_vectorized_parameters():
    mu = np.where(np.arange(4000) % 2 == 0, -1.0, -3.0)
    t = sample_wiener_fht((mu, 1.0, 1.0), dt=1e-2, t_max=50, seed=1, size=mu.size)
    assert np.mean(t[::2]) == pytest.approx(1.0, abs=0.06)
    assert np.mean(t[1::2]) == pytest.approx(1 / 3, abs=0.02)


def test_readings_absorbed_are_nan():
    fht, X = sample_wiener_readings(WienerSpec(-1.0, 1.0, 1.0), 0.5, 10, dt=1e-2, seed=0, size=500)
    times = 0.5 * np.arange(1, 11)
    for i in range(500):
        alive = times < fht[i]
        assert np.all(np.isfinite(X[i, alive]))
        assert np.all(X[i, alive] > 0)
        assert np.all(np.isnan(X[i, ~alive]))


def test_exact_ig_sampler():
    t = sample_ig_exact(WienerSpec(-0.5, 2.0, 3.0), seed=1, size=100_000)
    assert ks_vs_ig(t, -0.5, 2.0, 3.0) < 0.01
    t = sample_ig_exact(WienerSpec(0.5, 1.0, 1.0), seed=1, size=100_000)
    assert abs(np.isfinite(t).mean() - np.exp(-1)) < 3 * np.sqrt(0.25 / 1e5)
    assert ks_vs_ig(t, 0.5) < 0.01


def test_gamma_paths_monotone_and_mean():
    spec = GammaSpec(alpha=1.0, beta=0.5, x0=2.0)
    grid = np.linspace(0, 4, 9)
    X = sample_gamma_paths(spec, grid, seed=4, size=100_000)
    assert np.all(np.diff(X, axis=1) <= 0)
    Z = spec.x0 - X[:, -1]
    se = Z.std() / np.sqrt(Z.size)
    assert abs(Z.mean() - spec.alpha * 4 * spec.beta) < 3 * se


def test_gamma_non_susceptible_constant():
    spec = GammaSpec(alpha=1.0, beta=0.5, x0=2.0, p_susceptible=0.0)
    X = sample_gamma_paths(spec, np.linspace(0, 10, 11), seed=0, size=1000)
    assert np.all(X == 2.0)
    path = sample_gamma_path(spec, np.linspace(0, 10, 11), seed=0)
    assert path.hit is None


def test_gamma_path_hit_in_boundary():
    spec = GammaSpec(alpha=2.0, beta=1.0, x0=1.0)
    path = sample_gamma_path(spec, np.linspace(0, 10, 101), seed=1)
    assert path.hit is not None and path.hit[1] <= 0
    with pytest.raises(ValueError):
        sample_gamma_path(spec, np.array([0.0, 1.0, 0.5]))
    with pytest.raises(ValueError):
        sample_gamma_path(spec, np.array([0.5, 1.0]))


def test_markov_geometric():
    P = np.array([[0.7, 0.3], [0.0, 1.0]])
    steps, states = sample_markov_fht(MarkovChainSpec(P, 0, {1}), seed=0, size=100_000)
    assert np.all(states == 1)
    k = np.arange(1, 60)
    emp = np.searchsorted(np.sort(steps), k, side="right") / steps.size
    assert np.max(np.abs(emp - (1 - 0.7 ** k))) <= 0.02


def test_markov_unreachable_and_deterministic():
    P = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert sample_markov_fht(MarkovChainSpec(P, 0, {1}), t_max=100, seed=0) is None
    P = np.array([[0.0, 1.0], [0.0, 1.0]])
    steps, states = sample_markov_fht(MarkovChainSpec(P, 0, {1}), seed=0, size=100)
    assert np.all(steps == 1) and np.all(states == 1)
    assert sample_markov_fht(MarkovChainSpec(P, 0, {1}), seed=0) == (1, 1)


def test_poisson_and_bernoulli_samplers():
    t = sample_poisson_fht(PoissonSpec(lam=2.0, m=4), seed=0, size=100_000)
    assert stats.kstest(t, stats.gamma(4, scale=0.5).cdf).statistic < 0.01
    s = sample_bernoulli_fht(BernoulliSpec(p=0.4, m=3), seed=0, size=100_000)
    assert s.min() >= 3
    assert s.mean() == pytest.approx(3 / 0.4, rel=0.01)


def test_ou_small_theta_is_wiener():
    # theta -> 0 with equilibrium far below: drift -theta*(x - eq) ~ constant
    theta = 1e-8
    eq = -1.0 / theta  # drift theta*(eq - x) ~ -1
    t = sample_ou_fht(OuSpec(theta, eq, 1.0, 1.0), dt=1e-3, t_max=30.0, seed=3, size=100_000)
    assert ks_vs_ig(t, -1.0) <= 0.03


def test_ou_pure_small_theta_driftless():
    t = sample_ou_fht(OuSpec(1e-8, 0.0, 1.0, 1.0), dt=1e-2, t_max=20.0, seed=3, size=50_000)
    assert ks_vs_ig(t, 0.0) <= 0.03


def test_ou_rejects_start_on_boundary():
    with pytest.raises(ValueError):
        sample_ou_fht(OuSpec(1.0, 0.0, 1.0, 0.5), boundary_level=0.5)


def test_ou_reversion_sweep_monotone():
    fr = []
    for theta in (0.5, 2.0, 8.0):
        t = sample_ou_fht(OuSpec(theta, 3.0, 1.0, 1.0), dt=1e-2, t_max=5.0, seed=6, size=20_000)
        fr.append(np.mean(~np.isfinite(t)))
    assert fr[0] < fr[1] < fr[2]


def test_correlation_factor_rejects_non_psd():
    with pytest.raises(ValueError, match="positive semidefinite"):
        correlation_factor(np.array([[1.0, 1.2], [1.2, 1.0]]))
    with pytest.raises(ValueError):
        correlation_factor(np.array([[1.0, 0.2], [0.3, 1.0]]))
    with pytest.raises(ValueError):
        correlation_factor(np.array([[2.0, 0.0], [0.0, 1.0]]))
    L = correlation_factor(np.ones((2, 2)))
    assert np.allclose(L @ L.T, np.ones((2, 2)))


@pytest.mark.parametrize("rho", [0.0, 0.8])
def test_correlated_increments(rho):
    specs = [WienerSpec(50.0, 1.0, 1e3), WienerSpec(50.0, 1.0, 1e3)]
    dt = 1e-3
    paths = sample_correlated_wiener(specs, np.array([[1, rho], [rho, 1]]), dt=dt, t_max=1000.0, seed=1)
    d1, d2 = (np.diff(p.states) for p in paths)
    assert d1.size >= 1_000_000
    assert abs(np.corrcoef(d1, d2)[0, 1] - rho) <= 0.01


def test_correlated_marginals_match_ig():
    specs = [WienerSpec(-1.0, 1.0, 1.0), WienerSpec(-0.5, 2.0, 1.5)]
    T = correlated_wiener_fht(specs, np.array([[1, 0.5], [0.5, 1]]), dt=5e-3, t_max=50, seed=0, size=100_000)
    assert ks_vs_ig(T[:, 0], -1.0) <= 0.02
    assert ks_vs_ig(T[:, 1], -0.5, 2.0, 1.5) <= 0.02


def test_single_dimension_equals_univariate_law():
    spec = WienerSpec(-1.0, 1.0, 1.0)
    T = correlated_wiener_fht([spec], np.eye(1), dt=1e-2, t_max=50, seed=4, size=50_000)[:, 0]
    u = sample_wiener_fht(spec, dt=1e-2, t_max=50, seed=4, size=50_000)
    assert stats.ks_2samp(T, u).pvalue > 0.001


def test_correlated_dimension_check():
    with pytest.raises(ValueError):
        correlated_wiener_fht([WienerSpec(-1.0)], np.eye(2))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32), mu=st.floats(-2, 2), x0=st.floats(0.1, 3))
def test_samplers_pure_function_of_seed(seed, mu, x0):
    spec = WienerSpec(mu, 1.0, x0)
    a = sample_wiener_fht(spec, dt=0.05, t_max=5, seed=seed, size=64)
    b = sample_wiener_fht(spec, dt=0.05, t_max=5, seed=seed, size=64)
    assert np.array_equal(a, b)
    hit = np.isfinite(a)
    assert np.all(a[hit] > 0) and np.all(a[hit] <= 5 + 1e-12)


def test_block_structure_prefix_stable():
    # replicate i depends only on its block, so a longer run extends a shorter one
    spec = WienerSpec(-1.0, 1.0, 1.0)
    a = sample_ig_exact(spec, seed=8, size=5000)
    b = sample_ig_exact(spec, seed=8, size=9000)
    assert np.array_equal(a[:4096], b[:4096])


def test_prob_finite_mc_long_horizon():
    n = 100_000
    t = sample_wiener_fht(WienerSpec(0.5, 1.0, 1.0), dt=0.1, t_max=200.0, seed=12, size=n)
    p = prob_finite_fht(mu=0.5, sigma2=1.0, x0=1.0)
    assert abs(np.isfinite(t).mean() - p) <= 3 * np.sqrt(p * (1 - p) / n)
