import math

import numpy as np
import pytest
from scipy import stats

from plnde.draws import SamplerConfig
from plnde.lognormal import run_chain
from plnde.model import CountMatrix, SamplingDepths
from plnde.negbinom import (
    FreeTauError,
    NegBinomChain,
    log_nb_likelihood,
    nb_gibbs_scan,
    nb_initial_state,
)
from plnde.simulation import simulate_flat


@pytest.mark.parametrize("k", [0, 1, 7, 250])
def test_poisson_limit(k):
    lp = log_nb_likelihood(k, 1.7, 2.3, -30.0)
    assert lp == pytest.approx(stats.poisson.logpmf(k, 1.7 * math.exp(2.3)), abs=1e-8)


@pytest.mark.parametrize("mu,alpha", [(0.5, -2.0), (3.0, 0.7), (5.0, -4.0)])
def test_pmf_sums_to_one_and_has_mean(mu, alpha):
    s = 1.3
    k = np.arange(0, 20_000)
    p = np.exp(log_nb_likelihood(k, s, mu, alpha))
    assert p.sum() == pytest.approx(1.0, abs=1e-10)
    assert (k * p).sum() == pytest.approx(s * math.exp(mu), rel=1e-8)


def test_matches_scipy_parameterization():
    # size r = e^-alpha, success probability r / (r + M)
    mu, alpha, s = 2.0, -0.5, 0.8
    r = math.exp(-alpha)
    M = s * math.exp(mu)
    k = np.arange(60)
    np.testing.assert_allclose(log_nb_likelihood(k, s, mu, alpha), stats.nbinom.logpmf(k, r, r / (r + M)), rtol=1e-11)


def test_variance_matches_gamma_poisson():
    mu, alpha = 3.0, -1.0
    k = np.arange(0, 5000)
    p = np.exp(log_nb_likelihood(k, 1.0, mu, alpha))
    M = math.exp(mu)
    var = (k**2 * p).sum() - (k * p).sum() ** 2
    assert var == pytest.approx(M + M**2 * math.exp(alpha), rel=1e-8)


def _cm(seed=0, m=40, n=3):
    return simulate_flat(m, n, seed=seed, model="negbinom")[0]


def test_free_tau_refused():
    cm = _cm()
    with pytest.raises(FreeTauError, match="fixed tau"):
        run_chain(cm, SamplingDepths(np.ones(6)), SamplerConfig(n_iter=10, n_burnin=0, model="negbinom"))


def test_free_tau_override_runs():
    cm = _cm()
    cfg = SamplerConfig(n_iter=20, n_burnin=0, model="negbinom", allow_free_tau=True)
    d = run_chain(cm, SamplingDepths(np.ones(6)), cfg)
    assert d.n_draws == 2 and np.all(d.tau_sq > 0)


def test_zero_steps_give_identity_scan():
    cm = _cm()
    depths = SamplingDepths(np.ones(6))
    cfg = SamplerConfig(
        n_iter=2, n_burnin=0, thin=1, model="negbinom", fix_tau=0.8, alpha_step=0.0, joint_step=0.0, warmup=10**9
    )
    st0 = nb_initial_state(cm, depths, cfg)
    st1 = nb_gibbs_scan(st0, cm, depths, cfg)
    np.testing.assert_array_equal(st1.alpha, st0.alpha)
    np.testing.assert_array_equal(st1.indicator, st0.indicator)
    np.testing.assert_array_equal(st1.mu_a, st0.mu_a)
    np.testing.assert_array_equal(st1.gamma, st0.gamma)
    assert st1.tau_sq == 0.8**2


def test_determinism():
    cm = _cm(1)
    cfg = SamplerConfig(n_iter=300, n_burnin=100, thin=5, seed=9, model="negbinom", fix_tau=0.8, block_size=16)
    a = run_chain(cm, SamplingDepths(np.ones(6)), cfg)
    b = run_chain(cm, SamplingDepths(np.ones(6)), cfg)
    c = run_chain(cm, SamplingDepths(np.ones(6)), SamplerConfig(**(cfg.to_dict() | {"threads": 3})))
    for x in (b, c):
        np.testing.assert_array_equal(a.mu_a, x.mu_a)
        np.testing.assert_array_equal(a.alpha, x.alpha)
        np.testing.assert_array_equal(a.indicator, x.indicator)


def _poisson_posterior_mean_mu(k_a, k_b, pi, s2):
    """E[mu_A] under flat mu prior, spike-and-slab gamma, Poisson likelihood, by grid quadrature."""
    mu = np.linspace(0.5, 5.5, 2001)
    g = np.linspace(-4.0, 4.0, 2001)
    M, G = np.meshgrid(mu, g, indexing="ij")
    ll_a = sum(stats.poisson.logpmf(k, np.exp(mu)) for k in k_a)
    ll_b0 = sum(stats.poisson.logpmf(k, np.exp(mu)) for k in k_b)
    ll_b1 = sum(stats.poisson.logpmf(k, np.exp(M + G)) for k in k_b)
    shift = ll_a.max() + ll_b0.max()
    f0 = (1 - pi) * np.exp(ll_a + ll_b0 - shift)
    f1 = pi * np.exp(ll_a[:, None] + ll_b1 - shift + stats.norm.logpdf(G, 0, math.sqrt(s2)))
    f1_mu = np.trapezoid(f1, g, axis=1)
    z = np.trapezoid(f0 + f1_mu, mu)
    return np.trapezoid(mu * (f0 + f1_mu), mu) / z


def test_poisson_like_gene_matches_quadrature():
    k_a, k_b = [10, 12], [30, 25]
    reps = 60
    cm = CountMatrix(np.tile(k_a + k_b, (reps, 1)), [f"g{j}" for j in range(reps)], list("AABB"))
    depths = SamplingDepths(np.ones(4))
    pi, sg = 0.3, 0.8
    cfg = SamplerConfig(
        n_iter=6000, n_burnin=1000, thin=1, seed=4, model="negbinom", fix_tau=0.8, fix_pi=pi,
        fix_sigma_gamma=sg, alpha_step=0.0, warmup=100,
    )
    chain = NegBinomChain(cm, depths, cfg)
    for prop in chain.alpha_props:
        prop.warmup = 10**9  # keep the zero alpha step: alpha stays in the Poisson limit
    state = nb_initial_state(cm, depths, cfg)
    state.alpha[:] = -30.0
    chain.seed(state)
    d = chain.run(state)
    assert np.all(d.alpha == -30.0)
    per_gene = d.mu_a.mean(0)
    se = per_gene.std(ddof=1) / math.sqrt(reps)
    target = _poisson_posterior_mean_mu(k_a, k_b, pi, sg**2)
    assert abs(per_gene.mean() - target) < 3 * se + 1e-3


def test_both_models_agree_on_mu():
    cm, truth = simulate_flat(300, 5, seed=3)
    depths = SamplingDepths(np.ones(10))
    base = dict(n_iter=3000, n_burnin=1000, thin=5, seed=2, fix_tau=0.8)
    ln = run_chain(cm, depths, SamplerConfig(**base))
    nb = run_chain(cm, depths, SamplerConfig(model="negbinom", **base))
    for fam in (lambda d: d.mu_a, lambda d: d.mu_b):
        r = np.corrcoef(np.median(fam(ln), 0), np.median(fam(nb), 0))[0, 1]
        assert r > 0.95
