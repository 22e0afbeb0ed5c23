"""Negative-binomial rival sampler with the same priors as the lognormal model.

Counts follow ``NegBinom(mean = s e^mu, squared coefficient of variation = e^alpha)``,
i.e. a Poisson whose rate is Gamma with that mean and squared CV; size is
``r = e^-alpha`` and success probability ``r / (r + mean)``.  No conditional
is available in closed form for ``(I_j, gamma_j, mu_j^A)``, so they move
jointly by a discrete-mixed adaptive MH step; ``alpha`` moves by scalar
adaptive MH.  ``tau`` must be held fixed unless explicitly overridden.
"""

from __future__ import annotations

import numpy as np
from scipy.special import betaln

from .adaptive import AdaptiveProposal, DiscreteMixedProposal, accept, propose, propose_mixed
from .draws import PosteriorDraws, SamplerConfig
from .lognormal import INIT_ALPHA, _ChainBase, initial_state
from .model import ChainState, CountMatrix, SamplingDepths

DEFAULT_FIXED_TAU = 0.8
BRANCH1_GAMMA_FLOOR = 1e-2


class FreeTauError(ValueError):
    pass


def log_nb_likelihood(k, s, mu, alpha):
    """log P(k) for NegBinom with mean ``s e^mu`` and squared CV ``e^alpha``."""
    k = np.asarray(k, dtype=float)
    log_mean = np.log(s) + mu
    r = np.exp(-np.asarray(alpha, dtype=float))
    # r log(r / (r + M)) = -r log1p(M / r)
    size_term = -r * np.log1p(np.exp(log_mean + alpha))
    pos = k > 0
    kk = np.where(pos, k, 1.0)
    # lgamma(k + r) - lgamma(r) - lgamma(k + 1) = -log k - betaln(k, r)
    comb = -np.log(kk) - betaln(kk, r)
    # k log(M / (r + M)) = -k log1p(r / M)
    succ = -kk * np.log1p(np.exp(-alpha - log_mean))
    return size_term + np.where(pos, comb + succ, 0.0)


def _seed_branches(dp: DiscreteMixedProposal, mu_a, gamma1):
    theta0 = np.stack([np.zeros_like(mu_a), mu_a], -1)
    theta1 = np.stack([gamma1, mu_a], -1)
    dp.seed_branches(theta0, theta1)


class NegBinomChain(_ChainBase):
    family_names = ("alpha", "joint")

    def __init__(self, cm: CountMatrix, depths: SamplingDepths, config: SamplerConfig):
        if config.fix_tau is None and not config.allow_free_tau:
            raise FreeTauError(
                "the negative-binomial sampler needs a fixed tau (e.g. fix_tau=0.8): with a free tau "
                "the dispersion hyperparameter drifts to +infinity and the chain does not converge; "
                "set allow_free_tau to override"
            )
        super().__init__(cm, depths, config)
        self.log_s = np.log(self.s)
        self.alpha_props = []
        self.joint_props = []
        n_a = self.n_a
        mean_a = (self.k[:, :n_a] + 0.5).mean(1)
        mean_b = (self.k[:, n_a:] + 0.5).mean(1)
        lfc = np.log(mean_b / mean_a)
        lfc = np.where(np.abs(lfc) < BRANCH1_GAMMA_FLOOR, BRANCH1_GAMMA_FLOOR, lfc)
        self.branch1_gamma_seed = lfc
        for rows in self.blocks:
            size = rows.stop - rows.start
            self.alpha_props.append(AdaptiveProposal((size, 2), 1, config.alpha_step, warmup=config.warmup))
            self.joint_props.append(
                DiscreteMixedProposal((size,), 2, (0,), initial_step=config.joint_step, warmup=config.warmup)
            )

    def _family_shape(self, name):
        return (self.k.shape[0], 2) if name == "alpha" else (self.k.shape[0],)

    def seed(self, state: ChainState) -> None:
        for rows, dp in zip(self.blocks, self.joint_props):
            _seed_branches(dp, state.mu_a[rows], self.branch1_gamma_seed[rows])

    def _loglik(self, k, s, mu_a, gamma, alpha):
        n_a = self.n_a
        ll_a = log_nb_likelihood(k[:, :n_a], s[:n_a], mu_a[:, None], alpha[:, :1]).sum(1)
        ll_b = log_nb_likelihood(k[:, n_a:], s[n_a:], (mu_a + gamma)[:, None], alpha[:, 1:]).sum(1)
        return ll_a, ll_b

    def update_block(self, state: ChainState, b: int) -> None:
        rows = self.blocks[b]
        rng = self.block_rngs[b]
        k = self.k[rows]
        s = self.s
        mu_a = state.mu_a[rows]
        gamma = state.gamma[rows]
        ind = state.indicator[rows].astype(bool)
        alpha = state.alpha[rows]

        # alpha_j^T | rest
        ap = self.alpha_props[b]
        ll = np.stack(self._loglik(k, s, mu_a, gamma, alpha), 1)
        prop = propose(ap, alpha, rng)
        ll_new = np.stack(self._loglik(k, s, mu_a, gamma, prop), 1)
        prior = lambda a: -0.5 * (a - state.psi0) ** 2 / state.tau_sq  # noqa: E731
        acc = accept(ll + prior(alpha), ll_new + prior(prop), rng)
        alpha = np.where(acc, prop, alpha)
        ll = np.where(acc, ll_new, ll)
        state.alpha[rows] = alpha
        self.accepts["alpha"][rows] += acc
        if self.adapting:
            ap.record(alpha[..., None])

        # (I_j, gamma_j, mu_j^A) jointly
        dp = self.joint_props[b]
        log_pi, log_1mpi = np.log(state.pi), np.log1p(-state.pi)
        s2 = state.sigma_gamma_sq

        def log_target(i, g, mu, ll_total):
            slab = -0.5 * (np.log(2 * np.pi * s2) + g**2 / s2)
            return np.where(i, log_pi + slab, log_1mpi) + ll_total

        theta = np.stack([gamma, mu_a], -1)
        new_ind, new_theta, corr = propose_mixed(dp, (ind, theta), rng)
        g_new, mu_new = new_theta[:, 0], new_theta[:, 1]
        cur = log_target(ind, gamma, mu_a, ll.sum(1))
        ll_prop = np.stack(self._loglik(k, s, mu_new, g_new, alpha), 1)
        new = log_target(new_ind, g_new, mu_new, ll_prop.sum(1))
        acc = accept(cur, new, rng, corr)
        ind = np.where(acc, new_ind, ind)
        theta = np.where(acc[:, None], new_theta, theta)
        state.indicator[rows] = ind
        state.gamma[rows] = np.where(ind, theta[:, 0], 0.0)
        state.mu_a[rows] = theta[:, 1]
        self.accepts["joint"][rows] += acc
        if self.adapting:
            dp.record(ind, np.stack([state.gamma[rows], state.mu_a[rows]], -1))


def nb_initial_state(cm: CountMatrix, depths: SamplingDepths, config: SamplerConfig) -> ChainState:
    st = initial_state(cm, depths, config)
    st.lam = np.zeros((cm.m, 0))
    st.alpha[:] = INIT_ALPHA
    return st


def nb_gibbs_scan(state: ChainState, cm: CountMatrix, depths: SamplingDepths, config: SamplerConfig, chain=None):
    """Return the state after one sweep; the input state is not modified."""
    if chain is None:
        chain = NegBinomChain(cm, depths, config)
        chain.seed(state)
    return chain.scan(state.copy())


def run_nb_chain(cm: CountMatrix, depths: SamplingDepths, config: SamplerConfig, progress=None) -> PosteriorDraws:
    chain = NegBinomChain(cm, depths, config)
    state = nb_initial_state(chain.cm, SamplingDepths(chain.s), config)
    chain.seed(state)
    return chain.run(state, progress)
