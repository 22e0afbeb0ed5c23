"""Gibbs sampler for the Poisson-lognormal model with spike-and-slab fold changes.

Model, for gene j, sample i in condition T::

    k_ij ~ Poisson(s_i exp(lambda_ij))
    lambda_ij ~ N(mu_j^A + gamma_j [T = B], exp(alpha_j^T))
    gamma_j = 0 if I_j = 0 else N(0, sigma_gamma^2),  I_j ~ Bernoulli(pi)
    alpha_j^T ~ N(psi0, tau^2)

with flat priors on mu_j^A and psi0, U(0, 1) on pi and 1/x priors on
sigma_gamma^2 and tau^2.  ``lambda`` and ``alpha`` move by adaptive
random-walk MH; ``(I_j, mu_j^A, gamma_j)`` are drawn jointly by integrating
out ``mu_j^A`` and ``gamma_j`` for ``I_j`` and ``gamma_j`` for ``mu_j^A``.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np
from scipy.special import expit, gammaln

from .adaptive import AdaptiveProposal
from .draws import PosteriorDraws, SamplerConfig
from .model import ChainState, CountMatrix, SamplingDepths

VAR_FLOOR = 1e-10
LOG_2PI = np.log(2 * np.pi)

INIT_ALPHA = -3.0
INIT_TAU_SQ = 1.0
INIT_SIGMA_GAMMA_SQ = 0.5
INIT_PI = 0.1


def _norm_logpdf(x, mean, var):
    return -0.5 * (LOG_2PI + np.log(var) + (x - mean) ** 2 / var)


# -- closed forms --------------------------------------------------------------


def product_of_normals(mu1, var1, mu2, var2):
    """Factor ``N(x|mu1,var1) N(x|mu2,var2)`` into a constant and a density in x.

    Returns ``((mu2, var1 + var2), (mean, var))``: the first pair parameterizes
    ``N(mu1 | mu2, var1 + var2)``, the second the normal density in ``x``.
    """
    total = var1 + var2
    mean = (mu1 * var2 + mu2 * var1) / total
    var = var1 * var2 / total
    return (mu2, total), (mean, var)


def log_fcd_lambda(k, s, lam, mean, alpha):
    """log Poisson(k | s e^lam) + log N(lam | mean, e^alpha)."""
    return k * (np.log(s) + lam) - s * np.exp(lam) - gammaln(k + 1.0) + _norm_logpdf(lam, mean, np.exp(alpha))


def log_fcd_alpha(lambdas, mean, alpha, psi0, tau_sq):
    """sum_i log N(lambda_i | mean, e^alpha) + log N(alpha | psi0, tau_sq)."""
    lambdas = np.asarray(lambdas, dtype=float)
    ss = np.sum((lambdas - mean) ** 2)
    n = lambdas.size
    return -0.5 * n * (LOG_2PI + alpha) - 0.5 * ss * np.exp(-alpha) + _norm_logpdf(alpha, psi0, tau_sq)


def _alpha_target(alpha, ss, n, psi0, tau_sq):
    # log_fcd_alpha without the constant, from sufficient statistics
    return -0.5 * n * alpha - 0.5 * ss * np.exp(-alpha) - 0.5 * (alpha - psi0) ** 2 / tau_sq


def _group_variances(alpha_a, alpha_b, n_a, n_b, sigma_gamma_sq, indicator):
    var_a = np.exp(alpha_a) / n_a
    var_b = np.exp(alpha_b) / n_b + np.where(indicator, sigma_gamma_sq, 0.0)
    return var_a, var_b


def indicator_probability(lbar_a, lbar_b, alpha_a, alpha_b, n_a, n_b, pi, sigma_gamma_sq):
    """P(I_j = 1 | lambda, alpha, pi, sigma_gamma^2) with mu_j^A and gamma_j integrated out.

    With ``n_a == n_b == n`` this is ``pi N1 / (pi N1 + (1 - pi) N0)`` with
    ``N_l = N(lbar_a | lbar_b, (e^alpha_a + v_l) / n)``, ``v_0 = e^alpha_b``
    and ``v_1 = e^alpha_b + n sigma_gamma^2``.
    """
    base = np.exp(alpha_a) / n_a + np.exp(alpha_b) / n_b
    diff = lbar_a - lbar_b
    log_n0 = _norm_logpdf(diff, 0.0, base)
    log_n1 = _norm_logpdf(diff, 0.0, base + sigma_gamma_sq)
    return expit(np.log(pi) + log_n1 - np.log1p(-pi) - log_n0)


def mu_conditional(lbar_a, lbar_b, alpha_a, alpha_b, n_a, n_b, indicator, sigma_gamma_sq):
    """Mean and variance of mu_j^A given I_j, with gamma_j integrated out."""
    var_a, var_b = _group_variances(alpha_a, alpha_b, n_a, n_b, sigma_gamma_sq, indicator)
    _, (mean, var) = product_of_normals(lbar_a, var_a, lbar_b, var_b)
    return mean, var


def gamma_conditional(sum_b_resid, alpha_b, n_b, sigma_gamma_sq):
    """Mean and variance of gamma_j given I_j = 1 and mu_j^A.

    ``sum_b_resid`` is ``sum_i (lambda_ij^B - mu_j^A)``.
    """
    v1 = np.exp(alpha_b) + n_b * sigma_gamma_sq
    return sigma_gamma_sq * sum_b_resid / v1, sigma_gamma_sq * np.exp(alpha_b) / v1


def update_indicator_collapsed(lbar_a, lbar_b, alpha_a, alpha_b, n_a, n_b, pi, sigma_gamma_sq, rng):
    p = indicator_probability(lbar_a, lbar_b, alpha_a, alpha_b, n_a, n_b, pi, sigma_gamma_sq)
    return rng.random(np.shape(p)) < p


def update_mu_collapsed(lbar_a, lbar_b, alpha_a, alpha_b, n_a, n_b, indicator, sigma_gamma_sq, rng):
    mean, var = mu_conditional(lbar_a, lbar_b, alpha_a, alpha_b, n_a, n_b, indicator, sigma_gamma_sq)
    return mean + np.sqrt(var) * rng.standard_normal(np.shape(mean))


def update_gamma(lam_b, mu_a, alpha_b, indicator, sigma_gamma_sq, rng):
    """Draw gamma_j; exactly zero where ``indicator`` is false. ``lam_b`` is genes x n_B."""
    lam_b = np.atleast_2d(lam_b)
    mean, var = gamma_conditional(lam_b.sum(axis=1) - lam_b.shape[1] * mu_a, alpha_b, lam_b.shape[1], sigma_gamma_sq)
    draw = mean + np.sqrt(var) * rng.standard_normal(np.shape(mean))
    return np.where(indicator, draw, 0.0)


def update_hyperparameters(state: ChainState, config: SamplerConfig, rng: np.random.Generator) -> ChainState:
    """Exact Gibbs draws of pi, sigma_gamma^2, psi0 and tau^2 (in that order).

    sigma_gamma^2 keeps its previous value when no gene is DE, because its
    conditional is then improper.  Fixed hyperparameters in ``config`` are
    set, not drawn.
    """
    ind = np.asarray(state.indicator).astype(bool)
    m = ind.size
    k = int(ind.sum())

    if config.fix_pi is not None:
        pi = config.fix_pi
    else:
        pi = rng.beta(1.0 + k, 1.0 + (m - k))
        pi = float(np.clip(pi, 1e-300, 1 - 1e-16))

    if config.fix_sigma_gamma is not None:
        s2 = config.fix_sigma_gamma**2
    elif k > 0:
        ss = float(np.sum(state.gamma[ind] ** 2))
        s2 = max(0.5 * ss / rng.gamma(0.5 * k), VAR_FLOOR)
    else:
        s2 = state.sigma_gamma_sq

    tau_sq = config.fix_tau**2 if config.fix_tau is not None else state.tau_sq
    alpha = state.alpha
    n_alpha = alpha.size
    if config.fix_psi0 is not None:
        psi0 = config.fix_psi0
    else:
        psi0 = float(alpha.sum() / n_alpha + np.sqrt(tau_sq / n_alpha) * rng.standard_normal())

    if config.fix_tau is None:
        ss = float(np.sum((alpha - psi0) ** 2))
        tau_sq = max(0.5 * ss / rng.gamma(0.5 * n_alpha), VAR_FLOOR)

    return replace(state, pi=float(pi), sigma_gamma_sq=float(s2), psi0=float(psi0), tau_sq=float(tau_sq))


# -- chain machinery ------------------------------------------------------------


def initial_state(cm: CountMatrix, depths: SamplingDepths, config: SamplerConfig | None = None) -> ChainState:
    """Data-driven starting point; columns of ``cm`` must be grouped A then B."""
    config = config or SamplerConfig()
    n_a = cm.n_a
    # gene-minor layout: the chain works on the contiguous transposes
    lam = np.asfortranarray(np.log((cm.counts + 0.5) / depths.s))
    m = cm.m
    psi0 = INIT_ALPHA if config.fix_psi0 is None else config.fix_psi0
    return ChainState(
        lam=lam,
        mu_a=lam[:, :n_a].mean(axis=1),
        gamma=np.zeros(m),
        indicator=np.zeros(m, dtype=bool),
        alpha=np.full((m, 2), INIT_ALPHA, order="F"),
        pi=INIT_PI if config.fix_pi is None else config.fix_pi,
        sigma_gamma_sq=INIT_SIGMA_GAMMA_SQ if config.fix_sigma_gamma is None else config.fix_sigma_gamma**2,
        psi0=psi0,
        tau_sq=INIT_TAU_SQ if config.fix_tau is None else config.fix_tau**2,
    )


def _blocks(m: int, size: int) -> list[slice]:
    return [slice(b, min(b + size, m)) for b in range(0, m, size)]


class _ChainBase:
    """Shared run loop: gene blocks with private RNG streams, then a hyperparameter barrier."""

    family_names: tuple[str, ...] = ()

    def __init__(self, cm: CountMatrix, depths: SamplingDepths, config: SamplerConfig):
        if tuple(cm.condition) != tuple(sorted(cm.condition)):
            order = np.concatenate([np.flatnonzero(cm.is_a), np.flatnonzero(~cm.is_a)])
            cm = cm.grouped()
            depths = SamplingDepths(depths.s[order], tuple(cm.sample_ids))
        self.cm = cm
        self.config = config
        self.n_a, self.n_b = cm.n_a, cm.n_b
        self.k = cm.counts.astype(float)
        self.s = np.asarray(depths.s, dtype=float)
        self.log_s = np.log(self.s)
        self.blocks = _blocks(cm.m, config.block_size)
        seqs = np.random.SeedSequence(config.seed).spawn(len(self.blocks) + 1)
        self.hyper_rng = np.random.default_rng(seqs[0])
        self.block_rngs = [np.random.default_rng(s) for s in seqs[1:]]
        self.accepts = {name: np.zeros(self._family_shape(name), order="F") for name in self.family_names}
        self.n_updates = 0
        self.adapting = True

    def _family_shape(self, name):
        raise NotImplementedError

    def update_block(self, state: ChainState, b: int) -> None:
        raise NotImplementedError

    def scan(self, state: ChainState) -> ChainState:
        """One in-place sweep over all blocks followed by the hyperparameters."""
        idx = range(len(self.blocks))
        if self.config.threads > 1 and len(self.blocks) > 1:
            with ThreadPoolExecutor(self.config.threads) as pool:
                list(pool.map(lambda b: self.update_block(state, b), idx))
        else:
            for b in idx:
                self.update_block(state, b)
        self.n_updates += 1
        new = update_hyperparameters(state, self.config, self.hyper_rng)
        state.pi, state.sigma_gamma_sq, state.psi0, state.tau_sq = new.pi, new.sigma_gamma_sq, new.psi0, new.tau_sq
        return state

    def run(self, state: ChainState, progress=None) -> PosteriorDraws:
        cfg = self.config
        m = self.cm.m
        n_saved = cfg.n_saved
        out = {
            "mu_a": np.empty((n_saved, m)),
            "gamma": np.empty((n_saved, m)),
            "indicator": np.empty((n_saved, m), dtype=np.int8),
            "alpha": np.empty((n_saved, m, 2)),
            "pi": np.empty(n_saved),
            "sigma_gamma_sq": np.empty(n_saved),
            "psi0": np.empty(n_saved),
            "tau_sq": np.empty(n_saved),
        }
        lam = np.empty((n_saved,) + state.lam.shape) if cfg.save_lambda else None
        start = time.perf_counter()
        saved = 0
        for it in range(cfg.n_iter):
            if it == cfg.n_burnin:
                self.adapting = cfg.adapt_after_burnin
                for v in self.accepts.values():
                    v[...] = 0.0
                self.n_updates = 0
            self.scan(state)
            if it >= cfg.n_burnin and (it - cfg.n_burnin + 1) % cfg.thin == 0 and saved < n_saved:
                out["mu_a"][saved] = state.mu_a
                out["gamma"][saved] = state.gamma
                out["indicator"][saved] = state.indicator
                out["alpha"][saved] = state.alpha
                out["pi"][saved] = state.pi
                out["sigma_gamma_sq"][saved] = state.sigma_gamma_sq
                out["psi0"][saved] = state.psi0
                out["tau_sq"][saved] = state.tau_sq
                if lam is not None:
                    lam[saved] = state.lam
                saved += 1
            if progress is not None:
                progress(it + 1, cfg.n_iter)
        elapsed = time.perf_counter() - start
        rates = {k: v / max(self.n_updates, 1) for k, v in self.accepts.items()}
        return PosteriorDraws(
            gene_ids=self.cm.gene_ids,
            model=cfg.model,
            acceptance=rates,
            elapsed=elapsed,
            lam=lam,
            **out,
        )


class LognormalChain(_ChainBase):
    """Lognormal sampler.

    The block update works on samples x genes views (``state.lam.T``) so
    every elementwise loop runs over genes; states are stored gene-minor
    (Fortran order) to make those views contiguous.
    """

    family_names = ("lambda", "alpha")

    def __init__(self, cm, depths, config):
        super().__init__(cm, depths, config)
        m, n = self.k.shape
        self.kT = np.ascontiguousarray(self.k.T)
        self.sT = self.s[:, None]
        self.lam_prop = AdaptiveProposal((n, m), 1, config.lambda_step, warmup=config.warmup)
        self.alpha_prop = AdaptiveProposal((2, m), 1, config.alpha_step, warmup=config.warmup)
        self.col_group = (np.arange(n) >= self.n_a).astype(np.intp)
        self.b_mask = self.col_group.astype(float)[:, None]
        self.nn = np.array([[self.n_a], [self.n_b]], dtype=float)

    def _family_shape(self, name):
        return self.k.shape if name == "lambda" else (self.k.shape[0], 2)

    def scan(self, state: ChainState) -> ChainState:
        if not state.lam.flags.f_contiguous:
            state.lam = np.asfortranarray(state.lam)
        if not state.alpha.flags.f_contiguous:
            state.alpha = np.asfortranarray(state.alpha)
        return super().scan(state)

    def _record(self, prop: AdaptiveProposal, cols: slice, x: np.ndarray) -> None:
        # Welford update restricted to one block of genes
        cnt = prop.count[:, cols]
        cnt += 1
        mean = prop.history_mean[:, cols, 0]
        delta = x - mean
        mean += delta / cnt
        prop.m2[:, cols, 0, 0] += delta * (x - mean)

    def update_block(self, state: ChainState, b: int) -> None:
        cols = self.blocks[b]
        rng = self.block_rngs[b]
        n_a, n_b = self.n_a, self.n_b
        k = self.kT[:, cols]
        lam = state.lam.T[:, cols]
        mu_a = state.mu_a[cols]
        gamma = state.gamma[cols]
        alpha = state.alpha.T[:, cols]
        psi0, tau_sq = state.psi0, state.tau_sq

        # lambda_ij | rest: adaptive random-walk MH, all entries of the block at once
        mean = mu_a + self.b_mask * gamma
        inv_var = np.exp(-alpha)
        prec = inv_var[self.col_group]
        sd = _block_sd(self.lam_prop, cols)
        prop = lam + sd * rng.standard_normal(lam.shape)
        step = prop - lam
        rate = self.sT * np.exp(lam)
        # log target ratio; the normal part is (d^2 - r^2) / 2 = step * (r + step / 2)
        log_ratio = k * step - rate * np.expm1(step) - (lam - mean + 0.5 * step) * step * prec
        acc = _mh_accept(log_ratio, rng)
        lam = np.where(acc, prop, lam)
        state.lam.T[:, cols] = lam
        self.accepts["lambda"].T[:, cols] += acc
        if self.adapting:
            self._record(self.lam_prop, cols, lam)

        # alpha_j^T | rest, from the group sums of squared residuals
        sq = (lam - mean) ** 2
        ss = np.stack([sq[:n_a].sum(0), sq[n_a:].sum(0)])
        sd = _block_sd(self.alpha_prop, cols)
        prop = alpha + sd * rng.standard_normal(alpha.shape)
        inv_prop = np.exp(-prop)
        step = prop - alpha
        log_ratio = -0.5 * (self.nn * step + ss * (inv_prop - inv_var) + step * (alpha + prop - 2 * psi0) / tau_sq)
        acc = _mh_accept(log_ratio, rng)
        alpha = np.where(acc, prop, alpha)
        var = 1.0 / np.where(acc, inv_prop, inv_var)
        state.alpha.T[:, cols] = alpha
        self.accepts["alpha"].T[:, cols] += acc
        if self.adapting:
            self._record(self.alpha_prop, cols, alpha)

        # (I_j, mu_j^A, gamma_j) jointly
        ind, mu_new, gamma_new = draw_collapsed(
            lam[:n_a].sum(0), lam[n_a:].sum(0), var[0], var[1], n_a, n_b, state.pi, state.sigma_gamma_sq, rng
        )
        state.indicator[cols] = ind
        state.mu_a[cols] = mu_new
        state.gamma[cols] = gamma_new


def draw_collapsed(sum_a, sum_b, var_a, var_b, n_a, n_b, pi, sigma_gamma_sq, rng):
    """Vectorized draw of (I, mu^A, gamma) from their joint conditional.

    ``sum_a``/``sum_b`` are per-gene sums of lambda in each condition and
    ``var_a``/``var_b`` are ``exp(alpha)``.  Same distribution as
    :func:`update_indicator_collapsed`, :func:`update_mu_collapsed` and
    :func:`update_gamma` in sequence, with one uniform per gene, then one
    normal per gene for mu, then one normal per DE gene for gamma.
    """
    s2 = sigma_gamma_sq
    va = var_a / n_a
    vb = var_b / n_b
    base = va + vb
    wide = base + s2
    diff = sum_a / n_a - sum_b / n_b
    log_odds = np.log(pi) - np.log1p(-pi) - 0.5 * (np.log(wide / base) + diff**2 * (1.0 / wide - 1.0 / base))
    with np.errstate(over="ignore"):
        ind = rng.random(log_odds.shape) * (1.0 + np.exp(-log_odds)) < 1.0
    vb = vb + ind * s2
    total = va + vb
    mu_mean = (sum_a / n_a * vb + sum_b / n_b * va) / total
    mu = mu_mean + np.sqrt(va * vb / total) * rng.standard_normal(mu_mean.shape)
    # gamma is drawn only where I = 1 and is exactly zero elsewhere
    on = np.flatnonzero(ind)
    v_on = var_b[on]
    v1 = v_on + n_b * s2
    gamma = np.zeros_like(mu)
    gamma[on] = s2 * (sum_b[on] - n_b * mu[on]) / v1 + np.sqrt(s2 * v_on / v1) * rng.standard_normal(on.size)
    return ind, mu, gamma

def _mh_accept(log_ratio: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # accept with probability min(1, exp(log_ratio)); a -inf ratio always rejects
    if np.isnan(log_ratio).any():
        raise FloatingPointError("NaN log density ratio")
    return np.log(rng.random(log_ratio.shape)) < log_ratio


def _block_sd(prop: AdaptiveProposal, cols: slice):
    # every entry of a block is recorded together, so the block shares one count
    cnt = int(prop.count[:, cols].flat[0])
    if cnt < prop.warmup:
        return prop.initial_step
    return np.sqrt(prop.scale / (cnt - 1) * prop.m2[:, cols, 0, 0] + prop.jitter)


def gibbs_scan(state: ChainState, cm: CountMatrix, depths: SamplingDepths, config: SamplerConfig, chain=None) -> ChainState:
    """Return the state after one full sweep (the input state is not modified).

    ``chain`` carries the proposal histories and random streams between
    calls; a fresh one is built from ``config.seed`` when omitted.
    """
    chain = chain if chain is not None else LognormalChain(cm, depths, config)
    return chain.scan(state.copy())


def run_chain(cm: CountMatrix, depths: SamplingDepths, config: SamplerConfig, progress=None) -> PosteriorDraws:
    if config.model == "negbinom":
        from .negbinom import run_nb_chain

        return run_nb_chain(cm, depths, config, progress=progress)
    chain = LognormalChain(cm, depths, config)
    state = initial_state(chain.cm, SamplingDepths(chain.s), config)
    return chain.run(state, progress)

