"""Simulation studies: calibration, detection, coverage, sampler comparison and scaling.

Each study returns plain dataclasses so the scripts can tabulate them and
the acceptance tests can check them.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .diagnostics import (
    CoverageRow,
    MixingRow,
    coverage_experiment,
    ff_baseline,
    mixing_row,
    roc,
)
from .draws import SamplerConfig
from .enrichment import GeneSetCollection, enrich_all
from .lognormal import LognormalChain, initial_state, run_chain
from .model import SamplingDepths, estimate_depths, filter_low_counts
from .simulation import SimulationDesign, simulate_dataset, simulate_flat, set_name


# ---------------------------------------------------------------- calibration


@dataclass
class SbcResult:
    gamma_ranks: np.ndarray
    psi0_ranks: np.ndarray
    n_draws: int
    n_bins: int = 10

    def chi2_pvalue(self, ranks: np.ndarray) -> float:
        counts, _ = np.histogram(ranks, bins=self.n_bins, range=(0, self.n_draws + 1))
        return float(stats.chisquare(counts).pvalue)

    @property
    def gamma_pvalue(self) -> float:
        return self.chi2_pvalue(self.gamma_ranks)

    @property
    def psi0_pvalue(self) -> float:
        return self.chi2_pvalue(self.psi0_ranks)


def _rank(draws: np.ndarray, truth: float, rng) -> int:
    """Number of draws below the truth, ties broken uniformly at random."""
    below = int(np.sum(draws < truth))
    ties = int(np.sum(draws == truth))
    return below + int(rng.integers(0, ties + 1))


def sbc(
    reps: int = 500,
    m: int = 50,
    n: int = 5,
    n_draws: int = 99,
    thin: int = 10,
    burnin: int = 1000,
    pi0: float = 0.5,
    sigma_gamma: float = 0.8,
    tau: float = 0.8,
    psi0_loc: float = -3.0,
    psi0_sd: float = 1.0,
    seed: int = 0,
    progress=None,
) -> SbcResult:
    """Simulation-based calibration of the lognormal sampler on the flat design.

    pi, sigma_gamma and tau are held at their generating values; psi0 is
    sampled under its flat prior while its true value is drawn from a wide
    normal, which the flat prior approximates at this posterior width.  One
    gene per replication (cycling through positions) contributes a gamma rank.
    """
    g_ranks = np.empty(reps, dtype=int)
    p_ranks = np.empty(reps, dtype=int)
    for r in range(reps):
        rng = np.random.default_rng([seed, r])
        psi0 = psi0_loc + psi0_sd * rng.standard_normal()
        cm, truth = simulate_flat(m, n, pi0, psi0, sigma_gamma, tau, seed=int(rng.integers(2**63)))
        cfg = SamplerConfig(
            n_iter=burnin + n_draws * thin, n_burnin=burnin, thin=thin, seed=int(rng.integers(2**63)),
            fix_pi=pi0, fix_sigma_gamma=sigma_gamma, fix_tau=tau,
        )
        d = run_chain(cm, SamplingDepths(truth.depths), cfg)
        j = r % m
        g_ranks[r] = _rank(d.gamma[:, j], truth.gamma[j], rng)
        p_ranks[r] = _rank(d.psi0, psi0, rng)
        if progress is not None:
            progress(r + 1, reps)
    return SbcResult(g_ranks, p_ranks, n_draws)


# ---------------------------------------------------------------- detection


@dataclass
class DetectionResult:
    seed: int
    gene_auc: float
    gene_auc_baseline: float
    set_auc: float
    set_auc_baseline: float
    n_genes: int
    minutes: float


def detection_replicate(
    seed: int, n_sets: int = 100, n_iter: int = 10000, n_burnin: int = 5000, thin: int = 5, alpha_level: float = 0.05
) -> DetectionResult:
    """One replicate of the set-structured study at ``n_sets`` x 20 genes.

    Genes failing the low-count filter are dropped before fitting; depths are
    estimated by median of ratios.  Gene ROC compares posterior DE
    probabilities with Welch p-values; set ROC compares posterior enrichment
    probabilities with Fisher p-values on Welch calls at ``alpha_level``.
    """
    cm, truth = simulate_dataset(SimulationDesign(seed=seed).scaled(n_sets))
    kept, _ = filter_low_counts(cm)
    keep = np.isin(cm.gene_ids, kept.gene_ids)
    depths = estimate_depths(kept)
    cfg = SamplerConfig(n_iter=n_iter, n_burnin=n_burnin, thin=thin, seed=seed)
    d = run_chain(kept, depths, cfg)

    is_de = truth.indicator[keep].astype(bool)
    members = truth.set_members()
    names = [set_name(l) for l in range(len(truth.set_enriched))]
    coll = GeneSetCollection(names, [members[s] for s in names]).resolve(kept.gene_ids)
    enriched = truth.set_enriched

    probs = [r.probability for r in enrich_all(d, coll)]
    p_gene, p_set = ff_baseline(kept, depths, coll, alpha_level)
    return DetectionResult(
        seed=seed,
        gene_auc=roc(d.p_de, is_de, "posterior").auc,
        gene_auc_baseline=roc(p_gene, is_de, "pvalue").auc,
        set_auc=roc(probs, enriched, "posterior").auc,
        set_auc_baseline=roc(p_set, enriched, "pvalue").auc,
        n_genes=kept.m,
        minutes=d.elapsed / 60,
    )


# ---------------------------------------------------------------- coverage


def coverage_study(
    ns=(2, 5), m: int = 1000, level: float = 0.8, n_iter: int = 10000, n_burnin: int = 5000, thin: int = 10, seed: int = 0
) -> list[CoverageRow]:
    """Central-interval coverage of the generating mu and alpha on the flat design."""
    rows = []
    for n in ns:
        cm, truth = simulate_flat(m, n, seed=seed + n)
        cfg = SamplerConfig(n_iter=n_iter, n_burnin=n_burnin, thin=thin, seed=seed)
        d = run_chain(cm, SamplingDepths(truth.depths), cfg)
        rows.extend(coverage_experiment(None, {f"n={n}": d}, level, truth=truth))
    return rows


# ---------------------------------------------------------------- sampler comparison


@dataclass
class ComparisonResult:
    n: int
    rows: list[MixingRow] = field(default_factory=list)

    def row(self, model: str) -> MixingRow:
        return next(r for r in self.rows if r.model == model)


def sampler_comparison(
    n: int = 2, m: int = 1000, n_iter: int = 15000, n_burnin: int = 5000, thin: int = 10, tau: float = 0.8, seed: int = 0
) -> ComparisonResult:
    """Fit each data model to data simulated from itself with tau held fixed."""
    out = ComparisonResult(n)
    for model in ("lognormal", "negbinom"):
        cm, truth = simulate_flat(m, n, tau=tau, seed=seed, model=model)
        cfg = SamplerConfig(n_iter=n_iter, n_burnin=n_burnin, thin=thin, seed=seed, model=model, fix_tau=tau)
        d = run_chain(cm, SamplingDepths(truth.depths), cfg)
        out.rows.append(mixing_row(d, truth))
    return out


# ---------------------------------------------------------------- scaling


def _scan_timer(m: int, n: int, seed: int = 0, block_size: int | None = None, warm: int = 3):
    """Return a zero-argument function that times one lognormal scan (single thread)."""
    cm, truth = simulate_flat(m, n, seed=seed)
    cfg = SamplerConfig(n_iter=2, n_burnin=0, thin=1, seed=seed)
    if block_size is not None:
        cfg = replace(cfg, block_size=block_size)
    chain = LognormalChain(cm, SamplingDepths(truth.depths), cfg)
    state = initial_state(cm, SamplingDepths(truth.depths), cfg)
    for _ in range(warm):
        chain.scan(state)

    def timed() -> float:
        t0 = time.perf_counter()
        chain.scan(state)
        return time.perf_counter() - t0

    return timed


def scan_seconds(m: int, n: int, repeats: int = 15, warm: int = 3, seed: int = 0, block_size: int | None = None) -> float:
    """Wall time of one lognormal scan (single thread), minimum over ``repeats``.

    The minimum is the least noise-sensitive estimate of intrinsic cost on a
    shared machine.  ``block_size`` defaults to the sampler's default.
    """
    timed = _scan_timer(m, n, seed, block_size, warm)
    return float(min(timed() for _ in range(repeats)))


@dataclass
class ScalingResult:
    m: np.ndarray
    n: np.ndarray
    seconds: np.ndarray
    intercept: float
    slope: float

    @property
    def predicted(self) -> np.ndarray:
        return self.intercept + self.slope * self.m * self.n

    @property
    def max_deviation(self) -> float:
        """Largest ratio between observed and fitted time, either direction."""
        r = self.seconds / self.predicted
        return float(np.max(np.maximum(r, 1 / r)))


def scaling_study(ms=(1000, 2000, 4000, 8000), ns=(2, 4, 8), repeats: int = 30, seed: int = 0) -> ScalingResult:
    """Scan time over the grid ``ms`` x ``ns`` (n per group) and its affine fit in m*n.

    Grid points are timed round-robin so slow periods on a shared machine
    spread over all of them; each point keeps its minimum.  The fit weights
    residuals by 1/time, i.e. it minimizes relative error, which is what
    :attr:`ScalingResult.max_deviation` measures.
    """
    grid = [(m, n) for m in ms for n in ns]
    timers = [_scan_timer(m, n, seed) for m, n in grid]
    secs = np.full(len(grid), np.inf)
    for _ in range(repeats):
        for i, timed in enumerate(timers):
            secs[i] = min(secs[i], timed())
    mm = np.array([g[0] for g in grid], float)
    nn = np.array([g[1] for g in grid], float)
    slope, intercept = np.polyfit(mm * nn, secs, 1, w=1 / secs)
    return ScalingResult(mm, nn, secs, float(intercept), float(slope))
