"""Evaluation tools: ESS, CRPS, interval coverage, ROC/AUC and a frequentist baseline."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .model import CountMatrix, SamplingDepths


# ---------------------------------------------------------------- ESS


def _autocorr(x: np.ndarray) -> np.ndarray:
    """Autocorrelations along axis 0 via FFT (biased autocovariance estimator)."""
    n = x.shape[0]
    xc = x - x.mean(axis=0)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size, axis=0)
    acov = np.fft.irfft(f * np.conj(f), size, axis=0)[:n] / n
    with np.errstate(invalid="ignore", divide="ignore"):
        return acov / acov[0]


def ess_columns(x: np.ndarray) -> np.ndarray:
    """Effective sample size of each column of an (L x p) array of draws.

    Uses the initial monotone positive sequence: sums of adjacent
    autocorrelation pairs are accumulated while positive and forced to be
    non-increasing.  Constant columns get ESS 1; results are clipped to (0, L].
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    L = x.shape[0]
    if L < 10:
        raise ValueError("need at least 10 draws for an ESS estimate")
    const = np.ptp(x, axis=0) == 0
    rho = _autocorr(np.where(const, 0.0, x))
    n_pairs = L // 2
    pairs = rho[: 2 * n_pairs : 2] + rho[1 : 2 * n_pairs : 2]
    positive = np.logical_and.accumulate(pairs > 0, axis=0)
    pairs = np.minimum.accumulate(np.where(positive, pairs, 0.0), axis=0)
    tau = -1.0 + 2.0 * np.where(positive, pairs, 0.0).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        ess = L / tau
    ess = np.clip(np.where(np.isfinite(ess) & (ess > 0), ess, L), np.finfo(float).tiny, L)
    return np.where(const, 1.0, ess)


def effective_sample_size(chain: Sequence[float]) -> float:
    return float(ess_columns(np.asarray(chain, dtype=float))[0])


# ---------------------------------------------------------------- CRPS


def crps_columns(samples: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Sample CRPS for each column of (L x p) ``samples`` against ``truth`` (p,).

    mean|X - y| - mean|X - X'| / 2, the second mean over all L^2 ordered pairs.
    """
    x = np.sort(np.asarray(samples, dtype=float), axis=0)
    if x.ndim == 1:
        x = x[:, None]
    L = x.shape[0]
    if L == 0:
        raise ValueError("need at least one sample")
    y = np.asarray(truth, dtype=float)
    term1 = np.abs(x - y).mean(axis=0)
    w = 2.0 * np.arange(L) - L + 1.0
    # sum_{i,j} |x_i - x_j| = 2 sum_i (2i - L + 1) x_(i)
    term2 = (w[:, None] * x).sum(axis=0) / L**2
    return np.maximum(term1 - term2, 0.0)


def crps(samples: Sequence[float], truth: float) -> float:
    return float(crps_columns(np.asarray(samples, dtype=float), np.atleast_1d(truth))[0])


# ---------------------------------------------------------------- coverage


def family_draws(draws, family: str) -> np.ndarray:
    """(L x 2m) draws of a parameter family, condition A genes then condition B."""
    if family == "mu":
        return np.concatenate([draws.mu_a, draws.mu_a + draws.gamma], axis=1)
    if family == "alpha":
        return np.concatenate([draws.alpha[:, :, 0], draws.alpha[:, :, 1]], axis=1)
    raise ValueError(f"unknown parameter family {family!r}")


def family_truth(truth, family: str) -> np.ndarray:
    if family == "mu":
        return np.concatenate([truth.mu_a, truth.mu_a + truth.gamma])
    if family == "alpha":
        return np.concatenate([truth.alpha[:, 0], truth.alpha[:, 1]])
    raise ValueError(f"unknown parameter family {family!r}")


FAMILIES = ("mu", "alpha")


def interval_coverage(samples: np.ndarray, reference: np.ndarray, level: float) -> float:
    """Fraction of columns whose central ``level`` interval contains ``reference``."""
    if not 0.0 <= level <= 1.0:
        raise ValueError("level must lie in [0, 1]")
    lo, hi = np.quantile(samples, [0.5 - level / 2, 0.5 + level / 2], axis=0)
    ref = np.asarray(reference, dtype=float)
    return float(np.mean((lo <= ref) & (ref <= hi)))


@dataclass
class CoverageRow:
    label: str
    family: str
    level: float
    coverage: float
    n: int


def coverage_experiment(
    full_fit,
    subsample_fits: Mapping[str, object] | Sequence[object],
    level: float = 0.8,
    truth=None,
) -> list[CoverageRow]:
    """Coverage of central ``level`` intervals from each subsample fit.

    The reference value for each parameter is the full fit's posterior median,
    or the generating value when ``truth`` is given (``full_fit`` may then be None).
    """
    if not isinstance(subsample_fits, Mapping):
        subsample_fits = {str(i): f for i, f in enumerate(subsample_fits)}
    genes = tuple(truth.gene_ids) if truth is not None else tuple(full_fit.gene_ids)
    rows = []
    for label, fit in subsample_fits.items():
        if tuple(fit.gene_ids) != genes:
            raise ValueError(f"fit {label!r} has genes that do not align with the reference")
        for fam in FAMILIES:
            if truth is not None:
                ref = family_truth(truth, fam)
            else:
                ref = np.quantile(family_draws(full_fit, fam), 0.5, axis=0)
            rows.append(CoverageRow(label, fam, level, interval_coverage(family_draws(fit, fam), ref, level), len(ref)))
    return rows


# ---------------------------------------------------------------- ROC


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float


def roc(scores: Sequence[float], is_de: Sequence[bool], direction: str = "posterior") -> RocCurve:
    """ROC over every distinct threshold.

    ``direction="pvalue"`` calls genes with score < q; ``"posterior"`` calls
    genes with score > 1 - q.  Tied scores enter together, so the trapezoidal
    AUC equals the Mann-Whitney statistic with ties counted as one half.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(is_de).astype(bool)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and truth must be equal-length vectors")
    if np.isnan(s).any():
        raise ValueError("scores contain NaN")
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("truth needs at least one positive and one negative")
    if direction in ("pvalue", "pvalue-like"):
        key = -s
    elif direction in ("posterior", "posterior-like"):
        key = s
    else:
        raise ValueError(f"unknown direction {direction!r}")
    order = np.argsort(-key, kind="stable")
    ks, ys = key[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(ks) != 0), len(ks) - 1]
    tp = np.cumsum(ys)[last]
    fp = np.cumsum(~ys)[last]
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    thr = np.r_[np.inf, ks[last]]
    if direction.startswith("pvalue"):
        thr = -thr
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))
    return RocCurve(fpr, tpr, thr, auc)


def auc(scores, is_de, direction: str = "posterior") -> float:
    return roc(scores, is_de, direction).auc


# ---------------------------------------------------------------- frequentist baseline


def welch_pvalues(cm: CountMatrix, depths: SamplingDepths | None = None) -> np.ndarray:
    """Two-sided Welch t-test per gene on log((k + 0.5) / s).

    Genes with zero variance in both groups get p = 1 when the group means
    agree and p = 0 otherwise.
    """
    if cm.n_a < 2 or cm.n_b < 2:
        raise ValueError("the per-gene test needs at least two samples per condition")
    s = np.ones(cm.counts.shape[1]) if depths is None else np.asarray(depths.s, float)
    y = np.log((cm.counts + 0.5) / s)
    a, b = y[:, cm.is_a], y[:, ~cm.is_a]
    with np.errstate(invalid="ignore", divide="ignore"), warnings.catch_warnings():
        # near-constant groups trip scipy's precision warning; they are handled below
        warnings.simplefilter("ignore", RuntimeWarning)
        p = stats.ttest_ind(a, b, axis=1, equal_var=False).pvalue
    bad = ~np.isfinite(p)
    if bad.any():
        same = np.isclose(a.mean(1), b.mean(1), rtol=0, atol=1e-12)
        p = np.where(bad, np.where(same, 1.0, 0.0), p)
    return p


def fisher_overrepresentation(in_set_de: int, set_size: int, n_de: int, m: int) -> float:
    """One-sided Fisher exact p-value: P(X >= in_set_de), X hypergeometric."""
    return float(stats.hypergeom.sf(in_set_de - 1, m, n_de, set_size))


def ff_baseline(cm: CountMatrix, depths, collection, alpha_level: float = 0.05):
    """Per-gene test at ``alpha_level`` followed by Fisher's test per set.

    Returns (per-gene p-values, per-set p-values in collection order).
    """
    p_gene = welch_pvalues(cm, depths)
    called = p_gene < alpha_level
    if collection.universe != tuple(cm.gene_ids):
        collection = collection.resolve(cm.gene_ids)
    n_de = int(called.sum())
    p_set = np.array([
        fisher_overrepresentation(int(called[idx].sum()), len(idx), n_de, cm.m) for idx in collection.indices
    ])
    return p_gene, p_set


# ---------------------------------------------------------------- mixing table


@dataclass
class MixingRow:
    model: str
    minutes: float
    ess_per_min_alpha: float
    ess_per_min_mu: float
    crps_alpha: float
    crps_mu: float


def mixing_row(draws, truth, minutes: float | None = None) -> MixingRow:
    """Per-gene ESS per minute and CRPS against the generating values, averaged over genes."""
    minutes = draws.elapsed / 60.0 if minutes is None else minutes
    out = {}
    for fam in FAMILIES:
        x = family_draws(draws, fam)
        out[fam] = (float(ess_columns(x).mean()) / minutes, float(crps_columns(x, family_truth(truth, fam)).mean()))
    return MixingRow(draws.model, minutes, out["alpha"][0], out["mu"][0], out["alpha"][1], out["mu"][1])


def write_rows(rows: Sequence, path: str | Path) -> None:
    """Dataclass rows as a TSV with a header taken from the first row's fields."""
    rows = list(rows)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        if not rows:
            return
        names = list(vars(rows[0]))
        w.writerow(names)
        for r in rows:
            w.writerow([_fmt(getattr(r, n)) for n in names])


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v
