"""Synthetic count data with known truth.

Two generators: an enrichment-structured design (genes grouped in sets, a
fraction of which carry a high DE rate) and a flat design without sets used
for sampler comparisons.  Depths are 1 unless ``depth_jitter_sd`` is set.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .model import CountMatrix

GENERATIVE_MODELS = ("lognormal", "negbinom")


@dataclass(frozen=True)
class SimulationDesign:
    """Set-structured design.  Defaults reproduce the 5000-gene study."""

    m: int = 5000
    n_a: int = 2
    n_b: int = 2
    set_size: int = 20
    n_sets: int = 250
    frac_enriched: float = 0.1
    p_de_null: float = 0.1
    p_de_enriched: float = 0.75
    psi0: float = -3.0
    tau: float = 0.8
    # log2(1.5) used as a natural-log-scale standard deviation, as stated
    sigma_gamma: float = math.log2(1.5)
    set_mean_loc: float = 5.0
    set_mean_sd: float = 1.0
    within_set_sd: float = 0.5
    depth_jitter_sd: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.set_size * self.n_sets != self.m:
            raise ValueError(f"set_size * n_sets = {self.set_size * self.n_sets} != m = {self.m}")
        if self.n_a < 1 or self.n_b < 1:
            raise ValueError("need at least one sample per condition")
        for name in ("frac_enriched", "p_de_null", "p_de_enriched"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        for name in ("tau", "sigma_gamma", "set_mean_sd", "within_set_sd"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def n_enriched(self) -> int:
        return int(round(self.frac_enriched * self.n_sets))

    def scaled(self, n_sets: int, **changes) -> SimulationDesign:
        """Same design with ``n_sets`` sets (and ``m`` adjusted to match)."""
        d = asdict(self) | {"n_sets": n_sets, "m": n_sets * self.set_size} | changes
        return SimulationDesign(**d)


@dataclass
class GroundTruth:
    """Per-gene generating values; ``alpha`` is (m x 2) with condition A first.

    ``set_id`` is -1 for every gene in a flat design, in which case
    ``set_enriched`` is empty.
    """

    gene_ids: tuple[str, ...]
    indicator: np.ndarray
    gamma: np.ndarray
    mu_a: np.ndarray
    alpha: np.ndarray
    set_id: np.ndarray
    set_enriched: np.ndarray
    depths: np.ndarray
    flags: list[str] = field(default_factory=list)

    @property
    def m(self) -> int:
        return len(self.gene_ids)

    def set_members(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for g, s in zip(self.gene_ids, self.set_id):
            if s >= 0:
                out.setdefault(set_name(int(s)), []).append(g)
        return out


def set_name(l: int) -> str:
    return f"set{l + 1:04d}"


def _gene_ids(m: int) -> tuple[str, ...]:
    width = max(5, len(str(m)))
    return tuple(f"g{j + 1:0{width}d}" for j in range(m))


def _sample_layout(n_a: int, n_b: int):
    condition = ("A",) * n_a + ("B",) * n_b
    sample_ids = tuple(f"A{i + 1}" for i in range(n_a)) + tuple(f"B{i + 1}" for i in range(n_b))
    return condition, sample_ids


def _draw_counts(rng, mu_a, gamma, alpha, depths, n_a, model):
    """Counts for every gene and sample given the gene-level truth."""
    m = len(mu_a)
    n = len(depths)
    is_b = np.arange(n) >= n_a
    mean_log = mu_a[:, None] + np.where(is_b, gamma[:, None], 0.0)
    alpha_col = np.where(is_b, alpha[:, 1:2], alpha[:, 0:1])
    if model == "lognormal":
        lam = mean_log + np.exp(0.5 * alpha_col) * rng.standard_normal((m, n))
        rate = depths * np.exp(lam)
    else:
        # gamma rate with mean e^mu and squared CV e^alpha
        shape = np.exp(-alpha_col)
        rate = depths * rng.gamma(shape, np.exp(mean_log) / shape)
    return rng.poisson(rate).astype(np.int64)


def _draw_depths(rng, n, jitter_sd):
    if jitter_sd <= 0:
        return np.ones(n)
    d = np.exp(jitter_sd * rng.standard_normal(n))
    return d / np.exp(np.mean(np.log(d)))


def simulate_dataset(design: SimulationDesign) -> tuple[CountMatrix, GroundTruth]:
    """Draw one dataset from the set-structured lognormal design."""
    rng = np.random.default_rng(design.seed)
    L, size = design.n_sets, design.set_size
    enriched = np.zeros(L, bool)
    enriched[rng.choice(L, design.n_enriched, replace=False)] = True
    set_id = np.repeat(np.arange(L), size)

    set_mean = design.set_mean_loc + design.set_mean_sd * rng.standard_normal(L)
    mu_a = set_mean[set_id] + design.within_set_sd * rng.standard_normal(design.m)
    p_de = np.where(enriched[set_id], design.p_de_enriched, design.p_de_null)
    ind = rng.random(design.m) < p_de
    gamma = np.where(ind, design.sigma_gamma * rng.standard_normal(design.m), 0.0)
    alpha = design.psi0 + design.tau * rng.standard_normal((design.m, 2))
    depths = _draw_depths(rng, design.n_a + design.n_b, design.depth_jitter_sd)
    counts = _draw_counts(rng, mu_a, gamma, alpha, depths, design.n_a, "lognormal")

    genes = _gene_ids(design.m)
    condition, sample_ids = _sample_layout(design.n_a, design.n_b)
    cm = CountMatrix(counts, genes, condition, sample_ids)
    truth = GroundTruth(genes, ind.astype(np.int8), gamma, mu_a, alpha, set_id, enriched, depths)
    return cm, truth


@dataclass(frozen=True)
class FlatDesign:
    """Set-free design for sampler comparisons.

    ``pi0`` is the per-gene DE probability.  Baseline log expression is drawn
    from N(mu_loc, mu_sd^2).
    """

    m: int = 1000
    n: int = 2
    pi0: float = 0.5
    psi0: float = -3.0
    sigma_gamma: float = 0.8
    tau: float = 0.8
    mu_loc: float = 5.0
    mu_sd: float = 1.0
    depth_jitter_sd: float = 0.0
    seed: int = 0
    model: str = "lognormal"

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError("need m >= 1 and n >= 1")
        if not 0.0 <= self.pi0 <= 1.0:
            raise ValueError("pi0 must lie in [0, 1]")
        if self.model not in GENERATIVE_MODELS:
            raise ValueError(f"model must be one of {GENERATIVE_MODELS}")
        if self.tau < 0 or self.sigma_gamma < 0 or self.mu_sd < 0:
            raise ValueError("scale parameters must be non-negative")


def simulate_flat(
    m: int = 1000,
    n: int = 2,
    pi0: float = 0.5,
    psi0: float = -3.0,
    sigma_gamma: float = 0.8,
    tau: float = 0.8,
    seed: int = 0,
    model: str = "lognormal",
    **kwargs,
) -> tuple[CountMatrix, GroundTruth]:
    """Flat design with ``n`` samples per condition from either data model."""
    return simulate_flat_design(FlatDesign(m, n, pi0, psi0, sigma_gamma, tau, seed=seed, model=model, **kwargs))


def simulate_flat_design(design: FlatDesign) -> tuple[CountMatrix, GroundTruth]:
    rng = np.random.default_rng(design.seed)
    m, n = design.m, design.n
    mu_a = design.mu_loc + design.mu_sd * rng.standard_normal(m)
    ind = rng.random(m) < design.pi0
    gamma = np.where(ind, design.sigma_gamma * rng.standard_normal(m), 0.0)
    alpha = design.psi0 + design.tau * rng.standard_normal((m, 2))
    depths = _draw_depths(rng, 2 * n, design.depth_jitter_sd)
    counts = _draw_counts(rng, mu_a, gamma, alpha, depths, n, design.model)

    genes = _gene_ids(m)
    condition, sample_ids = _sample_layout(n, n)
    cm = CountMatrix(counts, genes, condition, sample_ids)
    flags = ["single-sample-groups"] if n == 1 else []
    truth = GroundTruth(
        genes, ind.astype(np.int8), gamma, mu_a, alpha, np.full(m, -1), np.zeros(0, bool), depths, flags
    )
    return cm, truth


TRUTH_COLUMNS = ("gene_id", "set_id", "enriched", "I", "gamma", "mu_a", "alpha_a", "alpha_b")


def write_truth(truth: GroundTruth, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(TRUTH_COLUMNS)
        for j, g in enumerate(truth.gene_ids):
            s = int(truth.set_id[j])
            w.writerow([
                g,
                set_name(s) if s >= 0 else "",
                int(truth.set_enriched[s]) if s >= 0 else "",
                int(truth.indicator[j]),
                repr(float(truth.gamma[j])),
                repr(float(truth.mu_a[j])),
                repr(float(truth.alpha[j, 0])),
                repr(float(truth.alpha[j, 1])),
            ])


def read_truth(path: str | Path) -> GroundTruth:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh, delimiter="\t"))
    if not rows:
        raise ValueError(f"{path}: empty truth file")
    missing = set(TRUTH_COLUMNS) - set(rows[0])
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    names = sorted({r["set_id"] for r in rows if r["set_id"]})
    index = {s: i for i, s in enumerate(names)}
    enriched = np.zeros(len(names), bool)
    for r in rows:
        if r["set_id"]:
            enriched[index[r["set_id"]]] = r["enriched"] == "1"
    return GroundTruth(
        gene_ids=tuple(r["gene_id"] for r in rows),
        indicator=np.array([int(r["I"]) for r in rows], np.int8),
        gamma=np.array([float(r["gamma"]) for r in rows]),
        mu_a=np.array([float(r["mu_a"]) for r in rows]),
        alpha=np.array([[float(r["alpha_a"]), float(r["alpha_b"])] for r in rows]),
        set_id=np.array([index[r["set_id"]] if r["set_id"] else -1 for r in rows]),
        set_enriched=enriched,
        depths=np.zeros(0),
    )


def write_gmt(truth: GroundTruth, path: str | Path) -> None:
    """The simulated sets as a GMT file (name, description, members)."""
    with open(path, "w") as fh:
        for name, members in truth.set_members().items():
            fh.write("\t".join([name, "simulated"] + members) + "\n")


def write_design(design, truth: GroundTruth, path: str | Path) -> None:
    info = {"design": type(design).__name__, **asdict(design), "flags": truth.flags, "depths": truth.depths.tolist()}
    Path(path).write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")
