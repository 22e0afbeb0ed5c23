"""Count-matrix types, ingestion, low-count filtering and sampling depths."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

CONDITIONS = ("A", "B")


class CountMatrixError(ValueError):
    """Raised for malformed or inconsistent count data."""


@dataclass(frozen=True)
class CountMatrix:
    """Integer read counts, genes in rows, samples in columns.

    ``condition`` holds one label per column, each ``"A"`` or ``"B"``.
    """

    counts: np.ndarray
    gene_ids: tuple[str, ...]
    condition: tuple[str, ...]
    sample_ids: tuple[str, ...] = ()

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2:
            raise CountMatrixError(f"counts must be 2-d, got shape {counts.shape}")
        if not np.issubdtype(counts.dtype, np.integer):
            raise CountMatrixError("counts must be integers")
        counts = counts.astype(np.int64, copy=True)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "gene_ids", tuple(str(g) for g in self.gene_ids))
        object.__setattr__(self, "condition", tuple(str(c) for c in self.condition))
        if not self.sample_ids:
            object.__setattr__(self, "sample_ids", tuple(f"s{i + 1}" for i in range(counts.shape[1])))
        else:
            object.__setattr__(self, "sample_ids", tuple(str(s) for s in self.sample_ids))

        m, n = counts.shape
        if len(self.gene_ids) != m:
            raise CountMatrixError(f"{len(self.gene_ids)} gene ids for {m} rows")
        if len(self.condition) != n:
            raise CountMatrixError(f"{len(self.condition)} condition labels for {n} count columns")
        if len(self.sample_ids) != n:
            raise CountMatrixError(f"{len(self.sample_ids)} sample ids for {n} count columns")
        bad = [c for c in self.condition if c not in CONDITIONS]
        if bad:
            raise CountMatrixError(f"condition labels must be A or B, got {bad[0]!r}")
        for c in CONDITIONS:
            if c not in self.condition:
                raise CountMatrixError(f"no samples in condition {c}")
        if counts.size and counts.min() < 0:
            j, i = np.argwhere(counts < 0)[0]
            raise CountMatrixError(f"negative count {counts[j, i]} at gene {self.gene_ids[j]!r}, column {i + 1}")
        _check_unique(self.gene_ids)

    @property
    def m(self) -> int:
        return self.counts.shape[0]

    @property
    def is_a(self) -> np.ndarray:
        return np.array([c == "A" for c in self.condition])

    @property
    def n_a(self) -> int:
        return int(self.is_a.sum())

    @property
    def n_b(self) -> int:
        return len(self.condition) - self.n_a

    def grouped(self) -> CountMatrix:
        """Same data with columns reordered so all A samples come first."""
        order = np.concatenate([np.flatnonzero(self.is_a), np.flatnonzero(~self.is_a)])
        return self.select_samples(order)

    def select_samples(self, idx: Sequence[int]) -> CountMatrix:
        idx = list(idx)
        return CountMatrix(
            self.counts[:, idx],
            self.gene_ids,
            tuple(self.condition[i] for i in idx),
            tuple(self.sample_ids[i] for i in idx),
        )

    def select_genes(self, mask: np.ndarray) -> CountMatrix:
        mask = np.asarray(mask, dtype=bool)
        ids = tuple(g for g, keep in zip(self.gene_ids, mask) if keep)
        return CountMatrix(self.counts[mask], ids, self.condition, self.sample_ids)


def _check_unique(ids: Sequence[str]) -> None:
    seen: dict[str, int] = {}
    for row, g in enumerate(ids):
        if g in seen:
            raise CountMatrixError(f"duplicate gene id {g!r} at rows {seen[g] + 1} and {row + 1}")
        seen[g] = row


@dataclass(frozen=True)
class SamplingDepths:
    s: np.ndarray
    sample_ids: tuple[str, ...] = ()

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        if s.ndim != 1 or not np.all(np.isfinite(s)) or np.any(s <= 0):
            raise ValueError("sampling depths must be a finite, strictly positive vector")
        s = s.copy()
        s.setflags(write=False)
        object.__setattr__(self, "s", s)


@dataclass(frozen=True)
class FilterPolicy:
    """Genes whose total count is <= ``min_total_count`` are dropped."""

    min_total_count: int = 5

    def __post_init__(self):
        if self.min_total_count < 0:
            raise ValueError("min_total_count must be non-negative")


@dataclass
class ChainState:
    """All latent variables and hyperparameters of one chain.

    ``lam`` is genes x samples with columns ordered A then B; ``alpha`` is
    genes x 2 (condition A, condition B).
    """

    lam: np.ndarray
    mu_a: np.ndarray
    gamma: np.ndarray
    indicator: np.ndarray
    alpha: np.ndarray
    pi: float
    sigma_gamma_sq: float
    psi0: float
    tau_sq: float
    extra: dict = field(default_factory=dict)

    def copy(self) -> ChainState:
        return ChainState(
            self.lam.copy(order="K"),
            self.mu_a.copy(),
            self.gamma.copy(),
            self.indicator.copy(),
            self.alpha.copy(order="K"),
            float(self.pi),
            float(self.sigma_gamma_sq),
            float(self.psi0),
            float(self.tau_sq),
            {k: np.copy(v) for k, v in self.extra.items()},
        )

    def check(self) -> None:
        if np.any((self.gamma != 0) != (self.indicator != 0)):
            raise ValueError("gamma must be zero exactly when the indicator is zero")
        if not (self.sigma_gamma_sq > 0 and self.tau_sq > 0 and 0 < self.pi < 1):
            raise ValueError("hyperparameters out of range")


# -- ingestion ---------------------------------------------------------------


def parse_labels(spec: str | Path, sample_ids: Sequence[str]) -> tuple[str, ...]:
    """Resolve condition labels from a ``sample<TAB>condition`` file or a comma list."""
    path = Path(str(spec))
    if path.is_file():
        mapping: dict[str, str] = {}
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh, delimiter="\t"), start=1):
                if not row or row[0].startswith("#"):
                    continue
                if len(row) < 2:
                    raise CountMatrixError(f"{path}:{lineno}: expected sample<TAB>condition")
                if lineno == 1 and row[0].lower() == "sample" and row[1].lower() == "condition":
                    continue
                mapping[row[0]] = row[1].strip()
        missing = [s for s in sample_ids if s not in mapping]
        if missing:
            raise CountMatrixError(f"no condition label for sample(s) {missing}")
        if len(mapping) != len(sample_ids):
            extra = sorted(set(mapping) - set(sample_ids))
            raise CountMatrixError(f"labels file names unknown sample(s) {extra}")
        return tuple(mapping[s] for s in sample_ids)
    labels = tuple(x.strip() for x in str(spec).split(",") if x.strip())
    if len(labels) != len(sample_ids):
        raise CountMatrixError(f"{len(labels)} labels given for {len(sample_ids)} count columns")
    return labels


def load_counts(path: str | Path, labels: str | Path | Sequence[str]) -> CountMatrix:
    """Read a tab-separated count table.

    The header is ``gene<TAB>sample1...``; every further row is a gene id
    followed by non-negative integer counts. ``labels`` is either a sequence
    of A/B labels, a comma-separated string, or a two-column labels file.
    """
    path = Path(path)
    gene_ids: list[str] = []
    rows: list[list[int]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        try:
            header = next(reader)
        except StopIteration:
            raise CountMatrixError(f"{path}: empty file") from None
        if len(header) < 2:
            raise CountMatrixError(f"{path}:1: header needs a gene column and at least one sample")
        sample_ids = header[1:]
        width = len(header)
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != width:
                raise CountMatrixError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
            vals = []
            for col, cell in enumerate(row[1:], start=2):
                try:
                    v = int(cell)
                except ValueError:
                    raise CountMatrixError(
                        f"{path}:{lineno}: column {col}: non-integer count {cell!r}"
                    ) from None
                if v < 0:
                    raise CountMatrixError(f"{path}:{lineno}: column {col}: negative count {v}")
                vals.append(v)
            gene_ids.append(row[0])
            rows.append(vals)
    _check_unique(gene_ids)
    if isinstance(labels, (str, Path)):
        cond = parse_labels(labels, sample_ids)
    else:
        cond = tuple(labels)
        if len(cond) != len(sample_ids):
            raise CountMatrixError(f"{len(cond)} labels given for {len(sample_ids)} count columns")
    counts = np.array(rows, dtype=np.int64).reshape(len(rows), len(sample_ids))
    return CountMatrix(counts, gene_ids, cond, sample_ids)


def write_counts(cm: CountMatrix, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["gene", *cm.sample_ids])
        for g, row in zip(cm.gene_ids, cm.counts):
            w.writerow([g, *map(int, row)])


def write_labels(cm: CountMatrix, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["sample", "condition"])
        w.writerows(zip(cm.sample_ids, cm.condition))


def filter_low_counts(cm: CountMatrix, policy: FilterPolicy = FilterPolicy()) -> tuple[CountMatrix, list[str]]:
    totals = cm.counts.sum(axis=1)
    keep = totals > policy.min_total_count
    if not keep.any():
        raise CountMatrixError(
            f"all {cm.m} genes have total count <= {policy.min_total_count}; nothing left to analyse"
        )
    removed = [g for g, k in zip(cm.gene_ids, keep) if not k]
    return cm.select_genes(keep), removed


def estimate_depths(cm: CountMatrix) -> SamplingDepths:
    """Median-of-ratios sampling depths, rescaled to geometric mean one.

    Only genes with strictly positive counts in every sample enter the
    reference; each sample's depth is the median over those genes of
    count / geometric-mean count.
    """
    counts = cm.counts
    positive = np.all(counts > 0, axis=1)
    if not positive.any():
        raise CountMatrixError(
            "no gene has positive counts in every sample; "
            "filter low-count genes more strongly before estimating depths"
        )
    logk = np.log(counts[positive].astype(float))
    log_ref = logk.mean(axis=1, keepdims=True)
    log_s = np.median(logk - log_ref, axis=0)
    log_s -= log_s.mean()
    return SamplingDepths(np.exp(log_s), cm.sample_ids)


def write_depths(depths: SamplingDepths, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["sample", "depth"])
        ids = depths.sample_ids or tuple(f"s{i + 1}" for i in range(len(depths.s)))
        for sid, s in zip(ids, depths.s):
            w.writerow([sid, repr(float(s))])


def read_depths(path: str | Path) -> SamplingDepths:
    ids, vals = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        next(reader)
        for row in reader:
            if row:
                ids.append(row[0])
                vals.append(float(row[1]))
    return SamplingDepths(np.array(vals), tuple(ids))
