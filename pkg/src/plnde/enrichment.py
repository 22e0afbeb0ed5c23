"""Posterior gene-set enrichment from saved indicator draws.

A set S is called enriched in a snapshot when its DE proportion strictly
exceeds that of its complement; the enrichment probability is the fraction
of snapshots where this holds.  Equal proportions count as not enriched.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class GeneSetError(ValueError):
    pass


@dataclass
class GeneSetCollection:
    """Named gene sets resolved against a gene universe.

    ``unresolved`` maps set names to member ids missing from the universe;
    those ids are reported rather than silently dropped.
    """

    names: list[str]
    members: list[list[str]]
    universe: tuple[str, ...] = ()
    indices: list[np.ndarray] = field(default_factory=list)
    unresolved: dict[str, list[str]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.names)

    def resolve(self, gene_ids: Sequence[str]) -> GeneSetCollection:
        pos = {g: j for j, g in enumerate(gene_ids)}
        indices, unresolved = [], {}
        for name, mem in zip(self.names, self.members):
            miss = [g for g in mem if g not in pos]
            if miss:
                unresolved[name] = miss
            indices.append(np.array(sorted({pos[g] for g in mem if g in pos}), dtype=np.int64))
        return GeneSetCollection(list(self.names), [list(x) for x in self.members], tuple(gene_ids), indices, unresolved)

    def n_resolved(self, i: int) -> int:
        return len(self.indices[i])


def read_gmt(path: str | Path) -> GeneSetCollection:
    """One set per line: name, description, then member ids (tab separated)."""
    names, members = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise GeneSetError(f"{path}:{lineno}: expected name, description and members")
            if parts[0] in names:
                raise GeneSetError(f"{path}:{lineno}: duplicate set name {parts[0]!r}")
            names.append(parts[0])
            members.append([g for g in parts[2:] if g])
    return GeneSetCollection(names, members)


def _check_set(idx: np.ndarray, m: int) -> None:
    if len(idx) == 0:
        raise GeneSetError("gene set is empty after resolution")
    if len(idx) >= m:
        raise GeneSetError("gene set covers the whole gene universe; the complement is empty")


def enrichment_probability(indicator: np.ndarray, members: Sequence[int]) -> float:
    """Fraction of snapshots in which the in-set DE rate strictly exceeds the rest.

    ``indicator`` is (snapshots x genes); ``members`` are gene column indices.
    Compared as integers to avoid rounding ties: a/|S| > b/|S^c| iff a|S^c| > b|S|.
    """
    ind = np.asarray(indicator)
    if ind.ndim != 2 or ind.shape[0] == 0:
        raise GeneSetError("need a non-empty (snapshots x genes) indicator array")
    m = ind.shape[1]
    idx = np.unique(np.asarray(members, dtype=np.int64))
    _check_set(idx, m)
    in_set = ind[:, idx].sum(axis=1, dtype=np.int64)
    out_set = ind.sum(axis=1, dtype=np.int64) - in_set
    n_in, n_out = len(idx), m - len(idx)
    return float(np.mean(in_set * n_out > out_set * n_in))


@dataclass
class EnrichmentRow:
    name: str
    size: int
    n_resolved: int
    probability: float
    mean_de_count: float


def enrich_all(draws, collection: GeneSetCollection, threads: int = 1) -> list[EnrichmentRow]:
    """One row per set, in collection order.  ``draws`` is PosteriorDraws or an indicator array."""
    ind = np.asarray(getattr(draws, "indicator", draws))
    genes = getattr(draws, "gene_ids", None)
    if genes is not None and collection.universe != tuple(genes):
        collection = collection.resolve(genes)
    elif not collection.indices and len(collection):
        raise GeneSetError("collection must be resolved against the draws' genes")

    def one(i):
        idx = collection.indices[i]
        p = enrichment_probability(ind, idx)
        return EnrichmentRow(
            collection.names[i], len(collection.members[i]), len(idx), p, float(ind[:, idx].sum(1).mean())
        )

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, range(len(collection))))
    return [one(i) for i in range(len(collection))]


ENRICHMENT_COLUMNS = ("set", "size", "n_resolved", "posterior_enrichment_probability", "mean_de_count")


def write_enrichment(rows: Sequence[EnrichmentRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(ENRICHMENT_COLUMNS)
        for r in rows:
            w.writerow([r.name, r.size, r.n_resolved, repr(r.probability), repr(r.mean_de_count)])
