"""Writers and readers for fit outputs and run manifests."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .draws import PosteriorDraws

SUMMARY_COLUMNS = (
    "gene_id",
    "p_de",
    "gamma_mean",
    "gamma_median",
    "gamma_q2.5",
    "gamma_q25",
    "gamma_q75",
    "gamma_q97.5",
    "alpha_a_median",
    "alpha_b_median",
)
HYPER_COLUMNS = ("pi", "sigma_gamma_sq", "psi0", "tau_sq")
GENE_FIELDS = ("mu_a", "gamma", "I", "alpha_a", "alpha_b")


def _num(x: float) -> str:
    return repr(float(x))


def write_summary(draws: PosteriorDraws, path: str | Path) -> None:
    summ = draws.gene_summary()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for j, g in enumerate(draws.gene_ids):
            w.writerow([g] + [_num(summ[c][j]) for c in SUMMARY_COLUMNS[1:]])


def read_summary(path: str | Path) -> dict[str, np.ndarray | tuple]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh, delimiter="\t"))
    out: dict = {"gene_id": tuple(r["gene_id"] for r in rows)}
    for c in SUMMARY_COLUMNS[1:]:
        out[c] = np.array([float(r[c]) for r in rows])
    return out


def draws_columns(gene_ids: Sequence[str]) -> list[str]:
    cols = list(HYPER_COLUMNS)
    for g in gene_ids:
        cols.extend(f"{f}[{g}]" for f in GENE_FIELDS)
    return cols


def write_draws(draws: PosteriorDraws, path: str | Path) -> None:
    """One row per snapshot: hyperparameters, then (mu_a, gamma, I, alpha_a, alpha_b) per gene.

    Lines starting with ``#`` hold the model name; the next line names every column.
    """
    L, m = draws.n_draws, draws.m
    block = np.empty((L, m, len(GENE_FIELDS)))
    block[:, :, 0] = draws.mu_a
    block[:, :, 1] = draws.gamma
    block[:, :, 2] = draws.indicator
    block[:, :, 3:] = draws.alpha
    table = np.column_stack([draws.pi, draws.sigma_gamma_sq, draws.psi0, draws.tau_sq, block.reshape(L, -1)])
    with open(path, "w") as fh:
        fh.write(f"# model={draws.model}\n")
        fh.write("\t".join(draws_columns(draws.gene_ids)) + "\n")
        for row in table:
            fh.write("\t".join(_num(v) for v in row) + "\n")


def read_draws(path: str | Path) -> PosteriorDraws:
    model = "lognormal"
    with open(path) as fh:
        line = fh.readline()
        while line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            if key.strip() == "model":
                model = val.strip()
            line = fh.readline()
        header = line.rstrip("\n").split("\t")
        rows = [ln.rstrip("\n").split("\t") for ln in fh if ln.strip()]
    if tuple(header[:4]) != HYPER_COLUMNS or (len(header) - 4) % len(GENE_FIELDS):
        raise ValueError(f"{path}: not a draws file (unexpected header)")
    gene_ids = tuple(h[len("mu_a[") : -1] for h in header[4 :: len(GENE_FIELDS)])
    if header != draws_columns(gene_ids):
        raise ValueError(f"{path}: malformed draws header")
    table = np.array(rows, dtype=float).reshape(len(rows), len(header))
    m = len(gene_ids)
    block = table[:, 4:].reshape(len(rows), m, len(GENE_FIELDS))
    return PosteriorDraws(
        gene_ids=gene_ids,
        model=model,
        mu_a=block[:, :, 0].copy(),
        gamma=block[:, :, 1].copy(),
        indicator=block[:, :, 2].astype(np.int8),
        alpha=block[:, :, 3:].copy(),
        pi=table[:, 0].copy(),
        sigma_gamma_sq=table[:, 1].copy(),
        psi0=table[:, 2].copy(),
        tau_sq=table[:, 3].copy(),
    )


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path: str | Path, command: str, argv: Sequence[str], config: dict, inputs: dict, **extra) -> dict:
    """JSON run record: command, full configuration, input digests and run facts."""
    info = {
        "command": command,
        "argv": list(argv),
        "version": __version__,
        "config": config,
        "seed": config.get("seed"),
        "inputs": {k: {"path": str(v), "sha256": file_digest(v)} for k, v in inputs.items() if v is not None},
        **extra,
    }
    Path(path).write_text(json.dumps(info, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return info


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(f"cannot serialise {type(v).__name__}")
