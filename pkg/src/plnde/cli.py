"""Command-line front end: fit, simulate, enrich, evaluate, normalize.

Every command writes its outputs plus ``manifest.json`` into ``--out``.
Options are resolved as command-line flags, then a ``--config`` JSON file
(a previous run's manifest works too), then built-in defaults.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import (
    CoverageRow,
    coverage_experiment,
    mixing_row,
    roc,
    welch_pvalues,
    write_rows,
)
from .draws import SamplerConfig
from .enrichment import GeneSetError, enrich_all, read_gmt, write_enrichment
from .lognormal import run_chain
from .model import (
    CountMatrixError,
    FilterPolicy,
    SamplingDepths,
    estimate_depths,
    filter_low_counts,
    load_counts,
    read_depths,
    write_counts,
    write_depths,
    write_labels,
)
from .negbinom import DEFAULT_FIXED_TAU, FreeTauError
from .results import read_draws, read_summary, write_draws, write_manifest, write_summary
from .simulation import (
    FlatDesign,
    GroundTruth,
    SimulationDesign,
    read_truth,
    set_name,
    simulate_dataset,
    simulate_flat_design,
    write_design,
    write_gmt,
    write_truth,
)

THREADS_ENV = "PLNDE_THREADS"
DESIGNS = ("sets", "flat")


class UsageError(Exception):
    pass


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


# defaults per command; flags default to None so that "not given" is visible
FIT_DEFAULTS = {
    "counts": None,
    "labels": None,
    "depths": None,
    "min_count": FilterPolicy().min_total_count,
    "save_draws": False,
    "progress_every": 1000,
    **{k: v for k, v in asdict(SamplerConfig()).items() if k != "threads"},
}
SIM_DEFAULTS = {"design": None, "seed": 0, "n": None, "m": None, "n_sets": None, "model": "lognormal", "pi0": None}


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read config {path}: {e}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    return data.get("config", data)


def _resolve(args, defaults: dict) -> dict:
    cfg = dict(defaults)
    from_file = _load_config(getattr(args, "config", None))
    unknown = set(from_file) - set(defaults)
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    cfg.update(from_file)
    for k in defaults:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    return cfg


def _progress(every: int, quiet: bool):
    if quiet or every <= 0:
        return None

    def report(it, total):
        if it % every == 0 or it == total:
            print(f"iteration {it}/{total}", file=sys.stderr, flush=True)

    return report


def _out_dir(path) -> Path:
    if path is None:
        raise UsageError("--out is required")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- fit


def _align_depths(depths: SamplingDepths, sample_ids) -> SamplingDepths:
    pos = {s: i for i, s in enumerate(depths.sample_ids)}
    missing = [s for s in sample_ids if s not in pos]
    if missing:
        raise UsageError(f"depths file lacks sample(s) {missing}")
    return SamplingDepths(np.array([depths.s[pos[s]] for s in sample_ids]), tuple(sample_ids))


def _block_acceptance(draws, block_size: int) -> dict:
    out = {}
    for name, rates in draws.acceptance.items():
        rows = rates.reshape(rates.shape[0], -1).mean(axis=1)
        out[name] = [float(rows[b : b + block_size].mean()) for b in range(0, len(rows), block_size)]
    return out


def cmd_fit(args) -> int:
    cfg = _resolve(args, FIT_DEFAULTS)
    if cfg["counts"] is None or cfg["labels"] is None:
        raise UsageError("fit needs --counts and --labels (or a config providing them)")
    threads = args.threads if args.threads is not None else default_threads()
    sampler_keys = set(asdict(SamplerConfig())) - {"threads"}
    sc = SamplerConfig(threads=threads, **{k: cfg[k] for k in sampler_keys})
    if sc.model == "negbinom" and sc.fix_tau is None and not sc.allow_free_tau:
        raise FreeTauError(
            "refusing to fit the negative-binomial model with a free tau: its dispersion "
            "hyperparameter diverges and the chain does not converge; pass --fix-tau "
            f"(default value {DEFAULT_FIXED_TAU}) or --allow-free-tau"
        )
    out = _out_dir(args.out)
    start = time.perf_counter()

    cm = load_counts(cfg["counts"], cfg["labels"])
    cm, removed = filter_low_counts(cm, FilterPolicy(cfg["min_count"]))
    if cfg["depths"] is not None:
        depths = _align_depths(read_depths(cfg["depths"]), cm.sample_ids)
    else:
        depths = estimate_depths(cm)
    write_depths(depths, out / "depths.tsv")
    (out / "filtered_genes.txt").write_text("".join(g + "\n" for g in removed))

    draws = run_chain(cm, depths, sc, progress=_progress(cfg["progress_every"], args.quiet))
    write_summary(draws, out / "summary.tsv")
    if cfg["save_draws"]:
        write_draws(draws, out / "draws.tsv")

    labels_input = cfg["labels"] if Path(str(cfg["labels"])).is_file() else None
    write_manifest(
        out / "manifest.json",
        "fit",
        args.argv,
        cfg,
        {"counts": cfg["counts"], "labels": labels_input, "depths": cfg["depths"]},
        model=sc.model,
        threads=threads,
        block_size=sc.block_size,
        n_genes=cm.m,
        n_filtered=len(removed),
        n_snapshots=draws.n_draws,
        elapsed_seconds=draws.elapsed,
        wall_seconds=time.perf_counter() - start,
        acceptance=draws.acceptance_summary(),
        block_acceptance=_block_acceptance(draws, sc.block_size),
    )
    return 0


# ---------------------------------------------------------------- simulate


def cmd_simulate(args) -> int:
    cfg = _resolve(args, SIM_DEFAULTS)
    design_name = cfg["design"]
    if design_name not in DESIGNS:
        raise UsageError(f"unknown design {design_name!r}; choose one of: {', '.join(DESIGNS)}")
    out = _out_dir(args.out)
    start = time.perf_counter()
    if design_name == "sets":
        design = SimulationDesign(seed=cfg["seed"])
        if cfg["n_sets"] is not None:
            design = design.scaled(cfg["n_sets"])
        if cfg["n"] is not None:
            design = SimulationDesign(**(asdict(design) | {"n_a": cfg["n"], "n_b": cfg["n"]}))
        cm, truth = simulate_dataset(design)
    else:
        kw = {"seed": cfg["seed"], "model": cfg["model"]}
        for k in ("n", "m", "pi0"):
            if cfg[k] is not None:
                kw[k] = cfg[k]
        design = FlatDesign(**kw)
        cm, truth = simulate_flat_design(design)
    write_counts(cm, out / "counts.tsv")
    write_labels(cm, out / "labels.tsv")
    write_truth(truth, out / "truth.tsv")
    write_design(design, truth, out / "design.json")
    if truth.set_enriched.size:
        write_gmt(truth, out / "sets.gmt")
    for flag in truth.flags:
        print(f"note: {flag}", file=sys.stderr)
    write_manifest(
        out / "manifest.json", "simulate", args.argv, cfg, {}, design=asdict(design), flags=truth.flags,
        wall_seconds=time.perf_counter() - start,
    )
    return 0


# ---------------------------------------------------------------- enrich


def cmd_enrich(args) -> int:
    out = _out_dir(args.out)
    draws = read_draws(args.draws)
    collection = read_gmt(args.sets).resolve(draws.gene_ids)
    for name, miss in collection.unresolved.items():
        print(f"warning: set {name}: {len(miss)} of {len(collection.members[collection.names.index(name)])} "
              f"ids not in the draws: {', '.join(miss[:5])}{' ...' if len(miss) > 5 else ''}", file=sys.stderr)
    threads = args.threads if args.threads is not None else default_threads()
    rows = enrich_all(draws, collection, threads=threads)
    write_enrichment(rows, out / "enrichment.tsv")
    write_manifest(
        out / "manifest.json", "enrich", args.argv, {"threads": threads}, {"draws": args.draws, "sets": args.sets},
        n_sets=len(rows), unresolved={k: len(v) for k, v in collection.unresolved.items()},
    )
    return 0


# ---------------------------------------------------------------- evaluate


def _read_enrichment(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh, delimiter="\t"))
    return {r["set"]: float(r["posterior_enrichment_probability"]) for r in rows}


def _align_to(truth, gene_ids):
    pos = {g: j for j, g in enumerate(truth.gene_ids)}
    missing = [g for g in gene_ids if g not in pos]
    if missing:
        raise UsageError(f"{len(missing)} fitted genes missing from the truth file (e.g. {missing[0]})")
    return np.array([pos[g] for g in gene_ids])


def _subset_truth(truth, idx):
    return GroundTruth(
        tuple(truth.gene_ids[j] for j in idx), truth.indicator[idx], truth.gamma[idx], truth.mu_a[idx],
        truth.alpha[idx], truth.set_id[idx], truth.set_enriched, truth.depths,
    )


def _fit_minutes(draws_path) -> float | None:
    man = Path(draws_path).with_name("manifest.json")
    if man.is_file():
        secs = json.loads(man.read_text()).get("elapsed_seconds")
        if secs:
            return secs / 60.0
    return None


def cmd_evaluate(args) -> int:
    if args.truth is None or not Path(args.truth).is_file():
        raise UsageError(f"ground-truth file not found: {args.truth}")
    out = _out_dir(args.out)
    truth = read_truth(args.truth)
    auc_rows, roc_points = [], []

    def add_roc(label, scores, labels, direction):
        curve = roc(scores, labels, direction)
        auc_rows.append({"curve": label, "auc": curve.auc, "n": len(labels)})
        roc_points.extend({"curve": label, "fpr": f, "tpr": t} for f, t in zip(curve.fpr, curve.tpr))

    if args.summary:
        summ = read_summary(args.summary)
        idx = _align_to(truth, summ["gene_id"])
        add_roc("gene:posterior", summ["p_de"], truth.indicator[idx].astype(bool), "posterior")
    if args.counts:
        if not args.labels:
            raise UsageError("--counts needs --labels")
        cm = load_counts(args.counts, args.labels)
        idx = _align_to(truth, cm.gene_ids)
        add_roc("gene:welch", welch_pvalues(cm, estimate_depths(cm)), truth.indicator[idx].astype(bool), "pvalue")
    if args.enrichment:
        probs = _read_enrichment(args.enrichment)
        names = sorted(probs)
        enriched = {set_name(i): bool(e) for i, e in enumerate(truth.set_enriched)}
        missing = [n for n in names if n not in enriched]
        if missing:
            raise UsageError(f"sets not in the truth file: {missing[:5]}")
        add_roc("set:posterior", [probs[n] for n in names], [enriched[n] for n in names], "posterior")

    coverage: list[CoverageRow] = []
    mixing = []
    for i, path in enumerate(args.draws or []):
        d = read_draws(path)
        sub = _subset_truth(truth, _align_to(truth, d.gene_ids))
        coverage.extend(coverage_experiment(None, {Path(path).parent.name or str(i): d}, args.level, truth=sub))
        minutes = args.minutes[i] if args.minutes and i < len(args.minutes) else _fit_minutes(path)
        if minutes:
            mixing.append(mixing_row(d, sub, minutes))

    with open(out / "auc.tsv", "w") as fh:
        fh.write("curve\tauc\tn\n")
        for r in auc_rows:
            fh.write(f"{r['curve']}\t{r['auc']!r}\t{r['n']}\n")
    with open(out / "roc.tsv", "w") as fh:
        fh.write("curve\tfpr\ttpr\n")
        for r in roc_points:
            fh.write(f"{r['curve']}\t{float(r['fpr'])!r}\t{float(r['tpr'])!r}\n")
    if coverage:
        write_rows(coverage, out / "coverage.tsv")
    if mixing:
        write_rows(mixing, out / "mixing.tsv")
    for r in auc_rows:
        print(f"{r['curve']}\tAUC {r['auc']:.4f}")
    for r in coverage:
        print(f"coverage {r.label} {r.family} @{r.level}: {r.coverage:.3f}")
    write_manifest(
        out / "manifest.json", "evaluate", args.argv, {"level": args.level},
        {"truth": args.truth, "summary": args.summary, "counts": args.counts, "enrichment": args.enrichment},
    )
    return 0


# ---------------------------------------------------------------- normalize


def cmd_normalize(args) -> int:
    cm = load_counts(args.counts, args.labels)
    if args.min_count is not None:
        cm, _ = filter_low_counts(cm, FilterPolicy(args.min_count))
    depths = estimate_depths(cm)
    if args.out:
        write_depths(depths, args.out)
    else:
        print("sample\tdepth")
        for s, d in zip(depths.sample_ids, depths.s):
            print(f"{s}\t{float(d)!r}")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="plnde", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="run the MCMC sampler on a count table")
    f.add_argument("--config", help="JSON config or a previous fit manifest")
    f.add_argument("--counts")
    f.add_argument("--labels", help="sample<TAB>condition file, or comma-separated A/B labels")
    f.add_argument("--depths", help="depths TSV; estimated by median of ratios when omitted")
    f.add_argument("--min-count", dest="min_count", type=int, help="drop genes with total count <= this")
    f.add_argument("--iters", dest="n_iter", type=int)
    f.add_argument("--burnin", dest="n_burnin", type=int)
    f.add_argument("--thin", type=int)
    f.add_argument("--seed", type=int)
    f.add_argument("--model", choices=("lognormal", "negbinom"))
    f.add_argument("--fix-tau", dest="fix_tau", type=float, nargs="?", const=DEFAULT_FIXED_TAU,
                   help=f"hold tau fixed (default value {DEFAULT_FIXED_TAU})")
    f.add_argument("--fix-pi", dest="fix_pi", type=float)
    f.add_argument("--fix-sigma-gamma", dest="fix_sigma_gamma", type=float)
    f.add_argument("--fix-psi0", dest="fix_psi0", type=float)
    f.add_argument("--allow-free-tau", dest="allow_free_tau", action="store_const", const=True)
    f.add_argument("--block-size", dest="block_size", type=int)
    f.add_argument("--save-draws", dest="save_draws", action="store_const", const=True)
    f.add_argument("--progress-every", dest="progress_every", type=int)
    f.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or all cores)")
    f.add_argument("--quiet", action="store_true")
    f.add_argument("--out")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="generate a synthetic dataset with ground truth")
    s.add_argument("--config")
    s.add_argument("--design", help=f"one of: {', '.join(DESIGNS)}")
    s.add_argument("--seed", type=int)
    s.add_argument("--n", type=int, help="samples per condition")
    s.add_argument("--m", type=int, help="genes (flat design)")
    s.add_argument("--n-sets", dest="n_sets", type=int, help="number of gene sets (set design)")
    s.add_argument("--pi0", type=float, help="DE probability (flat design)")
    s.add_argument("--model", choices=("lognormal", "negbinom"), help="data model (flat design)")
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("enrich", help="posterior enrichment probabilities for gene sets")
    e.add_argument("--draws", required=True)
    e.add_argument("--sets", required=True, help="GMT file")
    e.add_argument("--threads", type=int)
    e.add_argument("--out")
    e.set_defaults(func=cmd_enrich)

    v = sub.add_parser("evaluate", help="ROC/AUC, coverage and mixing tables against ground truth")
    v.add_argument("--truth")
    v.add_argument("--summary", help="fit summary.tsv (gene ROC from posterior DE probabilities)")
    v.add_argument("--counts", help="count table for the per-gene Welch baseline")
    v.add_argument("--labels")
    v.add_argument("--enrichment", help="enrichment.tsv (set ROC)")
    v.add_argument("--draws", nargs="+", help="draws files for coverage and mixing tables")
    v.add_argument("--minutes", type=float, nargs="+", help="run times for the draws (default: from their manifests)")
    v.add_argument("--level", type=float, default=0.8)
    v.add_argument("--out")
    v.set_defaults(func=cmd_evaluate)

    n = sub.add_parser("normalize", help="estimate sampling depths")
    n.add_argument("--counts", required=True)
    n.add_argument("--labels", required=True)
    n.add_argument("--min-count", dest="min_count", type=int)
    n.add_argument("--out", help="depths TSV (default: standard output)")
    n.set_defaults(func=cmd_normalize)
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    try:
        return args.func(args)
    except (UsageError, CountMatrixError, GeneSetError, FreeTauError, ValueError, OSError) as e:
        print(f"plnde {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
