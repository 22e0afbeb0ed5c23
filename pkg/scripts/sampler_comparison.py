"""Lognormal vs negative-binomial sampler: ESS per minute and CRPS, tau held fixed."""

import argparse

from plnde.experiments import sampler_comparison

from _common import write_tsv


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, nargs="+", default=[2])
    p.add_argument("--m", type=int, default=1000)
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--out")
    a = p.parse_args()
    rows = []
    for n in a.n:
        for seed in a.seeds:
            res = sampler_comparison(n=n, m=a.m, seed=seed)
            rows.extend(res.rows)
            ln, nb = res.row("lognormal"), res.row("negbinom")
            print(f"# n={n} seed={seed}: alpha ESS/min ratio {ln.ess_per_min_alpha / nb.ess_per_min_alpha:.2f}, "
                  f"alpha CRPS {ln.crps_alpha:.4f} vs {nb.crps_alpha:.4f}")
    write_tsv(rows, a.out)


if __name__ == "__main__":
    main()
