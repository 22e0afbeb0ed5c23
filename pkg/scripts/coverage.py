"""Coverage of central posterior intervals for mu and alpha on the flat design."""

import argparse

from plnde.experiments import coverage_study

from _common import write_tsv


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, nargs="+", default=[2, 5])
    p.add_argument("--m", type=int, default=1000)
    p.add_argument("--level", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    a = p.parse_args()
    write_tsv(coverage_study(ns=tuple(a.n), m=a.m, level=a.level, seed=a.seed), a.out)


if __name__ == "__main__":
    main()
