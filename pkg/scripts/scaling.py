"""Single-thread scan time over a grid of m and n, with an affine fit in m*n."""

import argparse

from plnde.experiments import scaling_study, scan_seconds


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--m", type=int, nargs="+", default=[1000, 2000, 4000, 8000])
    p.add_argument("--n", type=int, nargs="+", default=[2, 4, 8], help="samples per group")
    p.add_argument("--repeats", type=int, default=30)
    a = p.parse_args()
    print(f"# one scan at m=10000, n=2: {scan_seconds(10_000, 2):.4f} s")
    res = scaling_study(ms=tuple(a.m), ns=tuple(a.n), repeats=a.repeats)
    print("m\tn\tseconds\tfitted")
    for m, n, s, f in zip(res.m, res.n, res.seconds, res.predicted):
        print(f"{int(m)}\t{int(n)}\t{s:.6f}\t{f:.6f}")
    print(f"# fit: {res.intercept:.3g} s + {res.slope:.3g} s * m*n; max deviation {res.max_deviation:.2f}x")


if __name__ == "__main__":
    main()
