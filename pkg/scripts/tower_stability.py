"""Run the invariant suite on the default towers and tabulate verdicts per check."""
import argparse
import os
import time

from coarse_lab.suite import CHECKS, SuiteConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--only", default=",".join(str(k) for k in sorted(CHECKS)))
    ap.add_argument("--rows", action="store_true", help="also print failing rows")
    args = ap.parse_args()
    cfg = SuiteConfig()
    print(f"threads={os.environ.get('COARSE_LAB_THREADS', 'default')}")
    print(f"{'check':>5}  {'rows':>5}  {'fail':>5}  {'secs':>6}  name")
    for k in (int(s) for s in args.only.split(",")):
        name, fn = CHECKS[k]
        t0 = time.perf_counter()
        rows = fn(cfg)
        bad = [r for r in rows if not r[4]]
        print(f"{k:>5}  {len(rows):>5}  {len(bad):>5}  {time.perf_counter() - t0:6.2f}  {name}")
        if args.rows:
            for r in bad:
                print("       ", r)


if __name__ == "__main__":
    main()
