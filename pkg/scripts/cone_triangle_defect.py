"""Worst triangle-inequality excess of the interval cone as the level cap grows."""
import argparse

from coarse_lab.homotopy import build_cone, worst_triangle_excess


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--levels", default="2,3,4,8,16,32")
    args = ap.parse_args()
    print("N,points,worst_excess,excess_per_level,witness")
    for N in (int(s) for s in args.levels.split(",")):
        cone = build_cone(N=N)
        excess, witness = worst_triangle_excess(cone)
        print(f"{N},{len(cone.space)},{excess:.6g},{excess / N:.4g},{witness}")


if __name__ == "__main__":
    main()
