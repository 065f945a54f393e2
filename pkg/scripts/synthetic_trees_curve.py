"""Train and held-out RMSE against forest size on the piecewise synthetic target."""

import argparse
import csv
import sys

from airprice.config import REFERENCE_PARAMS
from airprice.learners import HyperParams
from airprice.select import trees_curve
from airprice.synthetic import piecewise_regression


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--folds", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--trees", type=int, nargs="+", default=[1, 5, 10, 25, 50, 100, 150, 200])
    args = ap.parse_args()

    X, y = piecewise_regression(args.n, seed=args.seed)
    curve = trees_curve(X, y, HyperParams(**REFERENCE_PARAMS), args.trees, args.folds, args.seed)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["n_trees", "train_rmse", "heldout_rmse"])
    w.writerows(curve)


if __name__ == "__main__":
    main()
