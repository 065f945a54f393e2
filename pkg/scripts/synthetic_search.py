"""Randomized search on the piecewise synthetic target; prints the top-3 block and importances."""

import argparse
import time

from airprice.learners import feature_importances, fit_forest
from airprice.select import SearchSpace, format_top_k, randomized_search
from airprice.synthetic import piecewise_regression


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--n-iter", type=int, default=20)
    ap.add_argument("--folds", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    X, y = piecewise_regression(args.n, seed=args.seed)
    start = time.perf_counter()
    trials = randomized_search(X, y, SearchSpace(), args.n_iter, args.folds, args.seed)
    print(format_top_k(trials, 3))
    forest = fit_forest(X, y, trials[0].params, seed=args.seed)
    for name, imp in feature_importances(forest, [f"x{i}" for i in range(X.shape[1])]):
        print(f"{name}: {imp:.4f}")
    print(f"elapsed {time.perf_counter() - start:.1f}s")


if __name__ == "__main__":
    main()
