"""Planted-parameter recovery for the EM estimator.

Fits a K2=2, K1=1 model to samples from a known model on the true
segmentation and prints the worst absolute/relative errors per parameter.

    python3 scripts/em_recovery.py --reps 20 --per-segment 5000
"""
import argparse
import time

import numpy as np

from wvar.em import FitConfig, fit
from wvar.mixture import TwoLayerMixture, sample
from wvar.segmentation import Segmentation


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--per-segment", type=int, default=5000)
    ap.add_argument("--restarts", type=int, default=10)
    args = ap.parse_args()

    n = args.per_segment
    beta = np.array([[0.9, 0.1], [0.1, 0.9]])
    truth = TwoLayerMixture(np.ones((2, 1)), [[-0.05], [0.05]], [[0.01], [0.01]], beta, [n, n])
    seg = Segmentation.from_lengths([n, n])
    worst = {"beta": 0.0, "mu": 0.0, "sigma_rel": 0.0}
    start = time.perf_counter()
    for rep in range(args.reps):
        x = sample(truth, rep).returns
        m = fit(x, seg, FitConfig(k2=2, k1=1, seed=rep, restarts=args.restarts)).model
        order = np.argsort(m.mu[:, 0])
        worst["beta"] = max(worst["beta"], float(np.abs(m.segment_weights[:, order] - beta).max()))
        worst["mu"] = max(worst["mu"], float(np.abs(m.mu[order, 0] - [-0.05, 0.05]).max()))
        worst["sigma_rel"] = max(worst["sigma_rel"], float(np.abs(m.sigma[order, 0] / 0.01 - 1).max()))
    print(f"{args.reps} reps in {time.perf_counter() - start:.1f}s")
    for k, v in worst.items():
        print(f"  max error {k:<10} {v:.5f}")


if __name__ == "__main__":
    main()
