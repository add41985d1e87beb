"""Coverage experiment for the disparate-impact ratio intervals.

Draws parity-fair datasets (decisions independent of the group), builds a
confidence interval per trial with each method and reports how often the
interval covers the true ratio of 1.

Run from the repository root:  python scripts/coverage_study.py [n_trials]
"""

import sys

import numpy as np

from fairaudit.data import Dataset, PredictionSet
from fairaudit.groupfair import impact_ci


def one_trial(rng, n=400, rate=0.4):
    s = rng.integers(0, 2, size=n)
    yhat = (rng.random(n) < rate).astype(int)
    d = Dataset(s=s, y=np.zeros(n, dtype=int), score=np.full(n, 0.5))
    return d, PredictionSet.from_labels(yhat)


def main() -> None:
    n_trials = int(sys.argv[1]) if len(sys.argv) > 1 else 1000
    rng = np.random.default_rng(2718)
    results = {"asymptotic": 0, "bootstrap": 0}
    widths = {"asymptotic": [], "bootstrap": []}
    for trial in range(n_trials):
        d, pred = one_trial(rng)
        for method in results:
            ci = impact_ci(
                d, pred, method=method, level=0.95,
                n_boot=300, seed=trial,
            )
            if ci.lo <= 1.0 <= ci.hi:
                results[method] += 1
            widths[method].append(ci.hi - ci.lo)
    for method in results:
        print(
            f"{method:11s} coverage {results[method] / n_trials:6.3f} "
            f"(target 0.95), mean width {np.mean(widths[method]):.3f}"
        )


if __name__ == "__main__":
    main()
