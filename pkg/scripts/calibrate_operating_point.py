"""Fit the committed Beta cell parameters for the ROC operating point.

Targets the survival probabilities P[m > 0.6 | Y=1] = 0.663 and
P[m > 0.6 | Y=0] = 0.096 by root-finding one shape parameter per outcome
class (the other is pinned for identifiability).  Writes the spec consumed
by ``fairaudit.synth.operating_point_spec``.

Run from the repository root:  python scripts/calibrate_operating_point.py
"""

import json
from pathlib import Path

from scipy.optimize import brentq
from scipy.stats import beta as beta_dist

THRESHOLD = 0.6
TPR_TARGET = 0.663  # P[m > t | Y=1]
FPR_TARGET = 0.096  # P[m > t | Y=0]

# cell probabilities: P[S=1] = 0.5, P[Y=1|S=0] = 0.3, P[Y=1|S=1] = 0.5
CELL_PROBS = {(0, 0): 0.35, (0, 1): 0.25, (1, 0): 0.15, (1, 1): 0.25}


def main() -> None:
    # positives: skew high, fix beta = 2 and solve alpha
    alpha_pos = brentq(
        lambda a: beta_dist.sf(THRESHOLD, a, 2.0) - TPR_TARGET, 0.05, 200.0, xtol=1e-13
    )
    # negatives: skew low, fix alpha = 2 and solve beta
    beta_neg = brentq(
        lambda b: beta_dist.sf(THRESHOLD, 2.0, b) - FPR_TARGET, 0.05, 200.0, xtol=1e-13
    )

    cells = {}
    for (y, s), prob in sorted(CELL_PROBS.items()):
        if y == 1:
            cells[f"{y},{s}"] = {"alpha": alpha_pos, "beta": 2.0, "prob": prob}
        else:
            cells[f"{y},{s}"] = {"alpha": 2.0, "beta": beta_neg, "prob": prob}

    payload = {
        "threshold": THRESHOLD,
        "targets": {"tpr": TPR_TARGET, "fpr": FPR_TARGET},
        "achieved": {
            "tpr": beta_dist.sf(THRESHOLD, alpha_pos, 2.0),
            "fpr": beta_dist.sf(THRESHOLD, 2.0, beta_neg),
        },
        "cells": cells,
    }
    out = Path(__file__).resolve().parents[1] / "src/fairaudit/datasets/operating_point.json"
    out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {out}")
    print(json.dumps(payload["achieved"], indent=2))


if __name__ == "__main__":
    main()
