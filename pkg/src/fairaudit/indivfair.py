"""Individual-level audits.

Lipschitz audit: flag record pairs whose outputs differ more than L times
their Mahalanobis feature distance allows.  Attribute-reconstruction audit:
cross-validated attacker predicting the protected attribute from everything
an adversary could see; AUC near 0.5 means the attribute leaves no trace.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .data import DataError, Dataset, DegenerateGroupError, PredictionSet
from . import mitigate, rocstats

__all__ = [
    "LipschitzAuditResult",
    "lipschitz_audit",
    "ReconstructionAuditResult",
    "reconstruction_audit",
]

EXACT_PAIR_LIMIT = 2000  # exact enumeration up to n(n-1)/2 pairs of this n
SAMPLED_PAIRS = 2_000_000


@dataclass
class LipschitzAuditResult:
    violations: int
    checked_pairs: int
    worst_ratio: float
    top_pairs: list[dict] = field(default_factory=list)
    exact: bool = True
    mode: str = "score"
    scale: float = 1.0

    def to_json_dict(self) -> dict:
        return {
            "violations": self.violations,
            "checked_pairs": self.checked_pairs,
            "worst_ratio": self.worst_ratio,
            "top_pairs": self.top_pairs,
            "exact": self.exact,
            "mode": self.mode,
            "scale": self.scale,
        }

    def pairs_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["i", "j", "d_y", "d_x", "ratio"])
        for p in self.top_pairs:
            writer.writerow([p["i"], p["j"], repr(p["d_y"]), repr(p["d_x"]), repr(p["ratio"])])
        return buf.getvalue()


def _mahalanobis_factor(features: np.ndarray) -> np.ndarray:
    """Whitening matrix W with d(x, x') = ||W (x - x')||.

    The covariance gets a ridge of 1e-8 * trace/dim, which keeps it
    invertible and preserves exact invariance under common rescaling of all
    features.
    """
    n, p = features.shape
    cov = np.cov(features, rowvar=False, bias=True).reshape(p, p)
    ridge = 1e-8 * max(np.trace(cov), 1e-300) / p
    cov = cov + ridge * np.eye(p)
    vals, vecs = np.linalg.eigh(cov)
    vals = np.maximum(vals, 1e-300)
    return vecs @ np.diag(vals**-0.5) @ vecs.T


def lipschitz_audit(
    d: Dataset,
    dy: str = "score",
    scale: float = 1.0,
    pred: PredictionSet | None = None,
    top_k: int = 10,
    seed: int = 0,
) -> LipschitzAuditResult:
    """Count pairs with d_y > scale * d_x.

    d_y compares scores (|m_i - m_j|, mode "score") or decisions
    (|yhat_i - yhat_j|, mode "decision"); d_x is the Mahalanobis distance
    over the feature columns.  The pure similarity inequality has no free
    constant, so ``scale`` makes it non-vacuous and is reported back.
    Exact enumeration up to n = 2000; beyond that a seeded sample of
    2e6 pairs is audited and flagged as non-exact.
    """
    if d.features is None:
        raise DataError("lipschitz audit requires feature columns")
    if np.isnan(d.features).any():
        raise DataError("lipschitz audit requires complete features")
    n = len(d)
    if n < 2:
        raise DataError("need at least two records")
    if dy == "score":
        out = d.require_scores()
    elif dy == "decision":
        if pred is None:
            raise DataError("decision mode requires predictions")
        out = pred.prob
    else:
        raise ValueError(f"unknown output metric {dy!r}")

    white = d.features @ _mahalanobis_factor(d.features).T

    exact = n <= EXACT_PAIR_LIMIT
    if exact:
        ii, jj = np.triu_indices(n, k=1)
    else:
        rng = np.random.default_rng(seed)
        ii = rng.integers(0, n, size=SAMPLED_PAIRS)
        jj = rng.integers(0, n, size=SAMPLED_PAIRS)
        keep = ii != jj
        ii, jj = ii[keep], jj[keep]

    violations = 0
    worst = 0.0
    top: list[tuple[float, int, int, float, float]] = []
    block = 500_000
    for start in range(0, len(ii), block):
        bi, bj = ii[start : start + block], jj[start : start + block]
        dx = np.linalg.norm(white[bi] - white[bj], axis=1)
        dyv = np.abs(out[bi] - out[bj])
        bad = dyv > scale * dx
        violations += int(bad.sum())
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(dx > 0, dyv / dx, np.where(dyv > 0, np.inf, 0.0))
        if len(ratio):
            worst = max(worst, float(np.max(ratio)))
        bad_idx = np.flatnonzero(bad)
        for k in bad_idx[np.argsort(-ratio[bad_idx], kind="stable")][:top_k]:
            top.append((float(ratio[k]), int(bi[k]), int(bj[k]), float(dyv[k]), float(dx[k])))
    top.sort(key=lambda t: -t[0])
    top_pairs = [
        {"i": i, "j": j, "d_y": dy_, "d_x": dx_, "ratio": r}
        for r, i, j, dy_, dx_ in top[:top_k]
    ]
    return LipschitzAuditResult(
        violations=violations,
        checked_pairs=len(ii),
        worst_ratio=worst,
        top_pairs=top_pairs,
        exact=exact,
        mode=dy,
        scale=scale,
    )


@dataclass
class ReconstructionAuditResult:
    auc: float
    features_used: tuple[str, ...]
    folds: int
    fold_aucs: tuple[float, ...]
    seed: int

    def to_json_dict(self) -> dict:
        return {
            "auc": self.auc,
            "features_used": list(self.features_used),
            "folds": self.folds,
            "fold_aucs": list(self.fold_aucs),
            "seed": self.seed,
        }


def reconstruction_audit(
    d: Dataset,
    pred: PredictionSet | None = None,
    folds: int = 5,
    seed: int = 0,
) -> ReconstructionAuditResult:
    """Mean held-out AUC of a logistic attacker predicting s.

    The attacker sees the features plus, when available, the score, the
    decision and the outcome.  Folds are stratified by s (so no fold loses a
    group) and the whole procedure is deterministic given the seed.
    """
    for g in (0, 1):
        d.require_group(g)

    blocks: list[np.ndarray] = []
    names: list[str] = []
    if d.features is not None:
        if np.isnan(d.features).any():
            raise DataError("reconstruction audit requires complete features")
        blocks.append(d.features)
        names.extend(d.feature_names or [f"x{j}" for j in range(d.features.shape[1])])
    if d.score is not None:
        blocks.append(d.score[:, None])
        names.append("score")
    if pred is not None:
        blocks.append(pred.prob[:, None])
        names.append("yhat")
    blocks.append(d.y[:, None].astype(float))
    names.append("y")
    X = np.hstack(blocks)

    folds = max(2, min(folds, int((d.s == 0).sum()), int((d.s == 1).sum())))
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(d), dtype=int)
    for g in (0, 1):
        idx = np.flatnonzero(d.s == g)
        idx = idx[rng.permutation(len(idx))]
        fold_of[idx] = np.arange(len(idx)) % folds

    fold_aucs = []
    for f in range(folds):
        test = fold_of == f
        train = ~test
        train_data = Dataset(
            s=d.s[train],
            y=d.s[train],  # attacker target: the protected attribute
            features=X[train],
            weight=d.weight[train],
        )
        model = mitigate.train_logistic(train_data)
        attack_score = model.predict_score(X[test])
        held = Dataset(s=d.s[test], y=d.s[test], score=attack_score, weight=d.weight[test])
        try:
            fold_aucs.append(rocstats.auc(rocstats.roc_curve(held)))
        except DegenerateGroupError:
            continue  # stratification keeps this rare (tiny folds only)
    if not fold_aucs:
        raise DegenerateGroupError("no fold contained both groups")
    return ReconstructionAuditResult(
        auc=float(np.mean(fold_aucs)),
        features_used=tuple(names),
        folds=folds,
        fold_aucs=tuple(float(a) for a in fold_aucs),
        seed=seed,
    )
