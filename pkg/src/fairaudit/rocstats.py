"""Confusion matrices, rates, ROC curves, envelopes and threshold selection.

Conventions
-----------
* Decisions follow the strict rule ``yhat = 1 iff score > t``, so candidate
  thresholds are enumerated at midpoints between consecutive distinct scores
  plus +/-inf sentinels; a threshold equal to an observed score is never
  ambiguous.
* All counts are weight sums; randomized predictions contribute fractionally
  by their decision probability.
* Zero denominators yield explicit ``None`` ("undefined") rates, never NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import Dataset, DegenerateGroupError, PredictionSet

__all__ = [
    "ConfusionMatrix",
    "RateSet",
    "RocCurve",
    "confusion",
    "rates",
    "roc_curve",
    "auc",
    "convex_envelope",
    "best_accuracy_threshold",
    "fairest_threshold",
    "roc_points_csv",
    "roc_svg",
]


@dataclass(frozen=True)
class ConfusionMatrix:
    """Weighted classification counts."""

    tp: float
    fp: float
    tn: float
    fn: float

    def __post_init__(self):
        for name in ("tp", "fp", "tn", "fn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def p(self) -> float:
        return self.tp + self.fn

    @property
    def n(self) -> float:
        return self.fp + self.tn

    @property
    def total(self) -> float:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class RateSet:
    """Derived rates; ``None`` marks an undefined (0/0) entry."""

    tpr: float | None
    fpr: float | None
    ppv: float | None
    npv: float | None
    accuracy: float | None
    phi: float | None


def _ratio(num: float, den: float) -> float | None:
    return None if den == 0 else num / den


def confusion(
    d: Dataset, pred: PredictionSet, group: int | None = None
) -> ConfusionMatrix:
    """Weighted confusion counts, optionally restricted to one group."""
    if len(pred) != len(d):
        raise ValueError("predictions not aligned with dataset")
    mask = np.ones(len(d), dtype=bool) if group is None else d.s == group
    if not mask.any():
        raise DegenerateGroupError(f"filter selects no records (group={group})")
    w = d.weight[mask]
    y = d.y[mask]
    p = pred.prob[mask]
    return ConfusionMatrix(
        tp=float(np.sum(w * p * y)),
        fp=float(np.sum(w * p * (1 - y))),
        tn=float(np.sum(w * (1 - p) * (1 - y))),
        fn=float(np.sum(w * (1 - p) * y)),
    )


def rates(c: ConfusionMatrix) -> RateSet:
    phi_den = (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn)
    return RateSet(
        tpr=_ratio(c.tp, c.tp + c.fn),
        fpr=_ratio(c.fp, c.fp + c.tn),
        ppv=_ratio(c.tp, c.tp + c.fp),
        npv=_ratio(c.tn, c.tn + c.fn),
        accuracy=_ratio(c.tp + c.tn, c.total),
        phi=None if phi_den == 0 else (c.tp * c.tn - c.fp * c.fn) / math.sqrt(phi_den),
    )


# ---------------------------------------------------------------------------
# ROC curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RocCurve:
    """Ordered (fpr, tpr, threshold) points from (0,0) to (1,1).

    ``thresholds`` are strictly decreasing, starting at +inf (nothing
    positive) and ending at -inf (everything positive).  The raw cumulative
    weighted counts behind each point are kept so that the area can be
    computed exactly for unit weights and so that hull mixtures can be
    realized as two-threshold policies.
    """

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    neg_above: np.ndarray
    pos_above: np.ndarray
    neg_total: float
    pos_total: float
    envelope: bool = False

    def __post_init__(self):
        for name in ("fpr", "tpr", "thresholds", "neg_above", "pos_above"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(np.diff(self.fpr) < 0) or np.any(np.diff(self.tpr) < 0):
            raise ValueError("fpr and tpr must be non-decreasing")
        if np.any(np.diff(self.thresholds) >= 0):
            raise ValueError("thresholds must be strictly decreasing")

    def __len__(self) -> int:
        return len(self.fpr)

    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist(), self.thresholds.tolist()))

    def segments(self) -> list[dict]:
        """Consecutive point pairs; on an envelope each one is a mixture:
        using the lower threshold with probability p and the higher with
        (1 - p) sweeps the segment as p goes 0 -> 1."""
        out = []
        for i in range(len(self) - 1):
            out.append(
                {
                    "from": (float(self.fpr[i]), float(self.tpr[i])),
                    "to": (float(self.fpr[i + 1]), float(self.tpr[i + 1])),
                    "threshold_hi": float(self.thresholds[i]),
                    "threshold_lo": float(self.thresholds[i + 1]),
                }
            )
        return out


def roc_curve(d: Dataset, group: int | None = None) -> RocCurve:
    """One point per distinct score plus the (0,0) and (1,1) endpoints.

    The point at threshold t is (P[m > t | Y=0], P[m > t | Y=1]) within the
    filtered records (weighted).
    """
    score = d.require_scores()
    mask = np.ones(len(d), dtype=bool) if group is None else d.s == group
    if not mask.any():
        raise DegenerateGroupError(f"filter selects no records (group={group})")
    m = score[mask]
    y = d.y[mask]
    w = d.weight[mask]

    order = np.argsort(-m, kind="stable")
    ms, ys, ws = m[order], y[order], w[order]
    distinct, first_idx = np.unique(-ms, return_index=True)
    distinct = -distinct  # descending distinct scores
    cut = np.append(first_idx[1:], len(ms))  # records with score >= distinct[j]

    cum_pos = np.cumsum(ws * ys)
    cum_neg = np.cumsum(ws * (1 - ys))
    # totals from the same running sums, so the final point is exactly (1, 1)
    pos_total = float(cum_pos[-1])
    neg_total = float(cum_neg[-1])
    if pos_total == 0 or neg_total == 0:
        raise DegenerateGroupError("ROC curve needs both outcome classes")
    pos_above = np.concatenate(([0.0], cum_pos[cut - 1]))
    neg_above = np.concatenate(([0.0], cum_neg[cut - 1]))

    mids = (distinct[:-1] + distinct[1:]) / 2.0
    thresholds = np.concatenate(([math.inf], mids, [-math.inf]))

    return RocCurve(
        fpr=neg_above / neg_total,
        tpr=pos_above / pos_total,
        thresholds=thresholds,
        neg_above=neg_above,
        pos_above=pos_above,
        neg_total=neg_total,
        pos_total=pos_total,
    )


def auc(r: RocCurve) -> float:
    """Trapezoid area under the curve.

    Equals the pairwise concordance probability with ties counted 1/2.  For
    unit (integer) weights the sum is carried out in exact integer
    arithmetic so the identity holds to the last bit.
    """
    counts = np.concatenate((r.neg_above, r.pos_above, [r.neg_total, r.pos_total]))
    if np.all(counts == np.rint(counts)):
        neg = [int(v) for v in np.rint(r.neg_above)]
        pos = [int(v) for v in np.rint(r.pos_above)]
        num = sum(
            (neg[i + 1] - neg[i]) * (pos[i] + pos[i + 1]) for i in range(len(neg) - 1)
        )
        return num / (2 * int(round(r.neg_total)) * int(round(r.pos_total)))
    terms = (r.fpr[1:] - r.fpr[:-1]) * (r.tpr[1:] + r.tpr[:-1]) / 2.0
    return float(math.fsum(terms.tolist()))


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_envelope(r: RocCurve) -> RocCurve:
    """Upper concave hull of the curve's points.

    Dominates the input pointwise and is idempotent.  Collinear interior
    points are dropped, so every retained segment is a genuine vertex pair;
    mixing its two thresholds at random realizes any point on the segment.
    """
    pts = list(range(len(r)))
    hull: list[int] = []
    for i in pts:
        cur = (r.fpr[i], r.tpr[i])
        while len(hull) >= 2:
            o = (r.fpr[hull[-2]], r.tpr[hull[-2]])
            a = (r.fpr[hull[-1]], r.tpr[hull[-1]])
            if _cross(o, a, cur) >= 0:  # not a right turn: middle point is dominated
                hull.pop()
            else:
                break
        hull.append(i)
    idx = np.asarray(hull)
    return RocCurve(
        fpr=r.fpr[idx],
        tpr=r.tpr[idx],
        thresholds=r.thresholds[idx],
        neg_above=r.neg_above[idx],
        pos_above=r.pos_above[idx],
        neg_total=r.neg_total,
        pos_total=r.pos_total,
        envelope=True,
    )


def _clamp_threshold(t: float) -> float:
    """Map sentinel thresholds onto the [0, 1] policy domain.

    +inf -> 1.0 is exact (scores never exceed 1).  -inf -> 0.0 is exact
    unless some record scores exactly 0.
    """
    if t == math.inf:
        return 1.0
    if t == -math.inf:
        return 0.0
    return float(t)


def best_accuracy_threshold(
    r: RocCurve, n_weight: float, p_weight: float
) -> tuple[float, float]:
    """Accuracy-optimal curve point; ties broken toward the larger threshold.

    Scans the iso-accuracy objective TPR*P + (1-FPR)*N over the curve points
    (the optimum of a linear objective over the achievable set is attained
    at a curve point).
    """
    if n_weight <= 0 or p_weight <= 0:
        raise ValueError("class weights must be positive")
    # counts rather than rates: exact when the weights are the curve totals
    correct = r.pos_above * (p_weight / r.pos_total) + (r.neg_total - r.neg_above) * (
        n_weight / r.neg_total
    )
    best = int(np.argmax(correct))  # first max = largest threshold
    return _clamp_threshold(r.thresholds[best]), float(
        correct[best] / (n_weight + p_weight)
    )


def fairest_threshold(d: Dataset) -> tuple[float, float, float]:
    """Single shared threshold maximizing the two-sided positive-rate ratio.

    Maximizes min(r, 1/r) with r = P[Yhat=1|S=0] / P[Yhat=1|S=1] over
    thresholds that leave a non-degenerate decision in each group (each
    group keeps at least one positive and one negative prediction); an
    all-positive or all-negative group would make the ratio vacuous.
    Ties are broken by higher accuracy, then by the larger threshold.

    Returns (threshold, ratio, error_rate).
    """
    score = d.require_scores()
    for g in (0, 1):
        d.require_group(g)

    # one descending scan gives every candidate's group rates and correctness
    w = d.weight
    order = np.argsort(-score, kind="stable")
    ms = score[order]
    ys = d.y[order]
    ss = d.s[order]
    ws = w[order]
    distinct, first_idx = np.unique(-ms, return_index=True)
    distinct = -distinct
    cut = np.append(first_idx[1:], len(ms))

    def above(values):
        cum = np.cumsum(values)
        out = np.concatenate(([0.0], cum[cut - 1]))
        if distinct[-1] == 0.0:  # t = 0 keeps zero-score records negative
            out[-1] = out[-2] if len(out) > 1 else 0.0
        return out, float(cum[-1])

    mids = (distinct[:-1] + distinct[1:]) / 2.0
    cands = np.concatenate(([1.0], mids, [0.0]))
    above_w0, w0 = above(ws * (ss == 0))
    above_w1, w1 = above(ws * (ss == 1))
    above_pos, pos_total = above(ws * ys)
    above_all, total_w = above(ws)
    r0 = above_w0 / w0
    r1 = above_w1 / w1
    correct = above_pos + ((total_w - pos_total) - (above_all - above_pos))

    if not np.any((r0 > 0.0) & (r1 > 0.0)):
        raise DegenerateGroupError("no threshold yields positives in both groups")
    keep = (r0 > 0.0) & (r1 > 0.0) & (r0 < 1.0) & (r1 < 1.0)
    if not keep.any():
        # only degenerate candidates exist: fall back to the best of those
        keep = (r0 > 0.0) & (r1 > 0.0)

    best = None
    for k in np.flatnonzero(keep):
        ratio = min(r0[k] / r1[k], r1[k] / r0[k])
        key = (ratio, correct[k], cands[k])
        if best is None or key > best[0]:
            # error from the wrong-count so unit-weight results stay exact
            best = (key, float(cands[k]), float(ratio), (total_w - correct[k]) / total_w)

    _, t, ratio, err = best
    return t, ratio, err


# ---------------------------------------------------------------------------
# Plot-data export
# ---------------------------------------------------------------------------


def roc_points_csv(r: RocCurve) -> str:
    lines = ["fpr,tpr,threshold"]
    for f, t, thr in r.points():
        lines.append(f"{f!r},{t!r},{thr!r}")
    return "\n".join(lines) + "\n"


def roc_svg(curves: Sequence[tuple[str, RocCurve]], size: int = 320) -> str:
    """Minimal static SVG: one polyline per named curve plus the diagonal."""
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    pad = 24
    span = size - 2 * pad

    def sx(v: float) -> float:
        return pad + v * span

    def sy(v: float) -> float:
        return size - pad - v * span

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
        f'<line x1="{sx(0)}" y1="{sy(0)}" x2="{sx(1)}" y2="{sy(1)}" '
        'stroke="#999" stroke-dasharray="4 3"/>',
    ]
    for k, (name, curve) in enumerate(curves):
        pts = " ".join(f"{sx(f):.2f},{sy(t):.2f}" for f, t in zip(curve.fpr, curve.tpr))
        color = colors[k % len(colors)]
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{pad + 4}" y="{pad + 14 + 14 * k}" fill="{color}" '
            f'font-size="11" font-family="sans-serif">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
