"""The group-fairness metric catalog: gaps, ratios, relaxations, intervals.

Every metric is evaluated from its definitional probability formula on
weighted counts.  Values with an empty conditioning class are undefined
(``None``), mirrored as "-" in rendered reports, never NaN.

Conventions for a :class:`MetricResult`:

* per-group values are probabilities/ratios on the 0-1 scale;
* ``diff`` is the signed difference (group 1 - group 0) in percentage
  points; ``gap`` is its absolute value;
* ``rel_diff`` is (v1 - v0) / v0 as a percent, with group 0 as the base,
  undefined when v0 = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import norm

from ._common import ks_distance, weighted_mean
from .data import Dataset, DegenerateGroupError, PredictionSet
from . import rocstats

__all__ = [
    "METRICS",
    "MetricResult",
    "DisparateImpactResult",
    "ImpactInterval",
    "CalibrationResult",
    "RocEqualityResult",
    "group_metric",
    "disparate_impact",
    "impact_point_estimate",
    "impact_ci",
    "roc_equality",
    "class_balance",
    "calibration",
    "conditional_dp",
]

# stable snake_case identifiers used in reports
METRICS = (
    "statistical_parity",
    "equal_opportunity",
    "predictive_equality",
    "equalized_odds",
    "conditional_accuracy",
    "predictive_parity",
    "accuracy_equality",
    "treatment_equality",
    "equalizing_disincentives",
    "phi_fairness",
    "auc_fairness",
    "roc_equality",
    "class_balance_weak",
    "class_balance_strong",
    "calibration_parity",
    "good_calibration",
    "conditional_demographic_parity",
)

# the seven rows of the reference table, in print order
TABLE_METRICS = (
    "statistical_parity",
    "equal_opportunity",
    "predictive_equality",
    "conditional_accuracy",
    "predictive_parity",
    "accuracy_equality",
    "treatment_equality",
)


@dataclass
class MetricResult:
    metric: str
    group0: float | None
    group1: float | None
    diff: float | None
    gap: float | None
    rel_diff: float | None
    passed: bool | None
    details: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "metric": self.metric,
            "group0": self.group0,
            "group1": self.group1,
            "diff": self.diff,
            "gap": self.gap,
            "rel_diff": self.rel_diff,
            "passed": self.passed,
            "details": self.details,
        }


def _result(metric: str, v0, v1, epsilon: float, details=None) -> MetricResult:
    if v0 is None or v1 is None:
        diff = gap = rel = passed = None
    else:
        diff = (v1 - v0) * 100.0
        gap = abs(diff)
        rel = None if v0 == 0 else (v1 - v0) / v0 * 100.0
        passed = gap <= epsilon * 100.0
    return MetricResult(
        metric=metric,
        group0=v0,
        group1=v1,
        diff=diff,
        gap=gap,
        rel_diff=rel,
        passed=passed,
        details=details or {},
    )


def _composite(metric: str, gap01: float | None, epsilon: float, details) -> MetricResult:
    return MetricResult(
        metric=metric,
        group0=None,
        group1=None,
        diff=None,
        gap=None if gap01 is None else gap01 * 100.0,
        rel_diff=None,
        passed=None if gap01 is None else gap01 <= epsilon,
        details=details,
    )


def _group_arrays(d: Dataset, pred: PredictionSet, g: int):
    mask = d.require_group(g)
    return d.y[mask], pred.prob[mask], d.weight[mask]


def _rate(num: float, den: float) -> float | None:
    return None if den == 0 else num / den


def _per_group_value(metric: str, y, p, w) -> float | None:
    if metric == "statistical_parity":
        return _rate(np.sum(w * p), np.sum(w))
    if metric == "equal_opportunity":  # TPR
        return _rate(np.sum(w * p * y), np.sum(w * y))
    if metric == "predictive_equality":  # FPR
        return _rate(np.sum(w * p * (1 - y)), np.sum(w * (1 - y)))
    if metric == "conditional_accuracy":  # P[Y=0 | Yhat=0]
        return _rate(np.sum(w * (1 - p) * (1 - y)), np.sum(w * (1 - p)))
    if metric == "predictive_parity":  # PPV
        return _rate(np.sum(w * p * y), np.sum(w * p))
    if metric == "accuracy_equality":
        return _rate(np.sum(w * (p * y + (1 - p) * (1 - y))), np.sum(w))
    if metric == "treatment_equality":  # FN / FP
        return _rate(np.sum(w * (1 - p) * y), np.sum(w * p * (1 - y)))
    if metric == "equalizing_disincentives":  # TPR - FPR
        tpr = _rate(np.sum(w * p * y), np.sum(w * y))
        fpr = _rate(np.sum(w * p * (1 - y)), np.sum(w * (1 - y)))
        return None if tpr is None or fpr is None else tpr - fpr
    if metric == "phi_fairness":
        tp, fp = np.sum(w * p * y), np.sum(w * p * (1 - y))
        fn, tn = np.sum(w * (1 - p) * y), np.sum(w * (1 - p) * (1 - y))
        den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
        return None if den == 0 else float((tp * tn - fp * fn) / math.sqrt(den))
    raise ValueError(f"unknown per-group metric {metric!r}")


_SCALAR_METRICS = frozenset(
    {
        "statistical_parity",
        "equal_opportunity",
        "predictive_equality",
        "conditional_accuracy",
        "predictive_parity",
        "accuracy_equality",
        "treatment_equality",
        "equalizing_disincentives",
        "phi_fairness",
    }
)


def group_metric(
    metric: str,
    d: Dataset,
    pred: PredictionSet | None = None,
    *,
    epsilon: float = 0.05,
    bins: int = 10,
    legit: Sequence[str] | None = None,
) -> MetricResult:
    """Evaluate one catalog metric; both groups must be present."""
    if metric not in METRICS:
        raise ValueError(f"unknown metric id {metric!r}")
    for g in (0, 1):
        d.require_group(g)

    if metric in _SCALAR_METRICS:
        if pred is None:
            raise ValueError(f"{metric} requires predictions")
        v0 = _per_group_value(metric, *_group_arrays(d, pred, 0))
        v1 = _per_group_value(metric, *_group_arrays(d, pred, 1))
        return _result(metric, v0, v1, epsilon)

    if metric == "equalized_odds":
        if pred is None:
            raise ValueError("equalized_odds requires predictions")
        tpr = [
            _per_group_value("equal_opportunity", *_group_arrays(d, pred, g))
            for g in (0, 1)
        ]
        fpr = [
            _per_group_value("predictive_equality", *_group_arrays(d, pred, g))
            for g in (0, 1)
        ]
        gaps = [abs(a - b) for a, b in (tpr, fpr) if a is not None and b is not None]
        gap = max(gaps) if len(gaps) == 2 else None
        return _composite(
            metric, gap, epsilon, details={"tpr": tpr, "fpr": fpr}
        )

    if metric == "auc_fairness":
        v0 = rocstats.auc(rocstats.roc_curve(d, group=0))
        v1 = rocstats.auc(rocstats.roc_curve(d, group=1))
        return _result(metric, v0, v1, epsilon)

    if metric == "roc_equality":
        res = roc_equality(d)
        gap = max(res.sup_tpr_gap, res.sup_fpr_gap)
        return _composite(
            metric,
            gap,
            epsilon,
            details={"sup_tpr_gap": res.sup_tpr_gap, "sup_fpr_gap": res.sup_fpr_gap},
        )

    if metric in ("class_balance_weak", "class_balance_strong"):
        mode = "weak" if metric.endswith("weak") else "strong"
        per_y = class_balance(d, mode)
        defined = [v for v in per_y.values() if v is not None]
        gap = max(defined) if defined else None
        return _composite(metric, gap, epsilon, details={"per_y": {str(k): v for k, v in per_y.items()}})

    if metric in ("calibration_parity", "good_calibration"):
        cal = calibration(d, bins)
        gap = cal.parity_gap if metric == "calibration_parity" else cal.good_calibration_deviation
        return _composite(metric, gap, epsilon, details={"bins": len(cal.edges) - 1})

    if metric == "conditional_demographic_parity":
        if pred is None:
            raise ValueError("conditional_demographic_parity requires predictions")
        res = conditional_dp(d, pred, legit or d.legit_names)
        gap = None if res["max_gap"] is None else res["max_gap"] / 100.0
        return _composite(metric, gap, epsilon, details={"strata": res["strata"]})

    raise ValueError(f"unhandled metric {metric!r}")


# ---------------------------------------------------------------------------
# Disparate impact, SPD/NSPD and intervals
# ---------------------------------------------------------------------------


@dataclass
class DisparateImpactResult:
    ratio: float
    threshold: float
    flagged: bool
    spd: float
    nspd: float | None
    eod: float | None
    positive_rates: tuple[float, float]
    epsilon: float
    epsilon_fair: bool

    def to_json_dict(self) -> dict:
        return {
            "ratio": self.ratio,
            "threshold": self.threshold,
            "flagged": self.flagged,
            "spd": self.spd,
            "nspd": self.nspd,
            "eod": self.eod,
            "positive_rates": list(self.positive_rates),
            "epsilon": self.epsilon,
            "epsilon_fair": self.epsilon_fair,
        }


def disparate_impact(
    d: Dataset,
    pred: PredictionSet,
    threshold: float = 0.8,
    epsilon: float = 0.05,
) -> DisparateImpactResult:
    """Two-sided disparate-impact ratio with the four-fifths flag.

    Also reports the statistical parity difference (group 1 - group 0), its
    normalized version NSPD = SPD / D_max with
    D_max = min(P[Yhat=1]/P[S=1], P[Yhat=0]/P[S=0]), and the equal
    opportunity difference EOD (TPR_1 - TPR_0).
    """
    y0, p0_, w0 = _group_arrays(d, pred, 0)
    y1, p1_, w1 = _group_arrays(d, pred, 1)
    p0 = float(np.sum(w0 * p0_) / np.sum(w0))
    p1 = float(np.sum(w1 * p1_) / np.sum(w1))
    if p0 > 0 and p1 > 0:
        ratio = min(p0 / p1, p1 / p0)
    else:
        ratio = 0.0

    spd = p1 - p0
    w_all = d.weight
    p_pos = float(np.sum(w_all * pred.prob) / np.sum(w_all))
    p_s1 = float(np.sum(w_all * d.s) / np.sum(w_all))
    dmax_terms = []
    if p_s1 > 0:
        dmax_terms.append(p_pos / p_s1)
    if p_s1 < 1:
        dmax_terms.append((1.0 - p_pos) / (1.0 - p_s1))
    dmax = min(dmax_terms) if dmax_terms else None
    nspd = None if not dmax else spd / dmax

    tpr0 = _per_group_value("equal_opportunity", y0, p0_, w0)
    tpr1 = _per_group_value("equal_opportunity", y1, p1_, w1)
    eod = None if tpr0 is None or tpr1 is None else tpr1 - tpr0

    return DisparateImpactResult(
        ratio=ratio,
        threshold=threshold,
        flagged=ratio < threshold,
        spd=spd,
        nspd=nspd,
        eod=eod,
        positive_rates=(p0, p1),
        epsilon=epsilon,
        epsilon_fair=abs(spd) < epsilon,
    )


def impact_point_estimate(d: Dataset, pred: PredictionSet) -> float:
    """Ratio estimate (sum yhat over s=0 / sum yhat over s=1) * (n1 / n0).

    This is the empirical group-0-over-group-1 positive-rate ratio; weights
    act as replication counts.
    """
    w = d.weight
    m0, m1 = d.require_group(0), d.require_group(1)
    num = float(np.sum(w[m0] * pred.prob[m0]))
    den = float(np.sum(w[m1] * pred.prob[m1]))
    if den == 0:
        raise DegenerateGroupError("no positive predictions in group 1")
    return (num / den) * (float(w[m1].sum()) / float(w[m0].sum()))


@dataclass
class ImpactInterval:
    point: float
    lo: float
    hi: float
    method: str
    level: float
    n_boot: int | None
    seed: int | None

    def to_json_dict(self) -> dict:
        return {
            "point": self.point,
            "lo": self.lo,
            "hi": self.hi,
            "method": self.method,
            "level": self.level,
            "n_boot": self.n_boot,
            "seed": self.seed,
        }


def impact_ci(
    d: Dataset,
    pred: PredictionSet,
    method: str = "bootstrap",
    level: float = 0.95,
    n_boot: int = 1000,
    seed: int = 0,
) -> ImpactInterval:
    """Confidence interval for the disparate-impact ratio.

    "bootstrap": percentile interval over record resampling; resamples that
    lose a group are redrawn (at most 100 retries each).  "asymptotic":
    delta-method normal interval for the ratio of two independent
    proportions.
    """
    point = impact_point_estimate(d, pred)
    if method == "bootstrap":
        if n_boot < 100:
            raise ValueError("bootstrap needs at least 100 replicates")
        n = len(d)
        stats = np.empty(n_boot)
        for b in range(n_boot):
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,)))
            for attempt in range(100):
                idx = rng.integers(0, n, size=n)
                s_b = d.s[idx]
                if (s_b == 0).any() and (s_b == 1).any():
                    break
            else:
                raise DegenerateGroupError(
                    "bootstrap resampling kept losing a group (100 retries)"
                )
            w_b = d.weight[idx]
            p_b = pred.prob[idx]
            num = np.sum(w_b[s_b == 0] * p_b[s_b == 0])
            den = np.sum(w_b[s_b == 1] * p_b[s_b == 1])
            n1 = w_b[s_b == 1].sum()
            n0 = w_b[s_b == 0].sum()
            stats[b] = math.inf if den == 0 else (num / den) * (n1 / n0)
        alpha = 1.0 - level
        with np.errstate(invalid="ignore"):  # inf replicates (no positives)
            lo, hi = np.quantile(stats, [alpha / 2, 1 - alpha / 2])
        return ImpactInterval(point, float(lo), float(hi), "bootstrap", level, n_boot, seed)

    if method == "asymptotic":
        m0, m1 = d.require_group(0), d.require_group(1)
        w = d.weight
        w0, w1 = float(w[m0].sum()), float(w[m1].sum())
        p0 = float(np.sum(w[m0] * pred.prob[m0])) / w0
        p1 = float(np.sum(w[m1] * pred.prob[m1])) / w1
        if p0 <= 0 or p1 <= 0:
            raise DegenerateGroupError("asymptotic interval needs positives in both groups")
        var = point**2 * ((1 - p0) / (w0 * p0) + (1 - p1) / (w1 * p1))
        z = float(norm.ppf((1 + level) / 2))
        half = z * math.sqrt(var)
        return ImpactInterval(
            point, max(point - half, 0.0), point + half, "asymptotic", level, None, None
        )

    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# ROC equality, class balance, calibration, conditional parity
# ---------------------------------------------------------------------------


@dataclass
class RocEqualityResult:
    sup_tpr_gap: float
    sup_fpr_gap: float


def roc_equality(d: Dataset) -> RocEqualityResult:
    """Sup-norm differences between the two group ROC curves.

    The curves are compared as monotone step functions, vertically (largest
    TPR difference at matched FPR) and horizontally (largest FPR difference
    at matched TPR).  Both gaps are zero iff the group curves coincide, and
    the comparison only depends on within-group score ranks.
    """
    c0 = rocstats.roc_curve(d, group=0)
    c1 = rocstats.roc_curve(d, group=1)

    def sup_vertical(a: rocstats.RocCurve, b: rocstats.RocCurve) -> float:
        grid = np.union1d(a.fpr, b.fpr)
        ta = a.tpr[np.searchsorted(a.fpr, grid, side="right") - 1]
        tb = b.tpr[np.searchsorted(b.fpr, grid, side="right") - 1]
        return float(np.max(np.abs(ta - tb)))

    def sup_horizontal(a: rocstats.RocCurve, b: rocstats.RocCurve) -> float:
        grid = np.union1d(a.tpr, b.tpr)
        ia = np.minimum(np.searchsorted(a.tpr, grid, side="left"), len(a.tpr) - 1)
        ib = np.minimum(np.searchsorted(b.tpr, grid, side="left"), len(b.tpr) - 1)
        return float(np.max(np.abs(a.fpr[ia] - b.fpr[ib])))

    return RocEqualityResult(
        sup_tpr_gap=sup_vertical(c0, c1), sup_fpr_gap=sup_horizontal(c0, c1)
    )


def class_balance(d: Dataset, mode: str = "weak") -> dict[int, float | None]:
    """Per-outcome-class score gap between groups.

    weak: absolute difference of conditional mean scores.
    strong: Kolmogorov-Smirnov distance between the conditional score
    distributions (the distance is reported, not a p-value).
    """
    if mode not in ("weak", "strong"):
        raise ValueError(f"mode must be 'weak' or 'strong', got {mode!r}")
    score = d.require_scores()
    out: dict[int, float | None] = {}
    for yv in (0, 1):
        cells = []
        for g in (0, 1):
            mask = (d.y == yv) & (d.s == g)
            if not mask.any():
                cells = None
                break
            cells.append((score[mask], d.weight[mask]))
        if cells is None:
            out[yv] = None
            continue
        if mode == "weak":
            out[yv] = abs(
                weighted_mean(cells[0][0], cells[0][1])
                - weighted_mean(cells[1][0], cells[1][1])
            )
        else:
            out[yv] = ks_distance(cells[0][0], cells[1][0], cells[0][1], cells[1][1])
    return out


@dataclass
class CalibrationResult:
    edges: np.ndarray
    rows: list[dict]
    parity_gap: float | None
    good_calibration_deviation: float | None
    merged_bins: bool

    def to_json_dict(self) -> dict:
        return {
            "edges": self.edges.tolist(),
            "rows": self.rows,
            "parity_gap": self.parity_gap,
            "good_calibration_deviation": self.good_calibration_deviation,
            "merged_bins": self.merged_bins,
        }


def calibration(d: Dataset, bins: int = 10) -> CalibrationResult:
    """Reliability table over quantile bins of the pooled scores.

    parity gap: max over bins (with both groups present) of the inter-group
    difference in observed P[Y=1].  good-calibration deviation: max over
    (group, bin) of |observed P[Y=1] - mean score in the cell|.
    """
    if bins < 1:
        raise ValueError("need at least one bin")
    score = d.require_scores()
    edges = np.unique(np.quantile(score, np.linspace(0.0, 1.0, bins + 1)))
    merged = len(edges) - 1 < bins
    if len(edges) == 1:  # constant score
        edges = np.array([edges[0], edges[0]])
    # interior edges split the bins; the top bin includes the maximum
    bin_idx = np.clip(
        np.searchsorted(edges[1:-1], score, side="right"), 0, len(edges) - 2
    )

    rows = []
    per_bin: dict[int, dict[int, float]] = {}
    deviations = []
    for b in range(len(edges) - 1):
        for g in (0, 1):
            mask = (bin_idx == b) & (d.s == g)
            if not mask.any():
                continue
            w = d.weight[mask]
            obs = float(np.sum(w * d.y[mask]) / np.sum(w))
            mean_score = weighted_mean(score[mask], w)
            rows.append(
                {
                    "bin": b,
                    "lo": float(edges[b]),
                    "hi": float(edges[b + 1]),
                    "group": g,
                    "weight": float(np.sum(w)),
                    "mean_score": mean_score,
                    "observed": obs,
                }
            )
            per_bin.setdefault(b, {})[g] = obs
            deviations.append(abs(obs - mean_score))

    gaps = [
        abs(vals[1] - vals[0]) for vals in per_bin.values() if 0 in vals and 1 in vals
    ]
    return CalibrationResult(
        edges=edges,
        rows=rows,
        parity_gap=max(gaps) if gaps else None,
        good_calibration_deviation=max(deviations) if deviations else None,
        merged_bins=merged,
    )


def conditional_dp(
    d: Dataset, pred: PredictionSet, legit: Sequence[str]
) -> dict:
    """Statistical parity within each stratum of the legitimate columns.

    With no legitimate columns there is a single stratum and the result
    reduces to the global metric.  Strata containing a single group are
    undefined.  The summary is the maximum defined stratum gap (points).
    """
    legit = tuple(legit)
    if not legit:
        keys = np.zeros(len(d), dtype=int)
        levels = [("all",)]
        assignments = keys
    else:
        cols = np.column_stack([d.feature_column(name) for name in legit])
        uniq, assignments = np.unique(cols, axis=0, return_inverse=True)
        levels = [tuple(row.tolist()) for row in uniq]

    strata = []
    gaps = []
    for k, level in enumerate(levels):
        mask = assignments == k
        sub_rates = []
        for g in (0, 1):
            gm = mask & (d.s == g)
            if not gm.any():
                sub_rates = None
                break
            w = d.weight[gm]
            sub_rates.append(float(np.sum(w * pred.prob[gm]) / np.sum(w)))
        entry = {"stratum": list(level), "weight": float(d.weight[mask].sum())}
        if sub_rates is None:
            entry.update({"group0": None, "group1": None, "gap": None})
        else:
            gap = abs(sub_rates[1] - sub_rates[0]) * 100.0
            entry.update(
                {"group0": sub_rates[0], "group1": sub_rates[1], "gap": gap}
            )
            gaps.append(gap)
        strata.append(entry)
    return {"strata": strata, "max_gap": max(gaps) if gaps else None}
