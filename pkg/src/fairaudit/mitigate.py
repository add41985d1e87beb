"""Discrimination correction.

Pre-processing: label massaging, pairwise reweighting, quantile repair.
In-processing: full-batch penalized logistic/probit training.
Post-processing: accuracy-optimal per-group thresholds and randomized
two-threshold mixtures equalizing error rates.

The trainer is deterministic (zero init, backtracking line search); fairness
penalties are quadratic in the relevant correlation so the objective is
smooth and magnitude-penalizing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import log_ndtr, ndtr
from scipy.stats import rankdata

from .data import (
    DataError,
    Dataset,
    DegenerateGroupError,
    Deterministic,
    Randomized,
    ThresholdPolicy,
)
from . import rocstats

__all__ = [
    "LinearModel",
    "PenaltySpec",
    "TrainOptions",
    "train_logistic",
    "MassageResult",
    "massage_labels",
    "ReweighResult",
    "reweigh",
    "RepairPlan",
    "RepairResult",
    "di_remove",
    "ThresholdSearchResult",
    "per_group_thresholds",
    "EqualizedOddsResult",
    "equalize_odds",
]


# ---------------------------------------------------------------------------
# Penalized logistic / probit training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PenaltySpec:
    """Fairness penalty added to the mean log-loss.

    dp_correlation: lam * cor(m(x), s)^2
    eo_correlation: lam0 * cor(m(x), s | y=0)^2 + lam1 * cor(m(x), s | y=1)^2
    dp_maxcor:      lam * R^2(s ~ poly(m(x))), the squared multiple
                    correlation of s on a polynomial basis of the score,
                    i.e. the squared basis-restricted maximal correlation.
    """

    kind: str = "none"
    lam: float = 0.0
    lam0: float = 0.0
    lam1: float = 0.0
    degree: int = 3

    def __post_init__(self):
        if self.kind not in ("none", "dp_correlation", "eo_correlation", "dp_maxcor"):
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        if min(self.lam, self.lam0, self.lam1) < 0:
            raise ValueError("penalty weights must be non-negative")
        if self.degree < 1:
            raise ValueError("polynomial degree must be >= 1")

    @classmethod
    def none(cls) -> "PenaltySpec":
        return cls(kind="none")

    @classmethod
    def dp_correlation(cls, lam: float) -> "PenaltySpec":
        return cls(kind="dp_correlation", lam=lam)

    @classmethod
    def eo_correlation(cls, lam0: float, lam1: float) -> "PenaltySpec":
        return cls(kind="eo_correlation", lam0=lam0, lam1=lam1)

    @classmethod
    def dp_maxcor(cls, lam: float, degree: int = 3) -> "PenaltySpec":
        return cls(kind="dp_maxcor", lam=lam, degree=degree)


@dataclass(frozen=True)
class TrainOptions:
    step: float = 1.0
    tol: float = 1e-7  # gradient-norm stopping rule
    max_iter: int = 2000


@dataclass
class LinearModel:
    """Linear score model on the original feature scale."""

    coef: np.ndarray
    intercept: float
    link: str = "logistic"
    converged: bool = True
    diverged: bool = False
    n_iter: int = 0
    standardization: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coef = np.asarray(self.coef, dtype=float)
        if self.link not in ("logistic", "probit"):
            raise ValueError(f"unknown link {self.link!r}")

    def linear(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.coef):
            raise ValueError("feature matrix does not match coefficient count")
        return X @ self.coef + self.intercept

    def predict_score(self, X: np.ndarray) -> np.ndarray:
        z = self.linear(X)
        if self.link == "logistic":
            return _sigmoid(z)
        return ndtr(z)

    def to_json_dict(self) -> dict:
        return {
            "coef": self.coef.tolist(),
            "intercept": self.intercept,
            "link": self.link,
            "converged": self.converged,
            "diverged": self.diverged,
            "n_iter": self.n_iter,
            "standardization": {
                k: (v.tolist() if isinstance(v, np.ndarray) else v)
                for k, v in self.standardization.items()
            },
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "LinearModel":
        return cls(
            coef=np.asarray(d["coef"], dtype=float),
            intercept=float(d["intercept"]),
            link=d["link"],
            converged=bool(d.get("converged", True)),
            diverged=bool(d.get("diverged", False)),
            n_iter=int(d.get("n_iter", 0)),
            standardization=d.get("standardization", {}),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "LinearModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _loss_and_dz(z: np.ndarray, y: np.ndarray, link: str):
    """Per-record negative log-likelihood and its derivative in z."""
    if link == "logistic":
        # softplus(z) - y z, stable for large |z|
        loss = np.logaddexp(0.0, z) - y * z
        dz = _sigmoid(z) - y
        return loss, dz
    # probit
    log_p = log_ndtr(z)
    log_q = log_ndtr(-z)
    loss = -(y * log_p + (1 - y) * log_q)
    log_phi = -0.5 * z**2 - 0.5 * math.log(2 * math.pi)
    dz = (1 - y) * np.exp(log_phi - log_q) - y * np.exp(log_phi - log_p)
    return loss, dz


def _corr_sq_and_grad(m: np.ndarray, target: np.ndarray, wn: np.ndarray):
    """Squared weighted Pearson correlation of m with a fixed target,
    plus its gradient in m.  Degenerate variance yields (0, 0)."""
    mbar = np.sum(wn * m)
    tbar = np.sum(wn * target)
    dm = m - mbar
    dt = target - tbar
    vm = np.sum(wn * dm**2)
    vt = np.sum(wn * dt**2)
    if vm <= 1e-300 or vt <= 1e-300:
        return 0.0, np.zeros_like(m)
    cov = np.sum(wn * dm * dt)
    c = cov / math.sqrt(vm * vt)
    dc = (wn / math.sqrt(vm)) * (dt / math.sqrt(vt) - c * dm / math.sqrt(vm))
    return c * c, 2.0 * c * dc


def _maxcor_sq_and_grad(m: np.ndarray, svals: np.ndarray, wn: np.ndarray, degree: int):
    """Squared multiple correlation of s on (m, m^2, ..., m^degree) and its
    gradient in m; this is the squared maximal correlation restricted to the
    polynomial span."""
    sbar = np.sum(wn * svals)
    ds = svals - sbar
    vs = np.sum(wn * ds**2)
    if vs <= 1e-300:
        return 0.0, np.zeros_like(m)
    powers = np.arange(1, degree + 1)
    F = m[:, None] ** powers[None, :]
    dF = powers[None, :] * m[:, None] ** (powers[None, :] - 1)
    Fc = F - np.sum(wn[:, None] * F, axis=0)
    g = Fc.T @ (wn * ds)
    A = Fc.T @ (wn[:, None] * Fc)
    A = A + np.eye(degree) * (1e-10 * max(np.trace(A), 1e-30) / degree)
    coef = np.linalg.solve(A, g)
    r2 = float(g @ coef) / vs
    # dR2/dm_i = (2 w_i (dPhi_i . coef) / vs) * (ds_i - Phi_c,i . coef)
    proj = Fc @ coef
    grad = (2.0 * wn * (dF @ coef) / vs) * (ds - proj)
    return r2, grad


def penalty_value_and_grad(
    m: np.ndarray,
    s: np.ndarray,
    y: np.ndarray,
    wn: np.ndarray,
    spec: PenaltySpec,
):
    """Total penalty and its gradient with respect to the score vector."""
    if spec.kind == "none":
        return 0.0, np.zeros_like(m)
    s = np.asarray(s, dtype=float)
    if spec.kind == "dp_correlation":
        val, grad = _corr_sq_and_grad(m, s, wn)
        return spec.lam * val, spec.lam * grad
    if spec.kind == "eo_correlation":
        total, grad = 0.0, np.zeros_like(m)
        for yv, lam in ((0, spec.lam0), (1, spec.lam1)):
            if lam == 0:
                continue
            mask = y == yv
            if mask.sum() < 2:
                continue
            wsub = wn[mask] / wn[mask].sum()
            val_c, grad_c = _corr_sq_and_grad(m[mask], s[mask], wsub)
            total += lam * val_c
            grad[mask] += lam * grad_c
        return total, grad
    if spec.kind == "dp_maxcor":
        val, grad = _maxcor_sq_and_grad(m, s, wn, spec.degree)
        return spec.lam * val, spec.lam * grad
    raise ValueError(f"unknown penalty kind {spec.kind!r}")


def objective_value_and_grad(
    theta: np.ndarray,
    Xs: np.ndarray,
    y: np.ndarray,
    s: np.ndarray,
    wn: np.ndarray,
    spec: PenaltySpec,
    link: str,
):
    """Mean log-loss plus penalty; gradient over (coefficients, intercept)."""
    z = Xs @ theta[:-1] + theta[-1]
    loss, dz = _loss_and_dz(z, y, link)
    value = float(np.sum(wn * loss))
    grad_z = wn * dz
    if spec.kind != "none":
        if link == "logistic":
            m = _sigmoid(z)
            dmdz = m * (1.0 - m)
        else:
            m = ndtr(z)
            dmdz = np.exp(-0.5 * z**2) / math.sqrt(2 * math.pi)
        pval, pgrad_m = penalty_value_and_grad(m, s, y, wn, spec)
        value += pval
        grad_z = grad_z + pgrad_m * dmdz
    grad = np.empty(len(theta))
    grad[:-1] = Xs.T @ grad_z
    grad[-1] = np.sum(grad_z)
    return value, grad


def train_logistic(
    d: Dataset,
    penalty: PenaltySpec = PenaltySpec.none(),
    opts: TrainOptions = TrainOptions(),
    link: str = "logistic",
) -> LinearModel:
    """Fit a linear score model by full-batch gradient descent.

    Features are standardized internally; the returned coefficients live on
    the original scale.  Backtracking (Armijo) line search makes the run
    deterministic.  An active fairness penalty is warm-started at the
    unpenalized optimum: the correlation penalties are scale-free, so from a
    zero init no descent direction improves on the raw loss gradient and the
    search would stall at the constant model.

    Perfectly separable data has no finite optimum; that is detected (zero
    training error with strict margins, plus a coefficient-norm cap of 1e3
    on the standardized scale) and reported via the ``diverged`` flag.
    """
    if d.features is None:
        raise DataError("training requires feature columns")
    if np.isnan(d.features).any():
        raise DataError("training requires complete features (no missing values)")
    if len(np.unique(d.y)) < 2:
        raise DegenerateGroupError("training requires both label classes")

    X = d.features
    wn = d.weight / d.weight.sum()
    mu = np.sum(wn[:, None] * X, axis=0)
    sd = np.sqrt(np.sum(wn[:, None] * (X - mu) ** 2, axis=0))
    sd = np.where(sd > 0, sd, 1.0)
    Xs = (X - mu) / sd
    y = d.y.astype(float)

    penalty_active = penalty.kind != "none" and max(
        penalty.lam, penalty.lam0, penalty.lam1
    ) > 0
    if penalty_active:
        base = train_logistic(d, PenaltySpec.none(), opts, link)
        theta = np.concatenate(
            (base.coef * sd, [base.intercept + float(np.sum(base.coef * mu))])
        )
    else:
        theta = np.zeros(X.shape[1] + 1)
    step = opts.step
    converged = False
    diverged = False
    it = 0
    value, grad = objective_value_and_grad(theta, Xs, y, d.s, wn, penalty, link)
    for it in range(1, opts.max_iter + 1):
        gnorm = float(np.linalg.norm(grad))
        if gnorm < opts.tol:
            converged = True
            break
        step = min(step * 2.0, 1e4)
        while True:
            cand = theta - step * grad
            cand_value, cand_grad = objective_value_and_grad(
                cand, Xs, y, d.s, wn, penalty, link
            )
            if cand_value <= value - 1e-4 * step * gnorm**2:
                break
            step *= 0.5
            if step < 1e-20:
                cand, cand_value, cand_grad = theta, value, grad
                break
        if step < 1e-20:
            break
        theta, value, grad = cand, cand_value, cand_grad
        if np.linalg.norm(theta) > 1e3:
            diverged = True
            break

    if not penalty_active and not diverged:
        z = Xs @ theta[:-1] + theta[-1]
        separated = bool((z != 0).all() and ((z > 0) == (y == 1)).all())
        if separated:  # separable data: the optimum lies at infinity
            diverged = True
            converged = False

    beta = theta[:-1] / sd
    intercept = float(theta[-1] - np.sum(theta[:-1] * mu / sd))
    return LinearModel(
        coef=beta,
        intercept=intercept,
        link=link,
        converged=converged,
        diverged=diverged,
        n_iter=it,
        standardization={"mean": mu, "scale": sd},
    )


# ---------------------------------------------------------------------------
# Label massaging
# ---------------------------------------------------------------------------


@dataclass
class MassageResult:
    dataset: Dataset
    swaps: list[tuple[int, int]]  # (demoted index, promoted index)
    gap: float
    reached_target: bool
    threshold: float


def massage_labels(
    d: Dataset,
    scores: np.ndarray | None = None,
    eps: float = 0.0,
    threshold: float | None = None,
) -> MassageResult:
    """Swap labels near the decision boundary until the group label rates
    agree within eps.

    Each step demotes the higher-rate group's positive closest to the
    boundary and promotes the lower-rate group's negative closest to it, so
    the overall number of positive labels never changes.  When the target is
    infeasible the best achieved dataset is returned with
    ``reached_target=False``.
    """
    for g in (0, 1):
        d.require_group(g)
    if scores is None:
        scores = d.score if d.score is not None else train_logistic(d).predict_score(d.features)
    scores = np.asarray(scores, dtype=float)
    if threshold is None:
        curve = rocstats.roc_curve(d.with_(score=scores))
        threshold, _ = rocstats.best_accuracy_threshold(
            curve, n_weight=curve.neg_total, p_weight=curve.pos_total
        )

    y = d.y.copy()
    w = d.weight
    boundary_dist = np.abs(scores - threshold)

    def rate(g: int) -> float:
        mask = d.s == g
        return float(np.sum(w[mask] * y[mask]) / np.sum(w[mask]))

    swaps: list[tuple[int, int]] = []
    gap = abs(rate(0) - rate(1))
    reached = gap <= eps
    max_swaps = int(np.sum(d.y))
    while gap > eps and len(swaps) < max_swaps:
        hi = 0 if rate(0) > rate(1) else 1
        lo = 1 - hi
        demote_pool = np.flatnonzero((d.s == hi) & (y == 1))
        promote_pool = np.flatnonzero((d.s == lo) & (y == 0))
        if len(demote_pool) == 0 or len(promote_pool) == 0:
            break
        demote = demote_pool[np.argmin(boundary_dist[demote_pool])]
        promote = promote_pool[np.argmin(boundary_dist[promote_pool])]
        y[demote], y[promote] = 0, 1
        new_gap = abs(rate(0) - rate(1))
        if new_gap >= gap:  # weights can make a swap counterproductive
            y[demote], y[promote] = 1, 0
            break
        swaps.append((int(demote), int(promote)))
        gap = new_gap
        if gap <= eps:
            reached = True
    return MassageResult(
        dataset=d.with_(y=y),
        swaps=swaps,
        gap=gap,
        reached_target=reached,
        threshold=float(threshold),
    )


# ---------------------------------------------------------------------------
# Reweighting
# ---------------------------------------------------------------------------


@dataclass
class ReweighResult:
    dataset: Dataset
    factors: dict[tuple[int, int], float]


def reweigh(d: Dataset) -> ReweighResult:
    """Attach weights w(s, y) = P[S=s] P[Y=y] / P[S=s, Y=y].

    The reweighted empirical joint of (s, y) factorizes exactly.  Factors
    multiply any existing weights, so repeated corrections compose.
    """
    W = d.weight.sum()
    factors: dict[tuple[int, int], float] = {}
    for sv in (0, 1):
        for yv in (0, 1):
            cell = (d.s == sv) & (d.y == yv)
            if not cell.any():
                raise DegenerateGroupError(f"cell (s={sv}, y={yv}) is empty")
            p_cell = d.weight[cell].sum() / W
            p_s = d.weight[d.s == sv].sum() / W
            p_y = d.weight[d.y == yv].sum() / W
            factors[(sv, yv)] = float(p_s * p_y / p_cell)
    new_w = d.weight * np.array([factors[(sv, yv)] for sv, yv in zip(d.s, d.y)])
    return ReweighResult(dataset=d.with_(weight=new_w), factors=factors)


# ---------------------------------------------------------------------------
# Quantile repair (disparate-impact suppression)
# ---------------------------------------------------------------------------


@dataclass
class RepairPlan:
    """Per-feature per-group quantile maps toward the quantile average."""

    amount: float
    maps: dict[str, dict[int, tuple[np.ndarray, np.ndarray]]]  # name -> g -> (levels, values)


@dataclass
class RepairResult:
    dataset: Dataset
    plan: RepairPlan


def _quantile_grid(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Midrank plotting positions and sorted values: the empirical quantile
    function with linear interpolation between order statistics."""
    n = len(values)
    levels = (np.arange(n) + 0.5) / n
    return levels, np.sort(values, kind="stable")


def di_remove(
    d: Dataset, features: Sequence[str] | None = None, amount: float = 1.0
) -> RepairResult:
    """Move each group's feature distribution toward the two-group quantile
    average: x -> (1-amount) x + amount * F_m^{-1}(F_g(x)).

    Within-group ranks are preserved; amount 0 is the identity and amount 1
    aligns the group distributions up to grid granularity.
    """
    if not 0.0 <= amount <= 1.0:
        raise ValueError("amount must lie in [0, 1]")
    if d.features is None:
        raise DataError("repair requires feature columns")
    for g in (0, 1):
        d.require_group(g)
    names = tuple(features) if features is not None else d.feature_names
    for name in names:
        if name not in d.feature_names:
            raise DataError(f"no feature column named {name!r}")

    new_feats = d.features.copy()
    maps: dict[str, dict[int, tuple[np.ndarray, np.ndarray]]] = {}
    masks = {g: d.s == g for g in (0, 1)}
    for name in names:
        j = d.feature_names.index(name)
        col = d.features[:, j]
        if np.isnan(col).any():
            raise DataError(f"feature {name!r} has missing values")
        grids = {g: _quantile_grid(col[masks[g]]) for g in (0, 1)}
        maps[name] = grids
        for g in (0, 1):
            vals = col[masks[g]]
            # own midrank level of every record (ties share their mean rank)
            q = (rankdata(vals, method="average") - 0.5) / len(vals)
            target = 0.5 * (
                np.interp(q, *grids[0]) + np.interp(q, *grids[1])
            )
            new_feats[masks[g], j] = (1.0 - amount) * vals + amount * target

    return RepairResult(
        dataset=d.with_(features=new_feats),
        plan=RepairPlan(amount=amount, maps=maps),
    )


# ---------------------------------------------------------------------------
# Per-group deterministic thresholds
# ---------------------------------------------------------------------------


@dataclass
class ThresholdSearchResult:
    policy: ThresholdPolicy
    values: tuple[float, float]  # equalized quantity per group
    gap: float
    accuracy: float
    granular: bool  # exact equalization was unattainable
    degenerate: bool  # equalization only at an all-or-nothing rule


def _threshold_scan(m, y, w):
    """Cumulative statistics for every candidate threshold over one sample.

    Candidates are 1.0, the midpoints between consecutive distinct scores
    (descending) and 0.0, under the strict score > t rule.  Returns
    (thresholds, weight above, positive weight above, weighted correct).
    """
    order = np.argsort(-m, kind="stable")
    ms, ys, ws = m[order], y[order], w[order]
    distinct, first_idx = np.unique(-ms, return_index=True)
    distinct = -distinct
    cut = np.append(first_idx[1:], len(ms))

    cum_w = np.cumsum(ws)
    cum_pos = np.cumsum(ws * ys)
    above_w = np.concatenate(([0.0], cum_w[cut - 1]))
    above_pos = np.concatenate(([0.0], cum_pos[cut - 1]))
    mids = (distinct[:-1] + distinct[1:]) / 2.0
    thresholds = np.concatenate(([1.0], mids, [0.0]))
    if distinct[-1] == 0.0:  # t = 0 keeps zero-score records negative
        above_w[-1] = above_w[-2]
        above_pos[-1] = above_pos[-2]

    pos_total = float(cum_pos[-1])
    neg_total = float(cum_w[-1] - cum_pos[-1])
    correct = above_pos + (neg_total - (above_w - above_pos))
    return thresholds, above_w, above_pos, correct, float(cum_w[-1]), pos_total


def _group_threshold_table(d: Dataset, g: int, objective: str):
    """Candidate thresholds for one group with the objective value (positive
    rate or TPR) and weighted correct count at each; per distinct objective
    value only the best-accuracy (then largest) threshold is kept."""
    mask = d.s == g
    m = d.require_scores()[mask]
    y = d.y[mask]
    w = d.weight[mask]
    thr, above_w, above_pos, correct, total_w, pos_total = _threshold_scan(m, y, w)
    if objective == "dp":
        value = above_w / total_w
    else:  # eo_tpr
        value = above_pos / pos_total

    # keep the best (correct, threshold) representative per distinct value
    order = np.lexsort((thr, correct, value))
    v_sorted = value[order]
    uniq, first = np.unique(v_sorted, return_index=True)
    last = np.append(first[1:], len(v_sorted)) - 1
    idx = order[last]
    return value[idx], correct[idx], thr[idx]


def per_group_thresholds(d: Dataset, objective: str = "dp") -> ThresholdSearchResult:
    """Deterministic per-group thresholds equalizing positive rates ("dp")
    or true positive rates ("eo_tpr") while maximizing total accuracy.

    The gap is minimized first (its floor is set by the group grids, about
    1/min group size), then accuracy, then the larger thresholds.
    """
    if objective not in ("dp", "eo_tpr"):
        raise ValueError(f"objective must be 'dp' or 'eo_tpr', got {objective!r}")
    for g in (0, 1):
        d.require_group(g)
    if objective == "eo_tpr":
        for g in (0, 1):
            if not ((d.s == g) & (d.y == 1)).any():
                raise DegenerateGroupError(f"group {g} has no positives")

    v0, c0, t0 = _group_threshold_table(d, 0, objective)
    v1, c1, t1 = _group_threshold_table(d, 1, objective)

    best_key = None
    best_pair = None
    for i, val0 in enumerate(v0):
        j = int(np.searchsorted(v1, val0))
        for jj in (j - 1, j, j + 1):
            if not 0 <= jj < len(v1):
                continue
            gap = abs(val0 - v1[jj])
            key = (round(gap, 15), -(c0[i] + c1[jj]), -t0[i], -t1[jj])
            if best_key is None or key < best_key:
                best_key = key
                best_pair = (i, jj)

    i, j = best_pair
    gap = float(abs(v0[i] - v1[j]))
    total_w = float(d.weight.sum())
    policy = ThresholdPolicy.per_group(float(t0[i]), float(t1[j]))
    return ThresholdSearchResult(
        policy=policy,
        values=(float(v0[i]), float(v1[j])),
        gap=gap,
        accuracy=float((c0[i] + c1[j]) / total_w),
        granular=gap > 0.0,
        degenerate=any(v in (0.0, 1.0) for v in (v0[i], v1[j])),
    )


# ---------------------------------------------------------------------------
# Randomized equalized-odds post-processing
# ---------------------------------------------------------------------------


@dataclass
class EqualizedOddsResult:
    policy: ThresholdPolicy
    target: tuple[float, float]  # (fpr, tpr) the policy realizes
    realized: dict[int, tuple[float, float]]
    tpr_gap: float
    fpr_gap: float
    accuracy: float
    degenerate: bool
    mixed: bool  # some group needed a strict two-threshold mixture


@dataclass(frozen=True)
class _GroupGeometry:
    thresholds: np.ndarray  # policy-legal, decreasing
    fpr: np.ndarray
    tpr: np.ndarray
    hull: np.ndarray  # indices of upper-hull vertices
    neg_w: float
    pos_w: float


def _group_geometry(d: Dataset, g: int) -> _GroupGeometry:
    curve = rocstats.roc_curve(d, group=g)
    thr = curve.thresholds.copy()
    fpr = curve.fpr.copy()
    tpr = curve.tpr.copy()
    thr[0] = 1.0  # identical decisions: no score exceeds 1
    # the all-positive endpoint needs t < min score; t = 0 is the closest
    # policy-legal rule and only differs when some record scores exactly 0
    mask = d.s == g
    m = d.require_scores()[mask]
    y = d.y[mask]
    w = d.weight[mask]
    if m.min() > 0:
        thr[-1] = 0.0
    else:
        pos = m > 0
        fpr[-1] = np.sum(w[pos & (y == 0)]) / curve.neg_total
        tpr[-1] = np.sum(w[pos & (y == 1)]) / curve.pos_total
        thr[-1] = 0.0
    # drop consecutive duplicate points, keeping the largest threshold
    keep = np.concatenate(([True], (np.diff(fpr) != 0) | (np.diff(tpr) != 0)))
    thr, fpr, tpr = thr[keep], fpr[keep], tpr[keep]

    hull = [0]
    for i in range(1, len(fpr)):
        while len(hull) >= 2:
            o, a = hull[-2], hull[-1]
            cross = (fpr[a] - fpr[o]) * (tpr[i] - tpr[o]) - (tpr[a] - tpr[o]) * (
                fpr[i] - fpr[o]
            )
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return _GroupGeometry(
        thresholds=thr,
        fpr=fpr,
        tpr=tpr,
        hull=np.asarray(hull),
        neg_w=curve.neg_total,
        pos_w=curve.pos_total,
    )


_MAX_CHORD_ANCHORS = 256


def _segments(geo: _GroupGeometry) -> list[tuple[int, int]]:
    """Realizable two-threshold segments: envelope edges plus chords from the
    all-negative point to raw points and from raw points to the all-positive
    point.

    On desk-scale data every raw point anchors a chord; beyond
    _MAX_CHORD_ANCHORS the anchors are thinned to an even deterministic
    subsample (plus all hull vertices), which keeps the pairwise
    intersection sweep quadratic in a constant.  Random-instance experiments
    put the accuracy shortfall of this candidate family versus the
    unconstrained hull-intersection optimum below 1e-3.
    """
    segs = [(int(geo.hull[k]), int(geo.hull[k + 1])) for k in range(len(geo.hull) - 1)]
    first, last = 0, len(geo.fpr) - 1
    n = len(geo.fpr)
    if n <= _MAX_CHORD_ANCHORS:
        anchors = range(n)
    else:
        step = max(1, n // _MAX_CHORD_ANCHORS)
        anchors = sorted(set(range(0, n, step)) | set(int(v) for v in geo.hull) | {last})
    for i in anchors:
        if i != first:
            segs.append((first, i))
        if i != last:
            segs.append((i, last))
    # dedupe
    return sorted(set(segs))


def _point(geo: _GroupGeometry, i: int) -> np.ndarray:
    return np.array([geo.fpr[i], geo.tpr[i]])


def _rule_from_mix(geo: _GroupGeometry, i: int, j: int, u: float):
    """Rule realizing (1-u) * point_i + u * point_j for this group."""
    if u <= 1e-12:
        return Deterministic(float(geo.thresholds[i])), False
    if u >= 1.0 - 1e-12:
        return Deterministic(float(geo.thresholds[j])), False
    ti, tj = float(geo.thresholds[i]), float(geo.thresholds[j])
    # probability p applies to the lower threshold (the larger point)
    if ti < tj:
        rule = Randomized(t_lo=ti, t_hi=tj, p=1.0 - u)
    else:
        rule = Randomized(t_lo=tj, t_hi=ti, p=u)
    return rule, True


def _realized(geo: _GroupGeometry, i: int, j: int, u: float) -> np.ndarray:
    return (1.0 - u) * _point(geo, i) + u * _point(geo, j)


def _intersect(p0, p1, q0, q1):
    """Intersections of two segments, as (u, v) parameter pairs.

    Returns a list; collinear overlaps contribute their overlap endpoints.
    """
    r = p1 - p0
    s = q1 - q0
    denom = r[0] * s[1] - r[1] * s[0]
    diff = q0 - p0
    if abs(denom) > 1e-14:
        u = (diff[0] * s[1] - diff[1] * s[0]) / denom
        v = (diff[0] * r[1] - diff[1] * r[0]) / denom
        if -1e-12 <= u <= 1 + 1e-12 and -1e-12 <= v <= 1 + 1e-12:
            return [(min(max(u, 0.0), 1.0), min(max(v, 0.0), 1.0))]
        return []
    # parallel: collinear iff diff is parallel to r
    if abs(diff[0] * r[1] - diff[1] * r[0]) > 1e-12:
        return []
    rr = float(r @ r)
    if rr == 0:
        return []
    tq0 = float(diff @ r) / rr
    tq1 = float((q1 - p0) @ r) / rr
    lo, hi = min(tq0, tq1), max(tq0, tq1)
    a, b = max(0.0, lo), min(1.0, hi)
    if a > b:
        return []
    out = []
    for u in {a, b}:
        point = p0 + u * r
        ss = float(s @ s)
        v = float((point - q0) @ s) / ss if ss > 0 else 0.0
        if -1e-9 <= v <= 1 + 1e-9:
            out.append((u, min(max(v, 0.0), 1.0)))
    return out


def equalize_odds(d: Dataset, criterion: str = "full") -> EqualizedOddsResult:
    """Randomized post-processing equalizing group error rates.

    "full": find the accuracy-best point that both groups can realize
    exactly with a two-threshold mixture (intersections of the realizable
    segment families: envelope edges and all-or-nothing chords), so the
    realized |TPR gap| and |FPR gap| vanish up to float rounding.

    "opportunity": equalize TPR only; the common TPR is chosen on the merged
    grid of envelope vertex TPRs to maximize accuracy, and each group
    realizes it on its own envelope (mixing two thresholds when the value
    falls between vertices).
    """
    if criterion not in ("full", "opportunity"):
        raise ValueError(f"criterion must be 'full' or 'opportunity', got {criterion!r}")
    geo = {g: _group_geometry(d, g) for g in (0, 1)}
    pos_w = geo[0].pos_w + geo[1].pos_w
    neg_w = geo[0].neg_w + geo[1].neg_w
    total_w = pos_w + neg_w

    def accuracy(f: float, t: float) -> float:
        return (t * pos_w + (1.0 - f) * neg_w) / total_w

    degenerate = all(len(geo[g].hull) <= 2 for g in (0, 1))

    if criterion == "opportunity":
        taus = np.unique(
            np.concatenate([geo[g].tpr[geo[g].hull] for g in (0, 1)])
        )
        taus = taus[taus <= min(geo[g].tpr[geo[g].hull][-1] for g in (0, 1)) + 1e-15]

        def env_at_tpr(g: int, tau: float):
            hull = geo[g].hull
            tprs = geo[g].tpr[hull]
            k = int(np.searchsorted(tprs, tau, side="left"))
            k = min(k, len(hull) - 1)
            if abs(tprs[k] - tau) <= 1e-15:
                return float(geo[g].fpr[hull[k]]), (int(hull[k]), int(hull[k]), 0.0)
            i, j = int(hull[max(k - 1, 0)]), int(hull[k])
            span = geo[g].tpr[j] - geo[g].tpr[i]
            u = 0.0 if span == 0 else (tau - geo[g].tpr[i]) / span
            u = min(max(u, 0.0), 1.0)
            f = (1 - u) * geo[g].fpr[i] + u * geo[g].fpr[j]
            return float(f), (i, j, float(u))

        best = None
        for tau in taus:
            f0, mix0 = env_at_tpr(0, float(tau))
            f1, mix1 = env_at_tpr(1, float(tau))
            acc = (tau * pos_w + (1 - f0) * geo[0].neg_w + (1 - f1) * geo[1].neg_w) / total_w
            key = (acc, -(f0 + f1), tau)
            if best is None or key > best[0]:
                best = (key, tau, (mix0, mix1))
        _, tau, (mix0, mix1) = best
        rules, mixed, realized = {}, False, {}
        for g, mix in ((0, mix0), (1, mix1)):
            rule, is_mix = _rule_from_mix(geo[g], *mix)
            rules[g] = rule
            mixed = mixed or is_mix
            realized[g] = tuple(_realized(geo[g], *mix).tolist())
        tpr_gap = abs(realized[0][1] - realized[1][1])
        fpr_gap = abs(realized[0][0] - realized[1][0])
        acc = (
            realized[0][1] * geo[0].pos_w
            + realized[1][1] * geo[1].pos_w
            + (1 - realized[0][0]) * geo[0].neg_w
            + (1 - realized[1][0]) * geo[1].neg_w
        ) / total_w
        return EqualizedOddsResult(
            policy=ThresholdPolicy(rules=rules),
            target=(float((realized[0][0] + realized[1][0]) / 2), float(tau)),
            realized=realized,
            tpr_gap=tpr_gap,
            fpr_gap=fpr_gap,
            accuracy=acc,
            degenerate=degenerate,
            mixed=mixed,
        )

    # full equalized odds: candidates are intersections of the two groups'
    # realizable segment families, solved for all pairs at once
    segs = {g: np.asarray(_segments(geo[g]), dtype=int) for g in (0, 1)}
    A0 = np.column_stack([geo[0].fpr[segs[0][:, 0]], geo[0].tpr[segs[0][:, 0]]])
    A1 = np.column_stack([geo[0].fpr[segs[0][:, 1]], geo[0].tpr[segs[0][:, 1]]])
    B0 = np.column_stack([geo[1].fpr[segs[1][:, 0]], geo[1].tpr[segs[1][:, 0]]])
    B1 = np.column_stack([geo[1].fpr[segs[1][:, 1]], geo[1].tpr[segs[1][:, 1]]])
    r = A1 - A0
    s = B1 - B0
    denom = r[:, None, 0] * s[None, :, 1] - r[:, None, 1] * s[None, :, 0]
    diff0 = B0[None, :, 0] - A0[:, None, 0]
    diff1 = B0[None, :, 1] - A0[:, None, 1]
    cross_s = diff0 * s[None, :, 1] - diff1 * s[None, :, 0]
    cross_r = diff0 * r[:, None, 1] - diff1 * r[:, None, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = cross_s / denom
        v = cross_r / denom
    tol = 1e-12
    proper = (np.abs(denom) > 1e-14) & (u >= -tol) & (u <= 1 + tol) & (v >= -tol) & (v <= 1 + tol)

    cands: list[tuple[tuple, tuple, tuple]] = []
    ii, jj = np.nonzero(proper)
    if len(ii):
        uu = np.clip(u[ii, jj], 0.0, 1.0)
        vv = np.clip(v[ii, jj], 0.0, 1.0)
        xs = (1 - uu)[:, None] * A0[ii] + uu[:, None] * A1[ii]
        accs = (xs[:, 1] * pos_w + (1.0 - xs[:, 0]) * neg_w) / total_w
        n_mixed = ((uu > tol) & (uu < 1 - tol)).astype(int) + (
            (vv > tol) & (vv < 1 - tol)
        ).astype(int)
        for k in range(len(ii)):
            cands.append(
                (
                    (-accs[k], xs[k, 0], n_mixed[k]),
                    (int(segs[0][ii[k], 0]), int(segs[0][ii[k], 1]), float(uu[k])),
                    (int(segs[1][jj[k], 0]), int(segs[1][jj[k], 1]), float(vv[k])),
                )
            )
    # collinear overlapping pairs contribute their overlap endpoints
    ci, cj = np.nonzero((np.abs(denom) <= 1e-14) & (np.abs(cross_r) <= 1e-12))
    for i, j in zip(ci.tolist(), cj.tolist()):
        for uo, vo in _intersect(A0[i], A1[i], B0[j], B1[j]):
            x = (1 - uo) * A0[i] + uo * A1[i]
            acc = accuracy(x[0], x[1])
            n_mixed = sum(1 for t in (uo, vo) if tol < t < 1 - tol)
            cands.append(
                (
                    (-acc, float(x[0]), n_mixed),
                    (int(segs[0][i, 0]), int(segs[0][i, 1]), float(uo)),
                    (int(segs[1][j, 0]), int(segs[1][j, 1]), float(vo)),
                )
            )

    best = min(cands, key=lambda c: c[0])
    _, mix0, mix1 = best
    rules, mixed, realized = {}, False, {}
    for g, mix in ((0, mix0), (1, mix1)):
        rule, is_mix = _rule_from_mix(geo[g], *mix)
        rules[g] = rule
        mixed = mixed or is_mix
        realized[g] = tuple(_realized(geo[g], *mix).tolist())
    tpr_gap = abs(realized[0][1] - realized[1][1])
    fpr_gap = abs(realized[0][0] - realized[1][0])
    target = (
        float((realized[0][0] + realized[1][0]) / 2),
        float((realized[0][1] + realized[1][1]) / 2),
    )
    return EqualizedOddsResult(
        policy=ThresholdPolicy(rules=rules),
        target=target,
        realized=realized,
        tpr_gap=tpr_gap,
        fpr_gap=fpr_gap,
        accuracy=accuracy(*target),
        degenerate=degenerate,
        mixed=mixed,
    )
