"""Dataset model, CSV ingestion and score-to-decision thresholding.

The data model is deliberately small: every record carries a binary group
label ``s``, a binary outcome ``y``, an optional score in [0, 1], an
optional numeric feature vector and a positive weight (default 1).  All
downstream statistics are weight sums, so reweighting composes without
special cases.

Score orientation is fixed: large scores are associated with ``y = 1``.
Credit-score-style data (high score = low risk) can be flipped at load
time with ``ColumnSchema(flip_score=True)``.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

__all__ = [
    "DataError",
    "DegenerateGroupError",
    "Record",
    "Dataset",
    "ColumnSchema",
    "Deterministic",
    "Randomized",
    "ThresholdPolicy",
    "PredictionSet",
    "ValidationReport",
    "load_csv",
    "apply_policy",
    "validate",
    "dataset_to_csv",
    "load_toy",
    "TOY_CSV",
    "TOY_THRESHOLD",
]


class DataError(ValueError):
    """Malformed input data (maps to CLI exit code 2)."""


class DegenerateGroupError(ValueError):
    """A computation requires a group/class that is empty (CLI exit code 3)."""


@dataclass(frozen=True)
class Record:
    """One observation: group, outcome, optional score/features, weight."""

    s: int
    y: int
    score: float | None = None
    features: tuple[float, ...] | None = None
    weight: float = 1.0

    def __post_init__(self):
        if self.s not in (0, 1):
            raise DataError(f"s must be 0 or 1, got {self.s!r}")
        if self.y not in (0, 1):
            raise DataError(f"y must be 0 or 1, got {self.y!r}")
        if self.score is not None and not (0.0 <= self.score <= 1.0):
            raise DataError(f"score must lie in [0, 1], got {self.score!r}")
        if not self.weight > 0:
            raise DataError(f"weight must be positive, got {self.weight!r}")


class Dataset:
    """Immutable, array-backed sequence of records.

    Row order is preserved from the source.  Group-conditional operations
    raise :class:`DegenerateGroupError` when the requested group is empty.
    """

    def __init__(
        self,
        s: Sequence[int],
        y: Sequence[int],
        score: Sequence[float] | None = None,
        features: np.ndarray | None = None,
        weight: Sequence[float] | None = None,
        feature_names: Sequence[str] = (),
        legit_names: Sequence[str] = (),
    ):
        self.s = np.asarray(s, dtype=np.int64)
        self.y = np.asarray(y, dtype=np.int64)
        n = len(self.s)
        if n == 0:
            raise DataError("no records")
        if len(self.y) != n:
            raise DataError("s and y must have equal length")
        if not np.isin(self.s, (0, 1)).all():
            raise DataError("s values must be 0 or 1")
        if not np.isin(self.y, (0, 1)).all():
            raise DataError("y values must be 0 or 1")

        self.score = None if score is None else np.asarray(score, dtype=float)
        if self.score is not None:
            if len(self.score) != n:
                raise DataError("score column length mismatch")
            bad = ~((self.score >= 0.0) & (self.score <= 1.0))
            if bad.any():
                raise DataError(
                    f"score outside [0, 1] in row {int(np.argmax(bad)) + 1}"
                )

        self.features = None if features is None else np.asarray(features, dtype=float)
        if self.features is not None and self.features.shape[0] != n:
            raise DataError("feature matrix length mismatch")

        self.weight = (
            np.ones(n) if weight is None else np.asarray(weight, dtype=float)
        )
        if len(self.weight) != n:
            raise DataError("weight column length mismatch")
        if not (self.weight > 0).all():
            raise DataError(
                f"non-positive weight in row {int(np.argmax(~(self.weight > 0))) + 1}"
            )

        self.feature_names = tuple(feature_names)
        if self.features is not None:
            if not self.feature_names:
                self.feature_names = tuple(f"x{j}" for j in range(self.features.shape[1]))
            elif len(self.feature_names) != self.features.shape[1]:
                raise DataError("feature_names length mismatch")
        self.legit_names = tuple(legit_names)
        unknown = set(self.legit_names) - set(self.feature_names)
        if unknown:
            raise DataError(f"legitimate columns not present: {sorted(unknown)}")

        for arr in (self.s, self.y, self.score, self.features, self.weight):
            if arr is not None:
                arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.s)

    def __getitem__(self, i: int) -> Record:
        return Record(
            s=int(self.s[i]),
            y=int(self.y[i]),
            score=None if self.score is None else float(self.score[i]),
            features=None if self.features is None else tuple(self.features[i]),
            weight=float(self.weight[i]),
        )

    def records(self) -> Iterator[Record]:
        return (self[i] for i in range(len(self)))

    def group_mask(self, g: int) -> np.ndarray:
        return self.s == g

    def require_group(self, g: int) -> np.ndarray:
        mask = self.group_mask(g)
        if not mask.any():
            raise DegenerateGroupError(f"group {g} is empty")
        return mask

    def require_scores(self) -> np.ndarray:
        if self.score is None:
            raise DataError("operation requires a score column")
        return self.score

    def feature_column(self, name: str) -> np.ndarray:
        if self.features is None or name not in self.feature_names:
            raise DataError(f"no feature column named {name!r}")
        return self.features[:, self.feature_names.index(name)]

    def with_(self, **kw) -> "Dataset":
        """Copy with some arrays replaced (used by mitigation steps)."""
        args = dict(
            s=self.s,
            y=self.y,
            score=self.score,
            features=self.features,
            weight=self.weight,
            feature_names=self.feature_names,
            legit_names=self.legit_names,
        )
        args.update(kw)
        return Dataset(**args)

    @classmethod
    def from_records(cls, records: Sequence[Record], **kw) -> "Dataset":
        have_scores = all(r.score is not None for r in records)
        have_feats = all(r.features is not None for r in records)
        return cls(
            s=[r.s for r in records],
            y=[r.y for r in records],
            score=[r.score for r in records] if have_scores else None,
            features=np.array([r.features for r in records]) if have_feats else None,
            weight=[r.weight for r in records],
            **kw,
        )


@dataclass(frozen=True)
class ColumnSchema:
    """Maps CSV columns onto the data model.

    Unless ``feature_cols`` is given, every numeric column that is not the
    group, outcome, score or weight column becomes a feature.
    """

    s_col: str = "s"
    y_col: str = "y"
    score_col: str | None = "score"
    weight_col: str | None = "w"
    feature_cols: Sequence[str] | None = None
    legit_cols: Sequence[str] = ()
    flip_score: bool = False


def _parse_binary(raw: str, col: str, row: int) -> int:
    try:
        v = float(raw)
    except ValueError:
        raise DataError(f"row {row}: column {col!r} value {raw!r} is not numeric")
    if v not in (0.0, 1.0):
        raise DataError(f"row {row}: column {col!r} must be 0 or 1, got {raw!r}")
    return int(v)


def _parse_float(raw: str, col: str, row: int) -> float:
    try:
        return float(raw)
    except ValueError:
        raise DataError(f"row {row}: column {col!r} value {raw!r} is not numeric")


def load_csv(path, schema: ColumnSchema = ColumnSchema()) -> Dataset:
    """Load and validate a UTF-8 CSV file with a mandatory header row.

    Raises :class:`DataError` with the offending row number on the first
    malformed value encountered.
    """
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("no records (empty file)")
        header = [h.strip() for h in header]
        rows = [row for row in reader if row and any(c.strip() for c in row)]

    if not rows:
        raise DataError("no records")
    for col in (schema.s_col, schema.y_col):
        if col not in header:
            raise DataError(f"missing column {col!r} (header: {header})")

    idx = {name: header.index(name) for name in header}
    has_score = schema.score_col is not None and schema.score_col in header
    has_weight = schema.weight_col is not None and schema.weight_col in header
    reserved = {schema.s_col, schema.y_col}
    if has_score:
        reserved.add(schema.score_col)
    if has_weight:
        reserved.add(schema.weight_col)

    if schema.feature_cols is not None:
        feat_names = list(schema.feature_cols)
        missing = [c for c in feat_names if c not in header]
        if missing:
            raise DataError(f"missing feature column(s) {missing}")
    else:
        feat_names = [h for h in header if h not in reserved]

    if not has_score and not feat_names:
        raise DataError("need a score column or at least one feature column")

    s_vals, y_vals, scores, weights, feats = [], [], [], [], []
    for i, row in enumerate(rows):
        rownum = i + 2  # 1-based, counting the header line
        if len(row) != len(header):
            raise DataError(f"row {rownum}: expected {len(header)} fields, got {len(row)}")
        s_vals.append(_parse_binary(row[idx[schema.s_col]], schema.s_col, rownum))
        y_vals.append(_parse_binary(row[idx[schema.y_col]], schema.y_col, rownum))
        if has_score:
            v = _parse_float(row[idx[schema.score_col]], schema.score_col, rownum)
            if not 0.0 <= v <= 1.0:
                raise DataError(
                    f"row {rownum}: column {schema.score_col!r} outside [0, 1]: {v}"
                )
            scores.append(1.0 - v if schema.flip_score else v)
        if has_weight:
            w = _parse_float(row[idx[schema.weight_col]], schema.weight_col, rownum)
            if not w > 0:
                raise DataError(f"row {rownum}: weight must be positive, got {w}")
            weights.append(w)
        if feat_names:
            vals = []
            for name in feat_names:
                raw = row[idx[name]].strip()
                # empty cells become NaN so validate() can count them
                vals.append(math.nan if raw == "" else _parse_float(raw, name, rownum))
            feats.append(vals)

    return Dataset(
        s=s_vals,
        y=y_vals,
        score=scores if has_score else None,
        features=np.array(feats) if feats else None,
        weight=weights if has_weight else None,
        feature_names=feat_names,
        legit_names=schema.legit_cols,
    )


# ---------------------------------------------------------------------------
# Threshold policies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Deterministic:
    """Decide 1 iff score > threshold (strict: equality yields 0)."""

    threshold: float

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise DataError(f"threshold must lie in [0, 1], got {self.threshold}")

    def decision_prob(self, score: np.ndarray) -> np.ndarray:
        return (score > self.threshold).astype(float)


@dataclass(frozen=True)
class Randomized:
    """Use threshold ``t_lo`` with probability ``p``, else ``t_hi``.

    The expected decision is ``p * 1[score > t_lo] + (1-p) * 1[score > t_hi]``.
    """

    t_lo: float
    t_hi: float
    p: float

    def __post_init__(self):
        for t in (self.t_lo, self.t_hi):
            if not 0.0 <= t <= 1.0:
                raise DataError(f"threshold must lie in [0, 1], got {t}")
        if self.t_lo > self.t_hi:
            raise DataError("t_lo must not exceed t_hi")
        if not 0.0 <= self.p <= 1.0:
            raise DataError(f"mixture probability must lie in [0, 1], got {self.p}")

    def decision_prob(self, score: np.ndarray) -> np.ndarray:
        return self.p * (score > self.t_lo) + (1.0 - self.p) * (score > self.t_hi)


GroupRule = Deterministic | Randomized


@dataclass(frozen=True)
class ThresholdPolicy:
    """Per-group decision rule."""

    rules: Mapping[int, GroupRule]

    @classmethod
    def shared(cls, threshold: float) -> "ThresholdPolicy":
        rule = Deterministic(threshold)
        return cls(rules={0: rule, 1: rule})

    @classmethod
    def per_group(cls, t0: float, t1: float) -> "ThresholdPolicy":
        return cls(rules={0: Deterministic(t0), 1: Deterministic(t1)})

    def rule_for(self, g: int) -> GroupRule:
        if g not in self.rules:
            raise DataError(f"policy has no rule for group {g}")
        return self.rules[g]

    @property
    def deterministic(self) -> bool:
        return all(
            isinstance(r, Deterministic) or r.p in (0.0, 1.0)
            for r in self.rules.values()
        )

    def to_json_dict(self) -> dict:
        out = {}
        for g, rule in sorted(self.rules.items()):
            if isinstance(rule, Deterministic):
                out[str(g)] = {"kind": "deterministic", "threshold": rule.threshold}
            else:
                out[str(g)] = {
                    "kind": "randomized",
                    "t_lo": rule.t_lo,
                    "t_hi": rule.t_hi,
                    "p": rule.p,
                }
        return out

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "ThresholdPolicy":
        rules: dict[int, GroupRule] = {}
        for g, spec in d.items():
            if spec["kind"] == "deterministic":
                rules[int(g)] = Deterministic(spec["threshold"])
            elif spec["kind"] == "randomized":
                rules[int(g)] = Randomized(spec["t_lo"], spec["t_hi"], spec["p"])
            else:
                raise DataError(f"unknown rule kind {spec['kind']!r}")
        return cls(rules=rules)


@dataclass(frozen=True)
class PredictionSet:
    """Per-record decisions.

    ``prob`` holds the decision probability; for deterministic policies the
    entries are exactly 0.0 or 1.0 and ``labels`` yields hard decisions.
    """

    prob: np.ndarray
    deterministic: bool

    def __post_init__(self):
        p = np.asarray(self.prob, dtype=float)
        p.setflags(write=False)
        object.__setattr__(self, "prob", p)
        if ((p < 0) | (p > 1)).any():
            raise DataError("decision probabilities must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.prob)

    @property
    def labels(self) -> np.ndarray:
        if not self.deterministic:
            raise DataError("randomized predictions have no hard labels")
        return (self.prob > 0.5).astype(np.int64)

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "PredictionSet":
        arr = np.asarray(labels, dtype=float)
        if not np.isin(arr, (0.0, 1.0)).all():
            raise DataError("labels must be 0 or 1")
        return cls(prob=arr, deterministic=True)


def apply_policy(d: Dataset, policy: ThresholdPolicy) -> PredictionSet:
    """Score each record against its group's rule.

    Pure function: identical inputs produce bit-identical outputs.
    """
    score = d.require_scores()
    prob = np.empty(len(d))
    deterministic = True
    for g in np.unique(d.s):
        rule = policy.rule_for(int(g))
        mask = d.s == g
        prob[mask] = rule.decision_prob(score[mask])
        if isinstance(rule, Randomized) and rule.p not in (0.0, 1.0):
            deterministic = False
    if deterministic:
        prob = np.rint(prob)
    return PredictionSet(prob=prob, deterministic=deterministic)


# ---------------------------------------------------------------------------
# Validation report
# ---------------------------------------------------------------------------


@dataclass
class ValidationReport:
    n: int
    group_sizes: dict[int, int]
    base_rates: dict[int, float | None]
    missing_feature_counts: dict[str, int] = field(default_factory=dict)
    constant_columns: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "group_sizes": {str(k): v for k, v in sorted(self.group_sizes.items())},
            "base_rates": {str(k): v for k, v in sorted(self.base_rates.items())},
            "missing_feature_counts": dict(sorted(self.missing_feature_counts.items())),
            "constant_columns": sorted(self.constant_columns),
            "warnings": list(self.warnings),
        }


def validate(d: Dataset) -> ValidationReport:
    """Report-only sanity summary: group sizes, base rates, degenerate columns."""
    sizes, rates = {}, {}
    warnings = []
    for g in (0, 1):
        mask = d.group_mask(g)
        sizes[g] = int(mask.sum())
        if sizes[g] == 0:
            rates[g] = None
            warnings.append(f"group {g} empty")
        else:
            w = d.weight[mask]
            rates[g] = float(np.sum(w * d.y[mask]) / np.sum(w))

    missing = {}
    constant = []
    if d.features is not None:
        names = d.feature_names or tuple(
            f"x{j}" for j in range(d.features.shape[1])
        )
        for j, name in enumerate(names):
            col = d.features[:, j]
            n_missing = int(np.isnan(col).sum())
            if n_missing:
                missing[name] = n_missing
            finite = col[~np.isnan(col)]
            if len(finite) and np.all(finite == finite[0]):
                constant.append(name)
                warnings.append(f"constant column {name!r}")
    if d.score is not None and np.all(d.score == d.score[0]):
        constant.append("score")
        warnings.append("constant score")

    return ValidationReport(
        n=len(d),
        group_sizes=sizes,
        base_rates=rates,
        missing_feature_counts=missing,
        constant_columns=constant,
        warnings=warnings,
    )


def dataset_to_csv(d: Dataset) -> str:
    """Serialize a dataset back to the canonical CSV schema.

    Floats are written with repr so values round-trip exactly.
    """
    names = list(d.feature_names)
    if d.features is not None and not names:
        names = [f"x{j}" for j in range(d.features.shape[1])]
    header = ["s", "y"]
    if d.score is not None:
        header.append("score")
    header.append("w")
    header.extend(names)
    lines = [",".join(header)]
    for i in range(len(d)):
        row = [str(int(d.s[i])), str(int(d.y[i]))]
        if d.score is not None:
            row.append(repr(float(d.score[i])))
        row.append(repr(float(d.weight[i])))
        if d.features is not None:
            row.extend(repr(float(v)) for v in d.features[i])
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def sha256_of_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Canonical 24-row demo dataset
# ---------------------------------------------------------------------------

# Group/outcome pattern of the 24-observation demo table, ordered by score.
# Only the ordering is meaningful; the canonical file assigns score_i = i/24
# by table position, so every threshold fact is a position fact.

_TOY_S = (0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1)
_TOY_Y = (0, 0, 1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 0, 0, 0, 1, 1, 1, 1, 0, 1, 1, 1, 1)

TOY_CSV = "s,y,score\n" + "".join(
    f"{s},{y},{i / 24!r}\n" for i, (s, y) in enumerate(zip(_TOY_S, _TOY_Y), start=1)
)

# threshold between the 10th and 11th scores reproduces the demo decisions
TOY_THRESHOLD = (10 / 24 + 11 / 24) / 2


def load_toy() -> Dataset:
    """The canonical 24-row dataset (8 records with s=0, 16 with s=1)."""
    return Dataset(
        s=_TOY_S,
        y=_TOY_Y,
        score=[i / 24 for i in range(1, 25)],
    )
