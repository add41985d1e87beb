"""Command-line front end: audit reports, mitigation pipelines, plot data.

Subcommands: audit, mitigate, plot, synth, validate.
Exit codes: 0 ok, 2 malformed input, 3 degenerate computation.

Reports are written as JSON (full precision, sorted keys, so identical runs
are byte-identical) plus a Markdown rendering whose numbers are the JSON
values rounded for print (one decimal of a percent).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, depmeasure, groupfair, indivfair, mitigate, rocstats, synth
from .data import (
    ColumnSchema,
    DataError,
    Dataset,
    DegenerateGroupError,
    PredictionSet,
    ThresholdPolicy,
    apply_policy,
    dataset_to_csv,
    load_csv,
    sha256_of_file,
    validate,
)

SCHEMA_VERSION = 1

TABLE_LABELS = {
    "statistical_parity": "statistical parity",
    "equal_opportunity": "equal opportunity",
    "predictive_equality": "predictive equality",
    "conditional_accuracy": "conditional accuracy",
    "predictive_parity": "predictive parity",
    "accuracy_equality": "accuracy equality",
    "treatment_equality": "treatment equality",
}


def _json_default(o):
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def _dump_json(obj, path: Path | None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"
    if path is not None:
        path.write_text(text, encoding="utf-8")
    return text


def _schema_from_args(args) -> ColumnSchema:
    feature_cols = None
    if getattr(args, "features", None):
        feature_cols = [c for c in args.features.split(",") if c]
    return ColumnSchema(
        s_col=args.s_col,
        y_col=args.y_col,
        score_col=args.score_col,
        weight_col=args.weight_col,
        feature_cols=feature_cols,
        legit_cols=tuple(args.legit.split(",")) if getattr(args, "legit", None) else (),
        flip_score=getattr(args, "flip_score", False),
    )


def _load_with_pred(args) -> tuple[Dataset, PredictionSet | None, dict]:
    """Load the dataset and derive predictions from the policy flags."""
    schema = _schema_from_args(args)
    pred_col = getattr(args, "pred_col", None)
    if pred_col:
        # the prediction column must not leak into the features
        with open(args.data, encoding="utf-8") as fh:
            header = [h.strip() for h in fh.readline().rstrip("\n").split(",")]
        if pred_col not in header:
            raise DataError(f"missing prediction column {pred_col!r}")
        reserved = {schema.s_col, schema.y_col, schema.score_col, schema.weight_col, pred_col}
        auto_feats = [h for h in header if h not in reserved]
        schema = ColumnSchema(
            s_col=schema.s_col,
            y_col=schema.y_col,
            score_col=schema.score_col if schema.score_col in header else None,
            weight_col=schema.weight_col,
            feature_cols=schema.feature_cols if schema.feature_cols is not None else auto_feats + [pred_col],
            legit_cols=schema.legit_cols,
            flip_score=schema.flip_score,
        )
        d = load_csv(args.data, schema)
        raw = d.feature_column(pred_col)
        if not np.isin(raw, (0.0, 1.0)).all():
            raise DataError(f"prediction column {pred_col!r} must be 0/1")
        pred = PredictionSet.from_labels(raw.astype(int))
        keep = [n for n in d.feature_names if n != pred_col]
        feats = None
        if keep:
            cols = [d.feature_column(n) for n in keep]
            feats = np.column_stack(cols)
        d = Dataset(
            s=d.s,
            y=d.y,
            score=d.score,
            features=feats,
            weight=d.weight,
            feature_names=keep,
            legit_names=tuple(n for n in d.legit_names if n != pred_col),
        )
        return d, pred, {"kind": "column", "column": pred_col}

    d = load_csv(args.data, schema)
    by_group = getattr(args, "threshold_by_group", None)
    if by_group:
        rules = {}
        for item in by_group:
            g_str, _, t_str = item.partition("=")
            try:
                rules[int(g_str)] = float(t_str)
            except ValueError:
                raise DataError(f"bad --threshold-by-group value {item!r}, expected g=t")
        if set(rules) != {0, 1}:
            raise DataError("--threshold-by-group must cover groups 0 and 1")
        policy = ThresholdPolicy.per_group(rules[0], rules[1])
    elif getattr(args, "threshold", None) is not None:
        policy = ThresholdPolicy.shared(args.threshold)
    else:
        return d, None, {"kind": "none"}
    return d, apply_policy(d, policy), {"kind": "threshold", "policy": policy.to_json_dict()}


# ---------------------------------------------------------------------------
# audit
# ---------------------------------------------------------------------------


def _default_metrics(d: Dataset, pred: PredictionSet | None, legit) -> list[str]:
    out = []
    if pred is not None:
        out += [
            "statistical_parity",
            "equal_opportunity",
            "predictive_equality",
            "conditional_accuracy",
            "predictive_parity",
            "accuracy_equality",
            "treatment_equality",
            "equalized_odds",
            "equalizing_disincentives",
            "phi_fairness",
        ]
    if d.score is not None:
        out += [
            "auc_fairness",
            "roc_equality",
            "class_balance_weak",
            "class_balance_strong",
            "calibration_parity",
            "good_calibration",
        ]
    if pred is not None and legit:
        out.append("conditional_demographic_parity")
    return out


def _percent(v) -> str:
    return "-" if v is None else f"{v * 100:.1f}%"


def _points(v) -> str:
    return "-" if v is None else f"{v:.1f}"


def _signed_percent(v) -> str:
    return "-" if v is None else f"{v:+.1f}%"


def render_markdown(report: dict) -> str:
    lines = [
        "# Fairness audit",
        "",
        f"- dataset: `{report['dataset']['path']}` ({report['dataset']['n']} records)",
        f"- digest: `{report['dataset']['sha256'][:16]}`",
        f"- policy: `{json.dumps(report['policy'], sort_keys=True)}`",
        f"- epsilon: {report['epsilon']}",
        "",
    ]
    metrics = report["metrics"]
    table_rows = [m for m in TABLE_LABELS if m in metrics]
    if table_rows:
        lines += [
            "## Group metrics",
            "",
            "| metric | s=0 | s=1 | diff | (%) |",
            "|---|---:|---:|---:|---:|",
        ]
        for mid in table_rows:
            r = metrics[mid]
            rel = "-" if r["rel_diff"] is None else f"{r['rel_diff']:+.1f}%"
            lines.append(
                f"| {TABLE_LABELS[mid]} | {_percent(r['group0'])} | {_percent(r['group1'])} "
                f"| {_points(r['diff'])} | {rel} |"
            )
        lines.append("")
    extra = [m for m in metrics if m not in TABLE_LABELS]
    if extra:
        lines += ["## Other metrics", ""]
        for mid in sorted(extra):
            r = metrics[mid]
            if r["group0"] is not None:
                lines.append(
                    f"- {mid}: s=0 {_percent(r['group0'])}, s=1 {_percent(r['group1'])}, "
                    f"gap {_points(r['gap'])}"
                )
            else:
                lines.append(f"- {mid}: gap {_points(r['gap'])} (pass: {r['passed']})")
        lines.append("")
    if "disparate_impact" in report:
        di = report["disparate_impact"]
        lines += [
            "## Disparate impact",
            "",
            f"- ratio: {di['ratio']:.4f} (four-fifths flag: {di['flagged']})",
            f"- SPD: {di['spd']:.4f}  NSPD: "
            + ("-" if di["nspd"] is None else f"{di['nspd']:.4f}")
            + "  EOD: "
            + ("-" if di["eod"] is None else f"{di['eod']:.4f}"),
        ]
        if "interval" in report:
            ci = report["interval"]
            lines.append(
                f"- ratio estimate {ci['point']:.4f}, {int(ci['level'] * 100)}% CI "
                f"[{ci['lo']:.4f}, {ci['hi']:.4f}] ({ci['method']})"
            )
        lines.append("")
    if "independence" in report:
        ind = report["independence"]
        lines += ["## Independence", ""]
        for k in sorted(ind):
            v = ind[k]
            lines.append(f"- {k}: " + ("-" if v is None else f"{v:.4f}"))
        lines.append("")
    if "individual" in report:
        indiv = report["individual"]
        lines += ["## Individual fairness", ""]
        if "lipschitz" in indiv:
            lp = indiv["lipschitz"]
            lines.append(
                f"- lipschitz violations: {lp['violations']} of {lp['checked_pairs']} pairs "
                f"(mode {lp['mode']}, scale {lp['scale']})"
            )
        if "reconstruction" in indiv:
            rc = indiv["reconstruction"]
            if "auc" in rc:
                lines.append(
                    f"- reconstruction attacker AUC: {rc['auc']:.4f} ({rc['folds']} folds)"
                )
            else:
                lines.append(f"- reconstruction: undefined ({rc['undefined']})")
        lines.append("")
    return "\n".join(lines)


def cmd_audit(args) -> int:
    d, pred, policy_desc = _load_with_pred(args)
    if pred is None:
        raise DataError("audit needs --threshold, --threshold-by-group or --pred-col")
    legit = tuple(args.legit.split(",")) if args.legit else d.legit_names

    if args.metrics:
        wanted = [m for m in args.metrics.split(",") if m]
        unknown = [m for m in wanted if m not in groupfair.METRICS]
        if unknown:
            raise DataError(f"unknown metric id(s): {unknown}")
        explicit = True
    else:
        wanted = _default_metrics(d, pred, legit)
        explicit = False

    metrics = {}
    for mid in wanted:
        try:
            metrics[mid] = groupfair.group_metric(
                mid, d, pred, epsilon=args.epsilon, bins=args.bins, legit=legit
            ).to_json_dict()
        except DegenerateGroupError as exc:
            if explicit:
                raise
            # a defaulted metric that this dataset cannot support is
            # reported as undefined instead of failing the whole audit
            metrics[mid] = groupfair.MetricResult(
                metric=mid, group0=None, group1=None, diff=None, gap=None,
                rel_diff=None, passed=None, details={"undefined": str(exc)},
            ).to_json_dict()

    di = groupfair.disparate_impact(d, pred, threshold=args.di_threshold, epsilon=args.epsilon)
    report = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "dataset": {
            "path": str(args.data),
            "sha256": sha256_of_file(args.data),
            "n": len(d),
        },
        "policy": policy_desc,
        "epsilon": args.epsilon,
        "seeds": {"cli": args.seed},
        "metrics": metrics,
        "disparate_impact": di.to_json_dict(),
    }
    if args.ci != "none":
        report["interval"] = groupfair.impact_ci(
            d, pred, method=args.ci, level=args.ci_level, n_boot=args.boot, seed=args.seed
        ).to_json_dict()

    prob = pred.prob.astype(float)
    s = d.s.astype(float)
    ind: dict[str, float | None] = {}
    try:
        ind["pearson_yhat_s"] = depmeasure.pearson(prob, s, d.weight)
    except depmeasure.ConstantInputError:
        ind["pearson_yhat_s"] = None
    try:
        ind["maxcor_yhat_s"] = depmeasure.maximal_correlation(prob, s, d.weight).value
    except depmeasure.ConstantInputError:
        ind["maxcor_yhat_s"] = None
    try:
        cond = depmeasure.conditional_maximal_correlation(prob, s, d.y, d.weight)
        ind["maxcor_yhat_s_given_y"] = cond.max_value
    except depmeasure.ConstantInputError:
        ind["maxcor_yhat_s_given_y"] = None
    ind["mutual_information_yhat_s_nats"] = depmeasure.mutual_information(prob, s, d.weight)
    ind["mutual_information_y_s_nats"] = depmeasure.mutual_information(d.y, d.s, d.weight)
    report["independence"] = ind

    if args.individual:
        indiv = {}
        have_features = d.features is not None and not np.isnan(d.features).any()
        if have_features and d.score is not None:
            indiv["lipschitz"] = indivfair.lipschitz_audit(
                d, dy="score", scale=args.lipschitz_scale, seed=args.seed
            ).to_json_dict()
        if have_features or (d.features is None and d.score is not None):
            try:
                indiv["reconstruction"] = indivfair.reconstruction_audit(
                    d, pred, folds=5, seed=args.seed
                ).to_json_dict()
            except DegenerateGroupError as exc:
                indiv["reconstruction"] = {"undefined": str(exc)}
        if indiv:
            report["individual"] = indiv

    out_prefix = Path(args.out) if args.out else None
    json_text = _dump_json(report, out_prefix.with_suffix(".json") if out_prefix else None)
    md_text = render_markdown(report)
    if out_prefix:
        out_prefix.with_suffix(".md").write_text(md_text, encoding="utf-8")
    sys.stdout.write(md_text if args.format == "md" else json_text)
    return 0


# ---------------------------------------------------------------------------
# mitigate
# ---------------------------------------------------------------------------


def _label_rates(d: Dataset) -> dict:
    out = {}
    for g in (0, 1):
        mask = d.s == g
        w = d.weight[mask]
        out[str(g)] = float(np.sum(w * d.y[mask]) / np.sum(w)) if mask.any() else None
    if out["0"] is not None and out["1"] is not None:
        out["gap"] = abs(out["1"] - out["0"])
    return out


def _metric_block(d: Dataset, pred: PredictionSet | None, epsilon: float) -> dict:
    if pred is None:
        return {}
    out = {}
    for mid in groupfair.TABLE_METRICS:
        out[mid] = groupfair.group_metric(mid, d, pred, epsilon=epsilon).to_json_dict()
    return out


def cmd_mitigate(args) -> int:
    d, pred, policy_desc = _load_with_pred(args)
    out_prefix = Path(args.out)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)

    before = {"label_rates": _label_rates(d), "metrics": _metric_block(d, pred, args.epsilon)}
    artifacts: dict[str, str] = {}
    result_info: dict = {"method": args.method}

    if args.method == "reweigh":
        res = mitigate.reweigh(d)
        corrected = res.dataset
        result_info["factors"] = {f"{sv},{yv}": w for (sv, yv), w in sorted(res.factors.items())}
        artifacts["dataset"] = str(out_prefix) + ".corrected.csv"
        Path(artifacts["dataset"]).write_text(dataset_to_csv(corrected), encoding="utf-8")
        after_pred = apply_policy(corrected, ThresholdPolicy.shared(args.threshold)) if (
            args.threshold is not None and corrected.score is not None
        ) else pred
        after = {
            "label_rates": _label_rates(corrected),
            "metrics": _metric_block(corrected, after_pred, args.epsilon),
        }
    elif args.method == "massage":
        res = mitigate.massage_labels(d, eps=args.eps)
        corrected = res.dataset
        result_info.update(
            {
                "swaps": res.swaps,
                "gap": res.gap,
                "reached_target": res.reached_target,
                "boundary_threshold": res.threshold,
            }
        )
        artifacts["dataset"] = str(out_prefix) + ".corrected.csv"
        Path(artifacts["dataset"]).write_text(dataset_to_csv(corrected), encoding="utf-8")
        after = {
            "label_rates": _label_rates(corrected),
            "metrics": _metric_block(corrected, pred, args.epsilon),
        }
    elif args.method == "repair":
        features = [c for c in args.features.split(",") if c] if args.features else None
        res = mitigate.di_remove(d, features=features, amount=args.amount)
        corrected = res.dataset
        result_info["amount"] = args.amount
        artifacts["dataset"] = str(out_prefix) + ".corrected.csv"
        Path(artifacts["dataset"]).write_text(dataset_to_csv(corrected), encoding="utf-8")
        after = {
            "label_rates": _label_rates(corrected),
            "metrics": _metric_block(corrected, pred, args.epsilon),
        }
    elif args.method == "train":
        if args.penalty == "none":
            spec = mitigate.PenaltySpec.none()
        elif args.penalty == "dp_correlation":
            spec = mitigate.PenaltySpec.dp_correlation(args.lam)
        elif args.penalty == "eo_correlation":
            spec = mitigate.PenaltySpec.eo_correlation(args.lam0, args.lam1)
        elif args.penalty == "dp_maxcor":
            spec = mitigate.PenaltySpec.dp_maxcor(args.lam, degree=args.degree)
        else:
            raise DataError(f"unknown penalty {args.penalty!r}")
        model = mitigate.train_logistic(d, penalty=spec, link=args.link)
        artifacts["model"] = str(out_prefix) + ".model.json"
        model.save(artifacts["model"])
        scored = d.with_(score=model.predict_score(d.features))
        artifacts["dataset"] = str(out_prefix) + ".scored.csv"
        Path(artifacts["dataset"]).write_text(dataset_to_csv(scored), encoding="utf-8")
        result_info.update(
            {
                "penalty": args.penalty,
                "converged": model.converged,
                "diverged": model.diverged,
                "n_iter": model.n_iter,
                "score_s_correlation": depmeasure.pearson(
                    scored.score, scored.s.astype(float), scored.weight
                ),
            }
        )
        after_pred = (
            apply_policy(scored, ThresholdPolicy.shared(args.threshold))
            if args.threshold is not None
            else None
        )
        after = {
            "label_rates": _label_rates(scored),
            "metrics": _metric_block(scored, after_pred, args.epsilon),
        }
    elif args.method in ("thresholds", "equalize-odds"):
        if args.method == "thresholds":
            res = mitigate.per_group_thresholds(d, objective=args.objective)
            policy = res.policy
            result_info.update(
                {
                    "objective": args.objective,
                    "values": list(res.values),
                    "gap": res.gap,
                    "accuracy": res.accuracy,
                    "granular": res.granular,
                    "degenerate": res.degenerate,
                }
            )
        else:
            res = mitigate.equalize_odds(d, criterion=args.criterion)
            policy = res.policy
            result_info.update(
                {
                    "criterion": args.criterion,
                    "target": list(res.target),
                    "tpr_gap": res.tpr_gap,
                    "fpr_gap": res.fpr_gap,
                    "accuracy": res.accuracy,
                    "degenerate": res.degenerate,
                    "mixed": res.mixed,
                }
            )
        artifacts["policy"] = str(out_prefix) + ".policy.json"
        _dump_json(policy.to_json_dict(), Path(artifacts["policy"]))
        after_pred = apply_policy(d, policy)
        after = {"label_rates": _label_rates(d), "metrics": _metric_block(d, after_pred, args.epsilon)}
    else:
        raise DataError(f"unknown method {args.method!r}")

    report = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "dataset": {"path": str(args.data), "sha256": sha256_of_file(args.data), "n": len(d)},
        "policy": policy_desc,
        "method": result_info,
        "artifacts": artifacts,
        "before": before,
        "after": after,
        "seeds": {"cli": args.seed},
    }
    text = _dump_json(report, Path(str(out_prefix) + ".report.json"))
    sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# plot
# ---------------------------------------------------------------------------


def cmd_plot(args) -> int:
    schema = _schema_from_args(args)
    d = load_csv(args.data, schema)
    out_prefix = Path(args.out)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    written = []

    if args.kind == "roc":
        curve = rocstats.roc_curve(d)
        (out_prefix.with_suffix(".csv")).write_text(
            rocstats.roc_points_csv(curve), encoding="utf-8"
        )
        (out_prefix.with_suffix(".svg")).write_text(
            rocstats.roc_svg([("all", curve)]), encoding="utf-8"
        )
        written = [str(out_prefix.with_suffix(".csv")), str(out_prefix.with_suffix(".svg"))]
    elif args.kind == "roc-by-group":
        curves = [(f"s={g}", rocstats.roc_curve(d, group=g)) for g in (0, 1)]
        for name, curve in curves:
            path = Path(str(out_prefix) + f".{name.replace('=', '')}.csv")
            path.write_text(rocstats.roc_points_csv(curve), encoding="utf-8")
            written.append(str(path))
        (out_prefix.with_suffix(".svg")).write_text(rocstats.roc_svg(curves), encoding="utf-8")
        written.append(str(out_prefix.with_suffix(".svg")))
    elif args.kind == "score-hist":
        score = d.require_scores()
        edges = np.linspace(0.0, 1.0, args.bins + 1)
        counts, _ = np.histogram(score, bins=edges, weights=d.weight)
        lines = ["lo,hi,weight"]
        for k in range(args.bins):
            lines.append(f"{float(edges[k])!r},{float(edges[k + 1])!r},{float(counts[k])!r}")
        out_prefix.with_suffix(".csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        top = max(float(counts.max()), 1.0)
        size, pad = 320, 24
        span = size - 2 * pad
        bars = []
        for k in range(args.bins):
            x = pad + span * k / args.bins
            h = span * counts[k] / top
            bars.append(
                f'<rect x="{x:.2f}" y="{size - pad - h:.2f}" width="{span / args.bins:.2f}" '
                f'height="{h:.2f}" fill="#1f77b4" stroke="white" stroke-width="0.5"/>'
            )
        svg = (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
            f'viewBox="0 0 {size} {size}">\n<rect width="{size}" height="{size}" fill="white"/>\n'
            + "\n".join(bars)
            + "\n</svg>\n"
        )
        out_prefix.with_suffix(".svg").write_text(svg, encoding="utf-8")
        written = [str(out_prefix.with_suffix(".csv")), str(out_prefix.with_suffix(".svg"))]
    else:
        raise DataError(f"unknown plot kind {args.kind!r}")

    sys.stdout.write("\n".join(written) + "\n")
    return 0


# ---------------------------------------------------------------------------
# synth / validate
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            payload = json.load(fh)
        spec = synth.BetaSpec.from_json_dict(payload.get("cells", payload))
    elif args.preset == "uniform":
        spec = synth.uniform_spec()
    else:
        spec = synth.operating_point_spec()
    d = synth.sample_scores(spec, args.n, args.seed)
    out_prefix = Path(args.out)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    csv_path = out_prefix.with_suffix(".csv")
    csv_path.write_text(dataset_to_csv(d), encoding="utf-8")
    sidecar = {
        "cells": spec.to_json_dict(),
        "n": args.n,
        "seed": args.seed,
        "generator": "philox4x64 keyed by (seed, 0); see fairaudit.synth docs",
        "tool_version": __version__,
    }
    _dump_json(sidecar, Path(str(out_prefix) + ".spec.json"))
    sys.stdout.write(f"{csv_path}\n")
    return 0


def cmd_validate(args) -> int:
    schema = _schema_from_args(args)
    d = load_csv(args.data, schema)
    report = validate(d)
    sys.stdout.write(_dump_json(report.to_json_dict(), None))
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------


def _add_schema_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--s-col", default="s", help="group column name")
    p.add_argument("--y-col", default="y", help="outcome column name")
    p.add_argument("--score-col", default="score", help="score column name")
    p.add_argument("--weight-col", default="w", help="weight column name")
    p.add_argument("--features", default=None, help="comma-separated feature columns")
    p.add_argument("--flip-score", action="store_true", help="use 1 - score (credit-score data)")


def _add_policy_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threshold", type=float, default=None, help="shared decision threshold")
    p.add_argument(
        "--threshold-by-group",
        action="append",
        default=None,
        metavar="G=T",
        help="per-group threshold, repeatable (e.g. 0=0.55)",
    )
    p.add_argument("--pred-col", default=None, help="column with 0/1 predictions")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairaudit", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("audit", help="group/individual fairness report")
    pa.add_argument("data")
    _add_schema_flags(pa)
    _add_policy_flags(pa)
    pa.add_argument("--metrics", default=None, help="comma-separated metric ids")
    pa.add_argument("--epsilon", type=float, default=0.05)
    pa.add_argument("--bins", type=int, default=10)
    pa.add_argument("--legit", default=None, help="legitimate columns for conditional parity")
    pa.add_argument("--di-threshold", type=float, default=0.8)
    pa.add_argument("--ci", choices=["bootstrap", "asymptotic", "none"], default="bootstrap")
    pa.add_argument("--ci-level", type=float, default=0.95)
    pa.add_argument("--boot", type=int, default=1000)
    pa.add_argument("--individual", action=argparse.BooleanOptionalAction, default=True)
    pa.add_argument("--lipschitz-scale", type=float, default=1.0)
    pa.add_argument("--seed", type=int, default=0)
    pa.add_argument("--format", choices=["json", "md"], default="json")
    pa.add_argument("--out", default=None, help="output path prefix")
    pa.set_defaults(func=cmd_audit)

    pm = sub.add_parser("mitigate", help="correct discrimination")
    pm.add_argument("data")
    _add_schema_flags(pm)
    _add_policy_flags(pm)
    pm.add_argument(
        "--method",
        required=True,
        choices=["massage", "reweigh", "repair", "train", "thresholds", "equalize-odds"],
    )
    pm.add_argument("--out", required=True, help="output path prefix")
    pm.add_argument("--eps", type=float, default=0.0, help="massage: target label-rate gap")
    pm.add_argument("--amount", type=float, default=1.0, help="repair: amount in [0, 1]")
    pm.add_argument("--penalty", default="none", help="train: penalty kind")
    pm.add_argument("--lam", type=float, default=0.0)
    pm.add_argument("--lam0", type=float, default=0.0)
    pm.add_argument("--lam1", type=float, default=0.0)
    pm.add_argument("--degree", type=int, default=3)
    pm.add_argument("--link", choices=["logistic", "probit"], default="logistic")
    pm.add_argument("--objective", choices=["dp", "eo_tpr"], default="dp")
    pm.add_argument("--criterion", choices=["full", "opportunity"], default="full")
    pm.add_argument("--epsilon", type=float, default=0.05)
    pm.add_argument("--seed", type=int, default=0)
    pm.set_defaults(func=cmd_mitigate)

    pp = sub.add_parser("plot", help="emit plot data (CSV + SVG)")
    pp.add_argument("data")
    _add_schema_flags(pp)
    pp.add_argument("--kind", required=True, choices=["roc", "score-hist", "roc-by-group"])
    pp.add_argument("--bins", type=int, default=20)
    pp.add_argument("--out", required=True, help="output path prefix")
    pp.set_defaults(func=cmd_plot)

    ps = sub.add_parser("synth", help="sample a synthetic scored dataset")
    ps.add_argument("--spec", default=None, help="JSON file with Beta cell parameters")
    ps.add_argument("--preset", choices=["uniform", "operating-point"], default="uniform")
    ps.add_argument("--n", type=int, required=True)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--out", required=True, help="output path prefix")
    ps.set_defaults(func=cmd_synth)

    pv = sub.add_parser("validate", help="report-only dataset sanity check")
    pv.add_argument("data")
    _add_schema_flags(pv)
    pv.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DegenerateGroupError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (DataError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
