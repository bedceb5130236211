# ownership/evaluation.py

"""
Set-valued ownership metrics: subset accuracy, mean Jaccard and
micro-averaged precision / recall / F1 pooled over all objects, plus
per-category breakdowns, per-step curves and mean/std report tables.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Set

import pandas as pd

from .base import InputError
from .roster_map import ObjectRecord
from .scoring import detect_shared

logger = logging.getLogger(__name__)

METRIC_NAMES = ("subset_accuracy", "mean_jaccard", "micro_precision", "micro_recall", "micro_f1")
CATEGORIES = ("single_user", "temporary_sharing", "multi_user_sharing")


@dataclass
class MetricsReport:
    n: int
    subset_accuracy: float
    mean_jaccard: float
    micro_precision: float
    micro_recall: float
    micro_f1: float
    tp: int = 0
    fp: int = 0
    fn: int = 0
    n_questions: Optional[int] = None
    categories: Dict[str, "MetricsReport"] = field(default_factory=dict)

    def headline(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in METRIC_NAMES}

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = dict(self.headline())
        out.update({"n": self.n, "tp": self.tp, "fp": self.fp, "fn": self.fn})
        if self.n_questions is not None:
            out["n_questions"] = self.n_questions
        if self.categories:
            out["categories"] = {k: v.to_dict() for k, v in sorted(self.categories.items())}
        return out


def jaccard(truth: Set[str], predicted: Set[str]) -> float:
    union = truth | predicted
    if not union:
        return 1.0
    return len(truth & predicted) / len(union)


def predicted_set_from_state(rec: ObjectRecord, answered: Optional[Sequence[str]] = None) -> Set[str]:
    """
    Asked objects predict their answered owners; otherwise the share decision
    owners, falling back to the single best-scoring user (name breaks ties).
    """
    if rec.asked:
        if answered is not None:
            return set(answered)
        return {u for u, s in rec.scores.items() if s >= 1.0}
    share = rec.share if rec.share is not None else detect_shared(rec.scores)
    if share.kind in ("single", "shared"):
        return set(share.owners)
    if not rec.scores:
        return set()
    best = min(rec.scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return {best[0]}


def _pooled(
    predictions: Mapping[str, Iterable[str]],
    truth: Mapping[str, Iterable[str]],
    ids: Sequence[str],
) -> MetricsReport:
    n = len(ids)
    exact = 0
    jac = 0.0
    tp = fp = fn = 0
    for oid in ids:
        u = set(truth[oid])
        p = set(predictions.get(oid) or ())
        exact += u == p
        jac += jaccard(u, p)
        tp += len(u & p)
        fp += len(p - u)
        fn += len(u - p)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return MetricsReport(
        n=n,
        subset_accuracy=exact / n if n else 0.0,
        mean_jaccard=jac / n if n else 0.0,
        micro_precision=precision,
        micro_recall=recall,
        micro_f1=f1,
        tp=tp,
        fp=fp,
        fn=fn,
    )


def compute_metrics(
    predictions: Mapping[str, Iterable[str]],
    truth: Mapping[str, Iterable[str]],
    categories: Optional[Mapping[str, str]] = None,
    n_questions: Optional[int] = None,
) -> MetricsReport:
    """Objects without a prediction count as an empty predicted set."""
    unknown = sorted(set(predictions) - set(truth))
    if unknown:
        raise InputError(f"Predictions for objects without ground truth: {', '.join(unknown[:5])}")
    ids = sorted(truth)
    report = _pooled(predictions, truth, ids)
    report.n_questions = n_questions
    if categories:
        groups: Dict[str, List[str]] = {}
        for oid in ids:
            groups.setdefault(categories.get(oid, "uncategorized"), []).append(oid)
        report.categories = {cat: _pooled(predictions, truth, members) for cat, members in sorted(groups.items())}
    return report


def step_curve(trace, truth: Mapping[str, Iterable[str]], categories: Optional[Mapping[str, str]] = None) -> List[MetricsReport]:
    """One report per pass; entry i is the state after i questions."""
    return [
        compute_metrics(step.predicted, truth, categories, n_questions=step.q_cnt)
        for step in trace.steps
    ]


# ----------------------------------------------------------------------
# Tables
# ----------------------------------------------------------------------


def report_rows(method: str, trial: int, report: MetricsReport) -> List[Dict[str, Any]]:
    rows = []
    scopes = [("overall", report)] + sorted(report.categories.items())
    for category, sub in scopes:
        for metric in METRIC_NAMES:
            rows.append({"method": method, "trial": trial, "category": category, "metric": metric, "value": getattr(sub, metric)})
    if report.n_questions is not None:
        rows.append({"method": method, "trial": trial, "category": "overall", "metric": "n_questions", "value": float(report.n_questions)})
    return rows


def summarize(rows: Sequence[Mapping[str, Any]]) -> pd.DataFrame:
    """Mean and population std per method x category x metric (a single trial has std 0)."""
    df = pd.DataFrame(list(rows), columns=["method", "trial", "category", "metric", "value"])
    if df.empty:
        return pd.DataFrame(columns=["method", "category", "metric", "mean", "std", "trials"])
    grouped = df.groupby(["method", "category", "metric"], sort=True)["value"]
    out = grouped.agg(mean="mean", std=lambda s: float(s.std(ddof=0)), trials="count").reset_index()
    return out


def step_rows(method: str, trial: int, curve: Sequence[MetricsReport], length: int) -> List[Dict[str, Any]]:
    """Per-step rows padded to `length` by carrying the final point forward."""
    rows = []
    if not curve:
        return rows
    for step in range(length):
        report = curve[min(step, len(curve) - 1)]
        for metric in METRIC_NAMES:
            rows.append({"method": method, "trial": trial, "step": step, "metric": metric, "value": getattr(report, metric)})
    return rows


def summarize_steps(rows: Sequence[Mapping[str, Any]]) -> pd.DataFrame:
    df = pd.DataFrame(list(rows), columns=["method", "trial", "step", "metric", "value"])
    if df.empty:
        return pd.DataFrame(columns=["method", "step", "metric", "mean", "std"])
    grouped = df.groupby(["method", "step", "metric"], sort=True)["value"]
    return grouped.agg(mean="mean", std=lambda s: float(s.std(ddof=0))).reset_index()
