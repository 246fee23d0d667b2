"""Confusion-matrix metrics, ROC curves and AUC, with Good as the positive class."""
from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

METRIC_COLUMNS = ("au_roc", "f1", "precision", "recall", "accuracy",
                  "sensitivity", "specificity")
COUNT_COLUMNS = ("tp", "fp", "tn", "fn")


def _check_inputs(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if len(scores) == 0:
        raise ValueError("no scores given")
    if len(scores) != len(labels):
        raise ValueError(f"{len(scores)} scores but {len(labels)} labels")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    if np.isnan(scores).any():
        raise ValueError("scores contain NaN")
    return scores, labels.astype(np.int64)


def confusion(scores, labels, threshold: float = 0.5) -> dict[str, int]:
    """2x2 counts; a score at or above ``threshold`` predicts Good."""
    scores, labels = _check_inputs(scores, labels)
    pred = scores >= threshold
    pos = labels == 1
    return {"tp": int((pred & pos).sum()), "fp": int((pred & ~pos).sum()),
            "tn": int((~pred & ~pos).sum()), "fn": int((~pred & pos).sum())}


def _ratio(num, den):
    return num / den if den else 0.0


def metrics_from_counts(tp: int, fp: int, tn: int, fn: int) -> dict[str, float]:
    """Precision, recall, F1, accuracy, sensitivity and specificity.

    Ratios with an empty denominator are reported as 0.
    """
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    return {
        "precision": precision,
        "recall": recall,
        "f1": _ratio(2 * precision * recall, precision + recall),
        "accuracy": _ratio(tp + tn, tp + fp + tn + fn),
        "sensitivity": recall,
        "specificity": _ratio(tn, tn + fp),
    }


def roc_curve(scores, labels):
    """Thresholds (``+inf`` first, then each distinct score, descending), FPR and TPR.

    Tied scores share a single threshold step, so ``k`` distinct scores give
    ``k + 1`` points running from (0, 0) to (1, 1).
    """
    scores, labels = _check_inputs(scores, labels)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both classes present")
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    last_of_group = np.r_[s[1:] != s[:-1], True]
    tps = np.cumsum(y)[last_of_group]
    fps = np.cumsum(1 - y)[last_of_group]
    thresholds = np.r_[np.inf, s[last_of_group]]
    tpr = np.r_[0, tps] / n_pos
    fpr = np.r_[0, fps] / n_neg
    return thresholds, fpr, tpr


def roc_auc(scores, labels) -> tuple[np.ndarray, float]:
    """ROC points ``(k+1, 2)`` as (fpr, tpr) and the trapezoidal area under them."""
    _, fpr, tpr = roc_curve(scores, labels)
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return np.column_stack([fpr, tpr]), auc


def auc_score(scores, labels) -> float:
    return roc_auc(scores, labels)[1]


@dataclass
class EvalReport:
    tp: int
    fp: int
    tn: int
    fn: int
    precision: float
    recall: float
    f1: float
    accuracy: float
    sensitivity: float
    specificity: float
    auc: float
    roc_points: np.ndarray = field(repr=False)
    thresholds: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def row(self) -> dict:
        out = {"au_roc": self.auc}
        out.update({k: getattr(self, k) for k in METRIC_COLUMNS[1:]})
        out.update({k: getattr(self, k) for k in COUNT_COLUMNS})
        return out


def evaluate(scores, labels, threshold: float = 0.5) -> EvalReport:
    counts = confusion(scores, labels, threshold)
    thresholds, fpr, tpr = roc_curve(scores, labels)
    points = np.column_stack([fpr, tpr])
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return EvalReport(**counts, **metrics_from_counts(**counts), auc=auc,
                      roc_points=points, thresholds=thresholds)


def metrics_csv(reports: Mapping[str, EvalReport]) -> str:
    """Table II columns (AU-ROC, F1, precision, recall, accuracy), then
    sensitivity, specificity and the raw counts."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("model",) + METRIC_COLUMNS + COUNT_COLUMNS)
    for name, rep in reports.items():
        row = rep.row()
        writer.writerow([name] + [repr(float(row[k])) for k in METRIC_COLUMNS]
                        + [int(row[k]) for k in COUNT_COLUMNS])
    return buf.getvalue()


def read_metrics_csv(text: str) -> dict[str, dict[str, float]]:
    out = {}
    for row in csv.DictReader(io.StringIO(text)):
        name = row.pop("model")
        out[name] = {k: (int(v) if k in COUNT_COLUMNS else float(v)) for k, v in row.items()}
    return out


def roc_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("threshold", "fpr", "tpr"))
    for t, (f, p) in zip(report.thresholds, report.roc_points):
        writer.writerow([repr(float(t)), repr(float(f)), repr(float(p))])
    return buf.getvalue()


def plot_roc(report: EvalReport, path, title: str = "ROC"):
    """Write the ROC curve as SVG; repeated calls give identical bytes."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "actisleep"
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.plot(report.roc_points[:, 0], report.roc_points[:, 1], drawstyle="default",
            label=f"AUC = {report.auc:.4f}")
    ax.plot([0, 1], [0, 1], linestyle="--", color="grey", linewidth=0.8)
    ax.set_xlabel("False positive rate")
    ax.set_ylabel("True positive rate")
    ax.set_title(title)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_report(report: EvalReport, out_dir, name: str = "model", plot: bool = False) -> dict[str, Path]:
    """Write ``metrics.csv``, ``roc.csv`` and optionally ``roc.svg`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not os.access(out_dir, os.W_OK):
        raise PermissionError(f"{out_dir} is not writable")
    paths = {"metrics": out_dir / "metrics.csv", "roc": out_dir / "roc.csv"}
    paths["metrics"].write_text(metrics_csv({name: report}))
    paths["roc"].write_text(roc_csv(report))
    if plot:
        paths["plot"] = out_dir / "roc.svg"
        plot_roc(report, paths["plot"], f"ROC: {name}")
    return paths
