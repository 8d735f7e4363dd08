"""Agreement metrics between predicted and ground-truth scores, plus the
per-method evaluation report."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateSampleError, ParameterError, ShapeError
from .response_format import CATEGORY_RESIDUAL


@dataclass(frozen=True)
class PairedScores:
    """Aligned predicted and ground-truth score vectors."""

    predicted: np.ndarray
    actual: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.predicted, dtype=np.float64)
        a = np.asarray(self.actual, dtype=np.float64)
        if p.ndim != 1 or a.ndim != 1:
            raise ShapeError("score vectors must be 1-D")
        if p.size != a.size:
            raise ShapeError("score vectors must have equal length")
        if p.size < 1:
            raise ShapeError("score vectors must be non-empty")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(a))):
            raise ParameterError("scores must be finite")
        object.__setattr__(self, "predicted", p.copy())
        object.__setattr__(self, "actual", a.copy())

    @property
    def n(self) -> int:
        return self.predicted.size


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    sx = float(np.sum(xc * xc))
    sy = float(np.sum(yc * yc))
    if sx == 0.0 or sy == 0.0:
        raise DegenerateSampleError("correlation is undefined for a "
                                    "constant score vector")
    return float(np.sum(xc * yc)) / np.sqrt(sx * sy)


def _average_ranks(x: np.ndarray) -> np.ndarray:
    # 1-based ranks, ties replaced by the mean rank of the tied block
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=np.float64)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def plcc(scores: PairedScores) -> float:
    """Pearson linear correlation coefficient."""
    if scores.n < 2:
        raise DegenerateSampleError("correlation needs at least two pairs")
    return _pearson(scores.predicted, scores.actual)


def srcc(scores: PairedScores) -> float:
    """Spearman rank correlation: Pearson on average-tied ranks."""
    if scores.n < 2:
        raise DegenerateSampleError("correlation needs at least two pairs")
    return _pearson(_average_ranks(scores.predicted),
                    _average_ranks(scores.actual))


def accuracy(scores: PairedScores) -> float:
    """Fraction of exactly matching pairs."""
    return float(np.mean(scores.predicted == scores.actual))


@dataclass(frozen=True)
class MethodReport:
    """Aggregated agreement for one watermarking method.

    Correlations are None when fewer than two format-valid pairs exist
    or a side is constant; accuracies are None when no valid pair
    exists for that field.
    """

    method: str
    watermark_type: str
    n_items: int
    format_failure_rate: float
    plcc: float | None = None
    srcc: float | None = None
    quality_acc: float | None = None
    security_acc: float | None = None


def _safe_corr(fn, pred, act) -> float | None:
    if len(pred) < 2:
        return None
    try:
        return fn(PairedScores(np.array(pred), np.array(act)))
    except DegenerateSampleError:
        return None


def build_report(rows: Sequence[dict]) -> list[MethodReport]:
    """Aggregate evaluation rows into one report per method.

    Each row is a dict with ``method``, a ground-truth record ``gt``
    (same layout as the reward ground truth records) and ``pred``, the
    parsed response fields, or None when the response text failed the
    format check. Formats failures count into the failure rate and drop
    out of every other statistic. Methods are reported in first-seen
    order.
    """
    by_method: dict[str, list[dict]] = {}
    for row in rows:
        for key in ("method", "gt"):
            if key not in row:
                raise ParameterError(f"evaluation row is missing {key!r}")
        by_method.setdefault(row["method"], []).append(row)

    reports = []
    for method, items in by_method.items():
        categories = {item["gt"]["category"] for item in items}
        if len(categories) != 1:
            raise ParameterError(f"method {method!r} mixes watermark "
                                 "categories")
        category = categories.pop()
        valid = [item for item in items if item.get("pred") is not None]
        fail_rate = 1.0 - len(valid) / len(items)
        if category == CATEGORY_RESIDUAL:
            pred_q = [item["pred"]["residual_quality"] for item in valid]
            act_q = [item["gt"]["quality"] for item in valid]
            flag_accs = []
            for pred_key, gt_key in (("jpeg", "jpeg"), ("gaussian", "gaussian"),
                                     ("filter", "filter")):
                hits = [item["pred"][pred_key] == item["gt"][gt_key]
                        for item in valid]
                if hits:
                    flag_accs.append(float(np.mean(hits)))
            reports.append(MethodReport(
                method=method, watermark_type="residual", n_items=len(items),
                format_failure_rate=fail_rate,
                plcc=_safe_corr(plcc, pred_q, act_q),
                srcc=_safe_corr(srcc, pred_q, act_q),
                security_acc=float(np.mean(flag_accs)) if flag_accs else None))
        else:
            q_hits = [item["pred"]["semantic_quality"] == item["gt"]["quality"]
                      for item in valid]
            s_hits = [item["pred"]["semantic_security"] == item["gt"]["security"]
                      for item in valid]
            reports.append(MethodReport(
                method=method, watermark_type="semantic", n_items=len(items),
                format_failure_rate=fail_rate,
                quality_acc=float(np.mean(q_hits)) if q_hits else None,
                security_acc=float(np.mean(s_hits)) if s_hits else None))
    return reports


_COLUMNS = ("method", "type", "n", "plcc", "srcc", "quality_acc",
            "security_acc", "format_failure_rate")


def _cells(report: MethodReport) -> list[str]:
    def fmt(v):
        if v is None:
            return ""
        return f"{v:.4f}"

    return [report.method, report.watermark_type, str(report.n_items),
            fmt(report.plcc), fmt(report.srcc), fmt(report.quality_acc),
            fmt(report.security_acc), fmt(report.format_failure_rate)]


def report_csv(reports: Sequence[MethodReport]) -> str:
    """Deterministic CSV rendering, one row per method."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_COLUMNS)
    for report in reports:
        writer.writerow(_cells(report))
    return buf.getvalue()


def report_table(reports: Sequence[MethodReport]) -> str:
    """Fixed-width text table with the same cells as the CSV."""
    rows = [list(_COLUMNS)] + [_cells(r) for r in reports]
    widths = [max(len(row[i]) for row in rows) for i in range(len(_COLUMNS))]
    lines = []
    for k, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
