"""Empirical fairness and performance metrics from thresholded predictions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UndefinedMetric

METRICS = ("acc", "balanced_acc", "eop_diff", "eod_diff", "one_minus_dimp", "balanced_diff")


def apply_thresholds(logits, groups, theta) -> np.ndarray:
    """Predict 1 iff ``logit >= theta[group]`` (inclusive)."""
    logits = np.asarray(logits, dtype=float)
    groups = np.asarray(groups)
    cut = np.where(groups == 1, theta[1], theta[0])
    return (logits >= cut).astype(np.int8)


@dataclass
class MetricReport:
    acc: float | None = None
    balanced_acc: float | None = None
    eop_diff: float | None = None
    eod_diff: float | None = None
    one_minus_dimp: float | None = None
    balanced_diff: float | None = None
    rates: dict = field(default_factory=dict)
    undefined: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        doc = {name: getattr(self, name) for name in METRICS}
        doc["rates"] = self.rates
        if self.undefined:
            doc["undefined"] = self.undefined
        return doc


def _rate(pred, mask, metric, what):
    n = int(mask.sum())
    if n == 0:
        raise UndefinedMetric(metric, f"no samples with {what}")
    return float(pred[mask].sum()) / n


def evaluate(labels, groups, predictions, metrics=METRICS, strict: bool = True) -> MetricReport:
    """Accuracy and group-fairness gaps from empirical confusion counts.

    With ``strict`` an undefined requested metric raises
    :class:`UndefinedMetric`; otherwise it is left as ``None`` and the reason
    recorded in ``report.undefined``.
    """
    y = np.asarray(labels).astype(int)
    a = np.asarray(groups).astype(int)
    p = np.asarray(predictions).astype(int)
    if not (y.shape == a.shape == p.shape):
        raise ValueError("labels, groups and predictions must have equal length")
    unknown = set(metrics) - set(METRICS)
    if unknown:
        raise ValueError(f"unknown metrics: {sorted(unknown)}")
    report = MetricReport()

    per_group = {}
    for g in (0, 1):
        entry = {}
        pos, neg = (y == 1) & (a == g), (y == 0) & (a == g)
        if pos.any():
            entry["tp"] = _rate(p, pos, "tp", "")
            entry["fn"] = 1.0 - entry["tp"]
        if neg.any():
            entry["fp"] = _rate(p, neg, "fp", "")
            entry["tn"] = 1.0 - entry["fp"]
        per_group[str(g)] = entry
    report.rates = per_group

    def tp(g, metric):
        return _rate(p, (y == 1) & (a == g), metric, f"y=1, a={g}")

    def fp(g, metric):
        return _rate(p, (y == 0) & (a == g), metric, f"y=0, a={g}")

    def acc():
        if y.size == 0:
            raise UndefinedMetric("acc", "no samples")
        return float(np.mean(p == y))

    def balanced_acc():
        return 0.5 * (_rate(p, y == 1, "balanced_acc", "y=1") + 1.0 - _rate(p, y == 0, "balanced_acc", "y=0"))

    def eop_diff():
        return abs(tp(1, "eop_diff") - tp(0, "eop_diff"))

    def eod_diff():
        return abs(tp(1, "eod_diff") - tp(0, "eod_diff")) + abs(fp(1, "eod_diff") - fp(0, "eod_diff"))

    def balanced_diff():
        m = "balanced_diff"
        return abs((tp(1, m) + 1.0 - fp(1, m)) - (tp(0, m) + 1.0 - fp(0, m)))

    def one_minus_dimp():
        m = "one_minus_dimp"
        sel1 = _rate(p, a == 1, m, "a=1")
        sel0 = _rate(p, a == 0, m, "a=0")
        if sel0 == 0.0:
            raise UndefinedMetric(m, "group 0 has no positive predictions")
        return abs(1.0 - sel1 / sel0)

    funcs = {"acc": acc, "balanced_acc": balanced_acc, "eop_diff": eop_diff, "eod_diff": eod_diff,
             "one_minus_dimp": one_minus_dimp, "balanced_diff": balanced_diff}
    for name in METRICS:
        if name not in metrics:
            continue
        try:
            setattr(report, name, funcs[name]())
        except UndefinedMetric as exc:
            if strict:
                raise
            report.undefined[name] = str(exc)
    return report


def evaluate_thresholds(data, theta, metrics=METRICS, strict: bool = True) -> MetricReport:
    """Convenience wrapper for a :class:`~fairthresh.data.GroupedLogits`."""
    pred = apply_thresholds(data.logits, data.groups, theta)
    return evaluate(data.labels, data.groups, pred, metrics=metrics, strict=strict)
