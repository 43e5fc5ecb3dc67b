"""Precision/recall/F1 evaluation of predictions against gold annotations.

Two table shapes are produced:
  * per-class rows for a single field (one row per label value, class
    support = gold count of that value), and
  * per-feature rows for boolean rubric fields (one row per feature,
    support = number of gold-defined units, metrics for the True class).

The weighted average is the support-weighted arithmetic mean of the row
metrics; a micro-average mode (pooled counts) is also available.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Hashable, Mapping, Optional, Sequence


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int
    degenerate: bool = False

    def rounded(self, digits: int = 2) -> dict:
        return {
            "precision": round(self.precision, digits),
            "recall": round(self.recall, digits),
            "f1": round(self.f1, digits),
            "support": self.support,
        }


@dataclass
class MetricReport:
    per_label: dict[str, ClassMetrics]
    weighted_average: dict[str, float]
    extra: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "per_label": {
                k: {
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "support": m.support,
                    "degenerate": m.degenerate,
                }
                for k, m in self.per_label.items()
            },
            "weighted_average": dict(self.weighted_average),
            "extra": dict(self.extra),
        }


def confusion_counts(
    pred: Mapping[str, Any], gold: Mapping[str, Any]
) -> dict[Hashable, ConfusionCounts]:
    """Per-class one-vs-rest confusion counts over a shared id set.

    Units whose gold label is None (conditional field not defined) are
    excluded. Ids present in gold but absent from pred raise, listing the
    missing ids.
    """
    ids = sorted(k for k, v in gold.items() if v is not None)
    missing = [k for k in ids if k not in pred]
    if missing:
        raise EvaluationError(f"predictions missing for ids: {missing}")
    classes = sorted(
        {gold[k] for k in ids} | {pred[k] for k in ids if pred[k] is not None},
        key=repr,
    )
    out: dict[Hashable, ConfusionCounts] = {}
    for cls in classes:
        tp = fp = fn = tn = 0
        for k in ids:
            p_is = pred[k] == cls
            g_is = gold[k] == cls
            if p_is and g_is:
                tp += 1
            elif p_is:
                fp += 1
            elif g_is:
                fn += 1
            else:
                tn += 1
        out[cls] = ConfusionCounts(tp, fp, fn, tn)
    return out


def precision_recall_f1(
    counts: ConfusionCounts, support: Optional[int] = None
) -> ClassMetrics:
    """Standard P/R/F1 from counts; zero denominators yield 0, flagged.

    support defaults to the class support (tp + fn); pass an explicit
    value for feature-style rows where support is the evaluated-unit
    count.
    """
    if min(counts.tp, counts.fp, counts.fn, counts.tn) < 0:
        raise EvaluationError("negative confusion counts")
    degenerate = False
    if counts.tp + counts.fp > 0:
        precision = counts.tp / (counts.tp + counts.fp)
    else:
        precision, degenerate = 0.0, True
    if counts.tp + counts.fn > 0:
        recall = counts.tp / (counts.tp + counts.fn)
    else:
        recall, degenerate = 0.0, True
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        degenerate = True
    return ClassMetrics(
        precision=precision,
        recall=recall,
        f1=f1,
        support=counts.tp + counts.fn if support is None else support,
        degenerate=degenerate,
    )


def weighted_average(per_label: Mapping[str, ClassMetrics]) -> dict[str, float]:
    """Support-weighted arithmetic mean of per-row metrics."""
    total = sum(m.support for m in per_label.values())
    if total <= 0:
        raise EvaluationError("zero total support")
    return {
        "precision": sum(m.precision * m.support for m in per_label.values()) / total,
        "recall": sum(m.recall * m.support for m in per_label.values()) / total,
        "f1": sum(m.f1 * m.support for m in per_label.values()) / total,
    }


def micro_average(counts: Mapping[str, ConfusionCounts]) -> dict[str, float]:
    """Pool counts across rows, then compute P/R/F1 once."""
    pooled = ConfusionCounts(
        tp=sum(c.tp for c in counts.values()),
        fp=sum(c.fp for c in counts.values()),
        fn=sum(c.fn for c in counts.values()),
        tn=sum(c.tn for c in counts.values()),
    )
    m = precision_recall_f1(pooled)
    return {"precision": m.precision, "recall": m.recall, "f1": m.f1}


def evaluate_label_field(
    pred: Mapping[str, Any],
    gold: Mapping[str, Any],
    label_names: Optional[Mapping[Any, str]] = None,
) -> MetricReport:
    """Per-class report for one field (e.g. in/out of scope)."""
    counts = confusion_counts(pred, gold)
    per_label = {}
    for cls, c in counts.items():
        name = label_names.get(cls, str(cls)) if label_names else str(cls)
        per_label[name] = precision_recall_f1(c)
    return MetricReport(per_label, weighted_average(per_label))


def evaluate_features(
    pred_records: Mapping[str, Mapping[str, Any]],
    gold_records: Mapping[str, Mapping[str, Any]],
    features: Sequence[str],
) -> MetricReport:
    """Per-feature report over boolean rubric fields.

    Each feature row evaluates the True class on the units where gold
    defines the feature; row support is that unit count, so conditional
    features carry smaller supports.
    """
    per_label: dict[str, ClassMetrics] = {}
    counts_by_feature: dict[str, ConfusionCounts] = {}
    for feat in features:
        gold_f = {k: rec.get(feat) for k, rec in gold_records.items()}
        pred_f = {
            k: pred_records.get(k, {}).get(feat)
            for k in gold_records
            if gold_f.get(k) is not None
        }
        defined = {k: v for k, v in gold_f.items() if v is not None}
        if not defined:
            continue
        missing = [k for k in defined if k not in pred_records]
        if missing:
            raise EvaluationError(f"predictions missing for ids: {sorted(missing)}")
        counts = confusion_counts(pred_f, defined).get(True, ConfusionCounts(tn=len(defined)))
        counts_by_feature[feat] = counts
        per_label[feat] = precision_recall_f1(counts, support=len(defined))
    if not per_label:
        raise EvaluationError("no evaluable features")
    report = MetricReport(per_label, weighted_average(per_label))
    report.extra["micro_f1"] = micro_average(counts_by_feature)["f1"]
    return report


def link_retrieval_accuracy(
    pred_links: Mapping[str, Optional[str]],
    gold_links: Mapping[str, Optional[str]],
    doi_resolver=None,
    extra_hosts: Optional[dict] = None,
) -> float:
    """Fraction of gold-referenced links the predictions recovered.

    Links are compared after canonicalization, so a DOI and the landing
    page it resolves to count as the same repository. The "Appendix"
    sentinel matches itself. Units with no gold link are not evaluated.
    """
    from .links import Resolution, resolve_link

    evaluated = {k: v for k, v in gold_links.items() if v}
    if not evaluated:
        raise EvaluationError("no gold links to evaluate")

    def canon(value: str) -> str:
        if value == "Appendix":
            return value
        link = resolve_link(value, doi_resolver=doi_resolver, extra_hosts=extra_hosts)
        if link.resolution == Resolution.OK:
            return link.canonical_root or value
        return value.strip()

    matches = 0
    for k, gold_value in evaluated.items():
        pred_value = pred_links.get(k)
        if not pred_value:
            continue
        if canon(pred_value) == canon(gold_value):
            matches += 1
    return matches / len(evaluated)


def render_metric_table(report: MetricReport, title: str = "") -> str:
    """Fixed-width text table: label, precision, recall, F1, support."""
    rows = [("", "Precision", "Recall", "F1 Score", "Support")]
    for name, m in report.per_label.items():
        rows.append(
            (name, f"{m.precision:.2f}", f"{m.recall:.2f}", f"{m.f1:.2f}", str(m.support))
        )
    wa = report.weighted_average
    rows.append(
        ("Weighted average", f"{wa['precision']:.2f}", f"{wa['recall']:.2f}", f"{wa['f1']:.2f}", "")
    )
    width0 = max(len(r[0]) for r in rows) + 2
    widths = [width0, 11, 8, 10, 9]
    lines = [title] if title else []
    for r in rows:
        lines.append(
            r[0].ljust(widths[0])
            + "".join(str(cell).rjust(w) for cell, w in zip(r[1:], widths[1:]))
        )
    return "\n".join(lines) + "\n"
