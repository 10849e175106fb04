"""Metrics and experiment harness: confusion matrices, per-class
accuracy/F1, head-movement-grouped breakdowns, and the two ablation
comparisons (domain adaptation on/off, target low-pass on/off).

Per-class accuracy is recall (diagonal over truth-row sum); per-class F1 is
one-vs-rest. Every metric derives from a single confusion matrix, never
from independently tallied counts, so the algebraic identities between them
hold exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dann as dann_mod
from . import signal as sig
from .datasets import ActivityLabel, HeadMovement, LabeledWindow

N_CLASSES = len(ActivityLabel)


@dataclass
class ClassMetrics:
    accuracy: float  # recall: diagonal over truth-row sum
    f1: float
    support: int
    degenerate: bool = False


@dataclass
class EvalReport:
    overall_accuracy: float
    per_class: dict
    macro_f1: float
    confusion: np.ndarray
    total: int
    groups: dict | None = None

    def to_dict(self) -> dict:
        out = {
            "format_version": 1,
            "overall_accuracy": self.overall_accuracy,
            "macro_f1": self.macro_f1,
            "total": self.total,
            "per_class": {
                lab.name.lower(): {
                    "accuracy": m.accuracy,
                    "f1": m.f1,
                    "support": m.support,
                    "degenerate": m.degenerate,
                }
                for lab, m in self.per_class.items()
            },
            "confusion": self.confusion.tolist(),
        }
        if self.groups is not None:
            out["groups"] = {h.value: r.to_dict() for h, r in self.groups.items()}
        return out


def confusion(truths, predictions) -> np.ndarray:
    """4x4 count matrix, rows = truth, columns = prediction."""
    truths = np.asarray([int(t) for t in truths])
    predictions = np.asarray([int(p) for p in predictions])
    if truths.shape != predictions.shape:
        raise ValueError(
            f"{truths.shape[0]} truths vs {predictions.shape[0]} predictions"
        )
    if truths.size == 0:
        raise ValueError("cannot build a confusion matrix from no samples")
    if truths.min() < 0 or truths.max() >= N_CLASSES or predictions.min() < 0 \
            or predictions.max() >= N_CLASSES:
        raise ValueError("class index outside the four-class vocabulary")
    counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(counts, (truths, predictions), 1)
    return counts


def _metrics_from_confusion(counts: np.ndarray):
    total = int(counts.sum())
    overall = float(np.trace(counts)) / total
    per_class = {}
    f1s = []
    for c in range(N_CLASSES):
        row = int(counts[c].sum())
        col = int(counts[:, c].sum())
        diag = int(counts[c, c])
        recall = diag / row if row else 0.0
        f1 = 2.0 * diag / (row + col) if (row + col) else 0.0
        degenerate = row == 0 and col == 0
        per_class[ActivityLabel(c)] = ClassMetrics(
            accuracy=recall, f1=f1, support=row, degenerate=degenerate,
        )
        f1s.append(f1)
    return overall, per_class, float(np.mean(f1s)), total


def report(truths, predictions, groups=None) -> EvalReport:
    """Full evaluation report, optionally broken down by head movement.

    groups, when given, is a per-sample HeadMovement sequence aligned with
    truths/predictions; each condition present gets its own sub-report.
    """
    counts = confusion(truths, predictions)
    overall, per_class, macro_f1, total = _metrics_from_confusion(counts)
    grouped = None
    if groups is not None:
        groups = list(groups)
        if len(groups) != total:
            raise ValueError(f"{len(groups)} group tags vs {total} samples")
        grouped = {}
        for cond in HeadMovement:
            mask = [g == cond for g in groups]
            if not any(mask):
                continue
            sel = np.flatnonzero(mask)
            grouped[cond] = report(
                [truths[i] for i in sel], [predictions[i] for i in sel],
            )
    return EvalReport(
        overall_accuracy=overall,
        per_class=per_class,
        macro_f1=macro_f1,
        confusion=counts,
        total=total,
        groups=grouped,
    )


def evaluate_model(model, windows, grouped: bool = True) -> EvalReport:
    """Predict a window set and report, grouped by head movement when the
    set carries more than one condition."""
    preds = dann_mod.predict_batch(model, windows)
    truths = [int(w.label) for w in windows]
    tags = [w.head for w in windows]
    use_groups = grouped and len(set(tags)) > 1
    return report(truths, preds, groups=tags if use_groups else None)


def render_table(rep: EvalReport) -> str:
    """Aligned text table: head-movement columns by activity rows, an
    Acc/F1 pair per cell, plus the per-condition overall row."""
    conds = list(rep.groups.keys()) if rep.groups else []
    headers = [c.value for c in conds] + ["average"]
    width = 14
    lines = []
    lines.append("activity".ljust(12) + "".join(h.center(width) for h in headers))
    lines.append("".ljust(12) + ("acc    f1".center(width)) * len(headers))
    sub_reports = [rep.groups[c] for c in conds] + [rep]
    for lab in ActivityLabel:
        cells = []
        for sub in sub_reports:
            m = sub.per_class[lab]
            cells.append(f"{m.accuracy:.2f}   {m.f1:.2f}".center(width))
        lines.append(lab.name.lower().ljust(12) + "".join(cells))
    cells = [
        f"{sub.overall_accuracy:.2f}   {sub.macro_f1:.2f}".center(width)
        for sub in sub_reports
    ]
    lines.append("overall".ljust(12) + "".join(cells))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# ablations
# ---------------------------------------------------------------------------

@dataclass
class DaComparison:
    with_da: EvalReport
    without_da: EvalReport
    accuracy_gap: float  # with_da minus without_da, on target test
    train_report_da: dann_mod.TrainReport
    train_report_src: dann_mod.TrainReport

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "with_da": self.with_da.to_dict(),
            "without_da": self.without_da.to_dict(),
            "accuracy_gap": self.accuracy_gap,
        }


def ablate_da(source_splits, target_splits, config) -> DaComparison:
    """Train with and without the adversarial pathway under identical seeds
    and compare on the target test set."""
    model_da, rep_da = dann_mod.train_dann(source_splits, target_splits, config)
    model_src, rep_src = dann_mod.train_source_only(source_splits, config)
    tgt_test = target_splits[2]
    with_da = evaluate_model(model_da, tgt_test)
    without_da = evaluate_model(model_src, tgt_test)
    return DaComparison(
        with_da=with_da,
        without_da=without_da,
        accuracy_gap=with_da.overall_accuracy - without_da.overall_accuracy,
        train_report_da=rep_da,
        train_report_src=rep_src,
    )


@dataclass
class FilterComparison:
    filtered: EvalReport
    unfiltered: EvalReport
    overall_delta: float  # filtered minus unfiltered
    per_condition_delta: dict

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "filtered": self.filtered.to_dict(),
            "unfiltered": self.unfiltered.to_dict(),
            "overall_delta": self.overall_delta,
            "per_condition_delta": {
                h.value: d for h, d in self.per_condition_delta.items()
            },
        }


def filter_windows(windows, spec: sig.FilterSpec | None = None,
                   rate_hz: float = 25.0) -> list:
    """Zero-phase low-pass both channels of every window.

    Window-level data is already magnitudes, so the filter applies to the
    magnitude channels directly; slight filter undershoot clamps at zero to
    keep the acceleration channel non-negative.
    """
    if spec is None:
        spec = sig.FilterSpec(cutoff_hz=5.0, order=4, zero_phase=True)
    out = []
    for w in windows:
        data = np.column_stack([
            np.maximum(sig.low_pass(w.data[:, k], spec, rate_hz), 0.0)
            for k in range(2)
        ])
        out.append(LabeledWindow(
            data=data, label=w.label, domain=w.domain, head=w.head, origin=w.origin,
        ))
    return out


def ablate_filter(source_splits, target_splits_raw, config,
                  spec: sig.FilterSpec | None = None) -> FilterComparison:
    """Run the adaptation pipeline twice, with and without the target-domain
    low-pass, and report grouped accuracy per head-movement condition.

    target_splits_raw must hold unfiltered windows; the filtered arm applies
    the low-pass to every target split (train, val, test) before training.
    """
    filtered_splits = tuple(filter_windows(part, spec) for part in target_splits_raw)
    model_f, _ = dann_mod.train_dann(source_splits, filtered_splits, config)
    model_u, _ = dann_mod.train_dann(source_splits, target_splits_raw, config)
    rep_f = evaluate_model(model_f, filtered_splits[2])
    rep_u = evaluate_model(model_u, target_splits_raw[2])
    deltas = {}
    if rep_f.groups and rep_u.groups:
        for cond in rep_f.groups:
            if cond in rep_u.groups:
                deltas[cond] = (
                    rep_f.groups[cond].overall_accuracy
                    - rep_u.groups[cond].overall_accuracy
                )
    return FilterComparison(
        filtered=rep_f,
        unfiltered=rep_u,
        overall_delta=rep_f.overall_accuracy - rep_u.overall_accuracy,
        per_condition_delta=deltas,
    )
