"""Confusion matrices, per-class rates, unweighted accuracy and Cohen's kappa.

Rows of the confusion matrix are true classes, columns are predictions.
Rates whose denominator is zero are reported as ``None`` rather than 0.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np


class ConfusionMatrix:
    def __init__(self, label_space: Sequence[str], counts=None):
        self.label_space = tuple(label_space)
        self._index = {c: k for k, c in enumerate(self.label_space)}
        M = len(self.label_space)
        if counts is None:
            counts = np.zeros((M, M), dtype=np.int64)
        counts = np.array(counts, dtype=np.int64)
        if counts.shape != (M, M):
            raise ValueError(f"counts must be {M}x{M}, got {counts.shape}")
        if (counts < 0).any():
            raise ValueError("counts must be non-negative")
        self.counts = counts

    def __repr__(self):
        return f"ConfusionMatrix({list(self.label_space)!r}, {self.counts.tolist()!r})"

    def __eq__(self, other):
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return self.label_space == other.label_space and np.array_equal(self.counts, other.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def accumulate(self, true_label, predicted_label) -> ConfusionMatrix:
        try:
            i, j = self._index[true_label], self._index[predicted_label]
        except KeyError as exc:
            raise KeyError(f"label {exc.args[0]!r} not in label space") from None
        self.counts[i, j] += 1
        return self

    def accumulate_indices(self, true_idx, pred_idx) -> ConfusionMatrix:
        np.add.at(self.counts, (np.asarray(true_idx), np.asarray(pred_idx)), 1)
        return self

    def __add__(self, other: ConfusionMatrix) -> ConfusionMatrix:
        if self.label_space != other.label_space:
            raise ValueError("cannot merge matrices over different label spaces")
        return ConfusionMatrix(self.label_space, self.counts + other.counts)

    def copy(self) -> ConfusionMatrix:
        return ConfusionMatrix(self.label_space, self.counts.copy())

    def to_dict(self) -> dict:
        return {"label_space": list(self.label_space), "counts": self.counts.tolist()}


def merge(matrices: Sequence[ConfusionMatrix], label_space=None) -> ConfusionMatrix:
    matrices = list(matrices)
    if label_space is None:
        label_space = matrices[0].label_space
    out = ConfusionMatrix(label_space)
    for cm in matrices:
        out = out + cm
    return out


def _rate(num: int, den: int):
    return num / den if den > 0 else None


@dataclass(frozen=True)
class ClassMetrics:
    label: str
    tp: int
    tn: int
    fp: int
    fn: int
    recall: float | None
    precision: float | None
    specificity: float | None
    f1: float | None

    def to_dict(self) -> dict:
        return asdict(self)


def per_class(cm: ConfusionMatrix, m: int) -> ClassMetrics:
    L = cm.counts
    total = int(L.sum())
    tp = int(L[m, m])
    fn = int(L[m, :].sum()) - tp
    fp = int(L[:, m].sum()) - tp
    tn = total - tp - fp - fn
    return ClassMetrics(
        cm.label_space[m],
        tp,
        tn,
        fp,
        fn,
        recall=_rate(tp, tp + fn),
        precision=_rate(tp, tp + fp),
        specificity=_rate(tn, tn + fp),
        f1=_rate(2 * tp, 2 * tp + fp + fn),
    )


def accuracy(cm: ConfusionMatrix) -> float:
    """Trace over grand total."""
    L = cm.counts
    M = L.shape[0]
    ones = np.ones((M, 1), dtype=np.int64)
    total = int((ones.T @ L @ ones)[0, 0])
    if total == 0:
        raise ValueError("accuracy of an empty confusion matrix is undefined")
    return int(np.trace(L)) / total


def cohens_kappa(cm: ConfusionMatrix) -> float | None:
    """Chance-corrected agreement written with all-ones matrices J::

        (tr(L) * J1 L J1 - tr(L J L)) / ((J1 L J1)^2 - tr(L J L))

    Evaluated in exact integer arithmetic; ``None`` when expected
    agreement is 1.
    """
    # object dtype keeps Python ints, so large corpora cannot overflow
    L = cm.counts.astype(object)
    M = L.shape[0]
    J = np.full((M, M), 1, dtype=object)
    ones = np.full((M, 1), 1, dtype=object)
    total = int(ones.T.dot(L).dot(ones)[0, 0])
    if total == 0:
        raise ValueError("kappa of an empty confusion matrix is undefined")
    chance = int(np.trace(L.dot(J).dot(L)))
    den = total * total - chance
    if den == 0:
        return None
    return (int(np.trace(L)) * total - chance) / den


def macro_average(values) -> float | None:
    vals = [v for v in values if v is not None]
    return sum(vals) / len(vals) if vals else None


def summarize(cm: ConfusionMatrix) -> dict:
    rows = [per_class(cm, m) for m in range(len(cm.label_space))]
    return {
        "total": cm.total,
        "alpha": accuracy(cm) if cm.total else None,
        "kappa": cohens_kappa(cm) if cm.total else None,
        "per_class": [r.to_dict() for r in rows],
        "macro": {
            key: macro_average(getattr(r, key) for r in rows)
            for key in ("recall", "precision", "specificity", "f1")
        },
    }


def _fmt(v, width=9):
    return f"{'-':>{width}}" if v is None else f"{v:>{width}.3f}"


def format_table(cm: ConfusionMatrix) -> str:
    """Aligned per-category table: counts, rates and the aggregates."""
    rows = [per_class(cm, m) for m in range(len(cm.label_space))]
    name_w = max([len("category")] + [len(c) for c in cm.label_space])
    head = (
        f"{'category':<{name_w}} {'TP':>6} {'TN':>6} {'FP':>6} {'FN':>6}"
        f" {'recall':>9} {'precision':>9} {'specific.':>9} {'F1':>9}"
    )
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(
            f"{r.label:<{name_w}} {r.tp:>6} {r.tn:>6} {r.fp:>6} {r.fn:>6}"
            f" {_fmt(r.recall)} {_fmt(r.precision)} {_fmt(r.specificity)} {_fmt(r.f1)}"
        )
    lines.append("-" * len(head))
    if cm.total:
        kappa = cohens_kappa(cm)
        lines.append(
            f"alpha = {accuracy(cm):.3f}   kappa = {'-' if kappa is None else f'{kappa:.3f}'}"
            f"   n = {cm.total}"
        )
    return "\n".join(lines)


def to_json(cm: ConfusionMatrix) -> str:
    return json.dumps({**cm.to_dict(), **summarize(cm)}, indent=1)
