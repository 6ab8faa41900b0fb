"""Confusion-matrix metrics and the harmonic-mean summary.

The AD class is the positive class for the confusion counts; per-class
precision/recall/F1 are obtained by treating either class as positive over
the same matrix. Zero denominators yield 0 together with an ``undefined``
flag instead of raising, so a degenerate fold cannot abort a whole
experiment run.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .chat import Group
from .errors import NonPositiveInputError, SubjectMismatchError

# canonical presentation order of the decision rules in reports
RULE_ORDER = ("pbar_c", "pbar_ad", "dbar", "dstar")


@dataclass(frozen=True)
class ConfusionCounts:
    """Counts with AD as the positive class."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    undefined: tuple[str, ...] = ()


def confusion(
    predictions: Mapping[str, Group], gold: Mapping[str, Group]
) -> ConfusionCounts:
    """Tally predictions against gold labels (AD positive)."""
    if set(predictions) != set(gold):
        missing = set(gold) ^ set(predictions)
        raise SubjectMismatchError(
            f"predictions and gold labels cover different subjects: {sorted(missing)[:5]}"
        )
    tp = fp = fn = tn = 0
    for subject_id, predicted in predictions.items():
        actual = gold[subject_id]
        if actual == Group.AD:
            if predicted == Group.AD:
                tp += 1
            else:
                fn += 1
        else:
            if predicted == Group.AD:
                fp += 1
            else:
                tn += 1
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def precision_recall_f1(counts: ConfusionCounts, positive: Group = Group.AD) -> PRF:
    """P = TP/(TP+FP), R = TP/(TP+FN), F1 = 2PR/(P+R) for the chosen class.

    Treating the control class as positive swaps TP with TN and FP with FN.
    """
    if positive == Group.AD:
        tp, fp, fn = counts.tp, counts.fp, counts.fn
    else:
        tp, fp, fn = counts.tn, counts.fn, counts.fp
    undefined: list[str] = []
    if tp + fp == 0:
        precision = 0.0
        undefined.append("precision")
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall = 0.0
        undefined.append("recall")
    else:
        recall = tp / (tp + fn)
    if precision + recall == 0:
        f1 = 0.0
        undefined.append("f1")
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return PRF(precision=precision, recall=recall, f1=f1, undefined=tuple(undefined))


def accuracy(counts: ConfusionCounts) -> float:
    if counts.total == 0:
        return 0.0
    return (counts.tp + counts.tn) / counts.total


def harmonic_mean(values: Sequence[float]) -> float:
    """n / sum(1/x); defined only for strictly positive inputs."""
    if not values:
        raise NonPositiveInputError("harmonic mean of an empty sequence")
    for v in values:
        if v <= 0:
            raise NonPositiveInputError(f"harmonic mean requires positive values, got {v!r}")
    return len(values) / sum(1.0 / v for v in values)


@dataclass
class RuleResult:
    """Evaluation of one decision rule over all subjects."""

    rule: str
    counts: ConfusionCounts
    accuracy: float
    ad: PRF
    control: PRF
    hm: float | None  # None when any HM input is 0 (degenerate fold)

    @classmethod
    def from_predictions(
        cls, rule: str, predictions: Mapping[str, Group], gold: Mapping[str, Group]
    ) -> "RuleResult":
        counts = confusion(predictions, gold)
        acc = accuracy(counts)
        ad = precision_recall_f1(counts, Group.AD)
        control = precision_recall_f1(counts, Group.CONTROL)
        inputs = (acc, ad.f1, control.f1)
        hm = harmonic_mean(inputs) if all(v > 0 for v in inputs) else None
        return cls(rule=rule, counts=counts, accuracy=acc, ad=ad, control=control, hm=hm)

    def to_dict(self) -> dict:
        return {
            "rule": self.rule,
            "counts": {
                "tp": self.counts.tp,
                "fp": self.counts.fp,
                "fn": self.counts.fn,
                "tn": self.counts.tn,
            },
            "accuracy": self.accuracy,
            "ad": {
                "precision": self.ad.precision,
                "recall": self.ad.recall,
                "f1": self.ad.f1,
                "undefined": list(self.ad.undefined),
            },
            "control": {
                "precision": self.control.precision,
                "recall": self.control.recall,
                "f1": self.control.f1,
                "undefined": list(self.control.undefined),
            },
            "hm": self.hm,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RuleResult":
        def prf(block: dict) -> PRF:
            return PRF(
                precision=block["precision"],
                recall=block["recall"],
                f1=block["f1"],
                undefined=tuple(block.get("undefined", ())),
            )

        return cls(
            rule=payload["rule"],
            counts=ConfusionCounts(**payload["counts"]),
            accuracy=payload["accuracy"],
            ad=prf(payload["ad"]),
            control=prf(payload["control"]),
            hm=payload["hm"],
        )


@dataclass
class EvaluationReport:
    """Per-rule results of one experiment, plus run identification."""

    model: str
    rules: dict[str, RuleResult] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"model": self.model, "rules": {r: res.to_dict() for r, res in self.rules.items()}}

    @classmethod
    def from_dict(cls, payload: dict) -> "EvaluationReport":
        return cls(
            model=payload["model"],
            rules={r: RuleResult.from_dict(res) for r, res in payload["rules"].items()},
        )

    def _ordered_rules(self) -> list[str]:
        known = [r for r in RULE_ORDER if r in self.rules]
        extra = sorted(r for r in self.rules if r not in RULE_ORDER)
        return known + extra

    def to_csv(self) -> str:
        """Rows shaped like the published results tables; raw values rounded
        to 2 decimals for presentation."""
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(
            ["model", "rule", "acc", "P_AD", "R_AD", "F1_AD", "P_C", "R_C", "F1_C", "HM"]
        )
        for rule in self._ordered_rules():
            res = self.rules[rule]
            writer.writerow(
                [
                    self.model,
                    rule,
                    f"{res.accuracy:.2f}",
                    f"{res.ad.precision:.2f}",
                    f"{res.ad.recall:.2f}",
                    f"{res.ad.f1:.2f}",
                    f"{res.control.precision:.2f}",
                    f"{res.control.recall:.2f}",
                    f"{res.control.f1:.2f}",
                    "" if res.hm is None else f"{res.hm:.2f}",
                ]
            )
        return buf.getvalue()
