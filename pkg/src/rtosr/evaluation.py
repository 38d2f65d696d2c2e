"""Open-set inference and detection/classification metrics.

At test time a sample walks the exits in order and leaves at the first one
whose maximum softmax score strictly exceeds that exit's inference threshold;
if no exit qualifies the sample is declared unknown. Ground truth is never
consulted during the walk.

Scoring partitions known test samples into K1 (exited, correct), K2 (exited,
wrong class) and K3 (no exit -> false negative), and unknown samples into U1
(no exit -> true negative) and U2 (exited -> false positive). Detection
metrics (F1, MCC, unknown accuracy) are computed over the resulting
TP/TN/FP/FN counts with knowns as the positive class; classification quality
on knowns is top-k accuracy at the taken exit.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from .model import MultiExitNetwork
from .thresholds import KIND_INFERENCE, ThresholdSet

UNKNOWN = "UNKNOWN"

KNOWN_CASES = ("K1", "K2", "K3")
UNKNOWN_CASES = ("U1", "U2")

VERDICT_COLUMNS = (
    "sample_id",
    "true_label",
    "exit_index",
    "predicted",
    "case_tag",
    "max_score_at_exit",
)


@dataclass
class OSRVerdict:
    """Outcome of early-exit inference for one sample.

    ``exit_index`` is 1-based, or None when no exit qualified (the sample is
    declared unknown). ``probs`` and ``max_score`` refer to the taken exit,
    or to the final exit for unknown verdicts.
    """

    exit_index: int | None
    predicted: int | str
    max_score: float
    probs: np.ndarray
    case_tag: str | None = None

    @property
    def exited(self) -> bool:
        return self.exit_index is not None


@dataclass(frozen=True)
class DetectionConfusion:
    """Binary detection counts with known-class samples as positives."""

    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be nonnegative")

    def __add__(self, other: "DetectionConfusion") -> "DetectionConfusion":
        return DetectionConfusion(
            self.tp + other.tp,
            self.tn + other.tn,
            self.fp + other.fp,
            self.fn + other.fn,
        )

    @property
    def has_zero_marginal(self) -> bool:
        return 0 in (
            self.tp + self.fp,
            self.tp + self.fn,
            self.tn + self.fp,
            self.tn + self.fn,
        )


def infer_from_probs(
    probs: Sequence[np.ndarray], thresholds: ThresholdSet
) -> OSRVerdict:
    """Threshold walk over one sample's per-exit probability vectors."""
    if len(probs) != thresholds.n_exits:
        raise ValueError(
            f"{len(probs)} exits vs {thresholds.n_exits} thresholds"
        )
    for k, q in enumerate(probs):
        score = float(q.max())
        if score > thresholds.values[k]:
            return OSRVerdict(
                exit_index=k + 1,
                predicted=int(q.argmax()),
                max_score=score,
                probs=np.asarray(q, dtype=float),
            )
    final = np.asarray(probs[-1], dtype=float)
    return OSRVerdict(
        exit_index=None,
        predicted=UNKNOWN,
        max_score=float(final.max()),
        probs=final,
    )


def infer(
    net: MultiExitNetwork, x: np.ndarray, inference_thresholds: ThresholdSet
) -> OSRVerdict:
    if inference_thresholds.kind != KIND_INFERENCE:
        raise ValueError("infer requires inference thresholds")
    outputs = net.forward(np.asarray(x, dtype=float))
    return infer_from_probs(outputs.probs, inference_thresholds)


def infer_batch(
    net: MultiExitNetwork, x: np.ndarray, inference_thresholds: ThresholdSet
) -> list[OSRVerdict]:
    if inference_thresholds.kind != KIND_INFERENCE:
        raise ValueError("infer requires inference thresholds")
    probs, _ = net.forward_batch(np.asarray(x, dtype=float))
    return [
        infer_from_probs([q[i] for q in probs], inference_thresholds)
        for i in range(probs[0].shape[0])
    ]


def score_known(verdict: OSRVerdict, y_true: int) -> tuple[str, DetectionConfusion]:
    """Tag a known test sample and produce its detection increment."""
    if verdict.exited:
        tag = "K1" if verdict.predicted == y_true else "K2"
        delta = DetectionConfusion(tp=1)
    else:
        tag = "K3"
        delta = DetectionConfusion(fn=1)
    verdict.case_tag = tag
    return tag, delta


def score_unknown(verdict: OSRVerdict) -> tuple[str, DetectionConfusion]:
    """Tag an unknown test sample and produce its detection increment."""
    if verdict.exited:
        tag = "U2"
        delta = DetectionConfusion(fp=1)
    else:
        tag = "U1"
        delta = DetectionConfusion(tn=1)
    verdict.case_tag = tag
    return tag, delta


def f1(c: DetectionConfusion) -> float:
    """2*tp / (2*tp + fp + fn); NaN when the denominator is zero."""
    denom = 2 * c.tp + c.fp + c.fn
    if denom == 0:
        return math.nan
    return 2 * c.tp / denom


def mcc(c: DetectionConfusion) -> float:
    """Matthews correlation coefficient, overflow-safe.

    Products are taken over Python integers (arbitrary precision) before the
    final float division. Any zero marginal yields 0.0; callers can detect
    that case via ``DetectionConfusion.has_zero_marginal``.
    """
    if c.has_zero_marginal:
        return 0.0
    num = c.tp * c.tn - c.fp * c.fn
    den = (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn)
    return float(num) / math.sqrt(den)


def unknown_accuracy(c: DetectionConfusion) -> float:
    """Percentage of unknown test samples rejected as unknown."""
    if c.tn + c.fp == 0:
        raise ValueError("no unknown samples scored")
    return 100.0 * c.tn / (c.tn + c.fp)


@dataclass
class EvaluatedSample:
    """One test sample's verdict joined with its ground truth."""

    sample_id: str
    y_true: int | str  # class index, or UNKNOWN for unknown-class samples
    verdict: OSRVerdict


def topk_known_accuracy(records: Iterable[EvaluatedSample], k: int) -> float:
    """Percentage of known samples that exited with the true class in its
    exit's top-k scores. Non-exiting known samples count as failures."""
    known = [r for r in records if r.y_true != UNKNOWN]
    if not known:
        raise ValueError("no known samples scored")
    n_classes = known[0].verdict.probs.shape[0]
    if k > n_classes:
        raise ValueError(f"k={k} exceeds n_classes={n_classes}")
    hits = 0
    for r in known:
        if not r.verdict.exited:
            continue
        top = np.argsort(-r.verdict.probs, kind="stable")[:k]
        if r.y_true in top:
            hits += 1
    return 100.0 * hits / len(known)


def score_all(samples: Iterable[EvaluatedSample]) -> DetectionConfusion:
    """Score every sample in place (sets case tags) and merge the counts."""
    total = DetectionConfusion()
    for s in samples:
        if s.y_true == UNKNOWN:
            _, delta = score_unknown(s.verdict)
        else:
            _, delta = score_known(s.verdict, s.y_true)
        total = total + delta
    return total


def metrics_report(
    samples: list[EvaluatedSample], confusion: DetectionConfusion
) -> dict:
    """Detection + classification summary for one evaluated test set."""
    n_classes = next(
        (s.verdict.probs.shape[0] for s in samples), 0
    )
    report = {
        "tp": confusion.tp,
        "tn": confusion.tn,
        "fp": confusion.fp,
        "fn": confusion.fn,
        "f1": f1(confusion),
        "mcc": mcc(confusion),
        "mcc_degenerate": confusion.has_zero_marginal,
        "unknown_acc": unknown_accuracy(confusion)
        if confusion.tn + confusion.fp > 0
        else None,
    }
    for k in (1, 3, 5):
        key = f"known_top{k}"
        if k <= n_classes and any(s.y_true != UNKNOWN for s in samples):
            report[key] = topk_known_accuracy(samples, k)
        else:
            report[key] = None
    return report


def write_verdict_csv(samples: Iterable[EvaluatedSample], f: TextIO) -> None:
    w = csv.writer(f)
    w.writerow(VERDICT_COLUMNS)
    for s in samples:
        v = s.verdict
        w.writerow(
            [
                s.sample_id,
                s.y_true,
                "" if v.exit_index is None else v.exit_index,
                v.predicted,
                v.case_tag or "",
                repr(v.max_score),
            ]
        )
