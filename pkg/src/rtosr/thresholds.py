"""Per-exit confidence thresholds.

Training thresholds start at zero and are refreshed periodically as the
median, over validation samples, of the maximum softmax score at each exit.
Inference thresholds apply the same median rule once, to the selected best
model. During training a sample leaves at the first exit whose max score
exceeds the exit's threshold AND whose argmax matches the true label; samples
that never qualify are attributed to the final exit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError
from .model import MultiExitNetwork

KIND_TRAINING = "training"
KIND_INFERENCE = "inference"


@dataclass(frozen=True)
class ThresholdSet:
    values: tuple[float, ...]
    kind: str
    epoch_computed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.kind not in (KIND_TRAINING, KIND_INFERENCE):
            raise ValueError(f"kind must be training or inference, got {self.kind!r}")
        if any(not 0.0 <= v <= 1.0 for v in self.values):
            raise ValueError("threshold values must lie in [0, 1]")

    @property
    def n_exits(self) -> int:
        return len(self.values)


def init_training_thresholds(n_exits: int) -> ThresholdSet:
    if n_exits < 2:
        raise ValueError("n_exits must be >= 2")
    return ThresholdSet((0.0,) * n_exits, KIND_TRAINING, epoch_computed=0)


def max_scores_per_exit(net: MultiExitNetwork, x: np.ndarray) -> list[np.ndarray]:
    """Per-exit array of each sample's maximum softmax score."""
    probs, _ = net.forward_batch(x)
    return [q.max(axis=1) for q in probs]


def median_thresholds(
    net: MultiExitNetwork, validation_x: np.ndarray, kind: str, epoch: int
) -> ThresholdSet:
    validation_x = np.asarray(validation_x, dtype=float)
    if validation_x.size == 0:
        raise CalibrationError("validation set is empty")
    scores = max_scores_per_exit(net, validation_x)
    values = tuple(float(np.median(s)) for s in scores)
    return ThresholdSet(values, kind, epoch_computed=epoch)


def update_training_thresholds(
    net: MultiExitNetwork, validation_x: np.ndarray, epoch: int
) -> ThresholdSet:
    return median_thresholds(net, validation_x, KIND_TRAINING, epoch)


def compute_inference_thresholds(
    best_net: MultiExitNetwork, validation_x: np.ndarray, epoch: int = 0
) -> ThresholdSet:
    return median_thresholds(best_net, validation_x, KIND_INFERENCE, epoch)


def training_exits(
    probs: list[np.ndarray],
    y_true: np.ndarray,
    thresholds: ThresholdSet,
    penalize_no_exit: bool = False,
) -> np.ndarray:
    """1-based exit indices for a batch under the training exit rule.

    The first exit where the max score strictly exceeds the threshold and the
    argmax equals the true label wins. Samples qualifying nowhere get the
    final exit index, or n_exits + 1 when ``penalize_no_exit`` is set.
    """
    n_exits = len(probs)
    n = probs[0].shape[0]
    default = n_exits + 1 if penalize_no_exit else n_exits
    out = np.full(n, default, dtype=int)
    undecided = np.ones(n, dtype=bool)
    for k in range(n_exits):
        q = probs[k]
        qualifies = (q.max(axis=1) > thresholds.values[k]) & (q.argmax(axis=1) == y_true)
        newly = undecided & qualifies
        out[newly] = k + 1
        undecided &= ~qualifies
    return out


def training_exit_of(
    net: MultiExitNetwork,
    x: np.ndarray,
    y_true: int,
    thresholds: ThresholdSet,
    penalize_no_exit: bool = False,
) -> int:
    if thresholds.kind != KIND_TRAINING:
        raise ValueError("training_exit_of requires training thresholds")
    probs, _ = net.forward_batch(np.asarray(x, dtype=float)[None, :])
    return int(
        training_exits(probs, np.array([y_true]), thresholds, penalize_no_exit)[0]
    )


def thresholds_to_json(ts: ThresholdSet) -> str:
    return json.dumps(
        {"kind": ts.kind, "epoch": ts.epoch_computed, "values": list(ts.values)}
    )


def thresholds_from_json(text: str) -> ThresholdSet:
    obj = json.loads(text)
    return ThresholdSet(tuple(obj["values"]), obj["kind"], int(obj["epoch"]))
