"""Loss functions conditioning a multi-exit classifier on human reaction time.

Four pieces:

* ``cross_entropy``      -- standard multi-class CE, natural log.
* ``performance_loss``   -- (r_max - rt) / r_max, the normalized complement of
                            a sample's mean human RT; 1 for instantly
                            recognized samples, 0 for the slowest.
* ``exit_loss``          -- |target_exit - predicted_exit|, the distance
                            between the RT-derived target exit and the exit
                            the sample actually left from.
* ``combined_loss``      -- weighted sum of the three terms.

``performance_loss`` and the hard ``exit_loss`` are constant in the model
parameters: they shift reported loss values and per-sample totals, not the CE
gradient direction. ``soft_exit_loss`` is an optional differentiable surrogate
for the exit term based on an expected exit index.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import isfinite

import numpy as np

from .rt_data import DEFAULT_MAX_RT_SECONDS

CE_EPSILON = 1e-12


@dataclass(frozen=True)
class LossWeights:
    """Weights for the cross-entropy, performance, and exit terms."""

    cross_entropy: float = 1.0
    performance: float = 1.0
    exit: float = 1.0

    def __post_init__(self) -> None:
        for name in ("cross_entropy", "performance", "exit"):
            if not isfinite(getattr(self, name)):
                raise ValueError(f"weight {name} must be finite")


@dataclass(frozen=True)
class SampleAnnotation:
    """Label plus optional RT annotation for one training sample.

    ``mean_rt_seconds`` and ``target_exit`` are either both present (an
    RT-annotated sample) or both absent.
    """

    label: int
    mean_rt_seconds: float | None = None
    target_exit: int | None = None

    def __post_init__(self) -> None:
        if (self.mean_rt_seconds is None) != (self.target_exit is None):
            raise ValueError("mean_rt_seconds and target_exit must be present together")
        if self.mean_rt_seconds is not None and self.mean_rt_seconds <= 0:
            raise ValueError("mean_rt_seconds must be positive")
        if self.target_exit is not None and self.target_exit < 1:
            raise ValueError("target_exit must be >= 1")

    @property
    def has_rt(self) -> bool:
        return self.mean_rt_seconds is not None


def cross_entropy(p, q, eps: float = CE_EPSILON) -> float:
    """-sum_y p(y) log q(y), with q clamped below at ``eps``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {q.shape}")
    return float(-np.dot(p, np.log(np.maximum(q, eps))))


def performance_loss(
    ann: SampleAnnotation, r_max: float = DEFAULT_MAX_RT_SECONDS
) -> float:
    """Normalized RT complement in [0, 1]; 0 for samples without an RT."""
    if r_max <= 0:
        raise ValueError("r_max must be positive")
    if ann.mean_rt_seconds is None:
        return 0.0
    if ann.mean_rt_seconds > r_max:
        raise ValueError(
            f"mean RT {ann.mean_rt_seconds} exceeds r_max {r_max}; "
            "filtering should have removed it"
        )
    return (r_max - ann.mean_rt_seconds) / r_max


def exit_loss(ann: SampleAnnotation, predicted_exit: int) -> float:
    """|target_exit - predicted_exit|; 0 for samples without an RT."""
    if predicted_exit < 1:
        raise ValueError("predicted_exit must be >= 1")
    if ann.target_exit is None:
        return 0.0
    return float(abs(ann.target_exit - predicted_exit))


def combined_loss(ce: float, perf: float, exit_value: float, w: LossWeights) -> float:
    """Weighted sum of the three loss components."""
    for name, v in (("ce", ce), ("perf", perf), ("exit", exit_value)):
        if not isfinite(v):
            raise ValueError(f"loss component {name} is not finite: {v}")
    return w.cross_entropy * ce + w.performance * perf + w.exit * exit_value


def soft_exit_loss(ann: SampleAnnotation, exit_probs) -> float:
    """|target_exit - E[exit]| under a distribution over exit indices.

    ``exit_probs`` holds the probability that the sample leaves at each exit
    (1-based indices). Agrees with the hard exit loss whenever the
    distribution is one-hot.
    """
    if ann.target_exit is None:
        return 0.0
    probs = np.asarray(exit_probs, dtype=float)
    if abs(float(probs.sum()) - 1.0) > 1e-6:
        raise ValueError("exit_probs must sum to 1")
    expected = float(np.dot(np.arange(1, probs.size + 1), probs))
    return abs(ann.target_exit - expected)


# ---------------------------------------------------------------------------
# Gradient helpers used by the training loop. These operate on the per-exit
# softmax outputs of a batch and produce d(loss)/d(logits) arrays that the
# network's backward pass consumes.
# ---------------------------------------------------------------------------

def ce_exit_weights(n_exits: int, mode: str) -> np.ndarray:
    """Per-exit weighting of the CE term: uniform mean or final exit only."""
    if mode == "mean":
        return np.full(n_exits, 1.0 / n_exits)
    if mode == "final":
        w = np.zeros(n_exits)
        w[-1] = 1.0
        return w
    raise ValueError(f"unknown ce mode {mode!r}")


def ce_batch_value(probs: list[np.ndarray], y: np.ndarray, mode: str = "mean") -> np.ndarray:
    """Per-sample CE aggregated over exits. ``probs[k]`` has shape (n, C)."""
    weights = ce_exit_weights(len(probs), mode)
    n = probs[0].shape[0]
    out = np.zeros(n)
    for k, q in enumerate(probs):
        if weights[k] == 0.0:
            continue
        true_prob = np.maximum(q[np.arange(n), y], CE_EPSILON)
        out += weights[k] * -np.log(true_prob)
    return out


def ce_batch_dlogits(
    probs: list[np.ndarray],
    y: np.ndarray,
    mode: str = "mean",
    sample_scale: np.ndarray | None = None,
) -> list[np.ndarray]:
    """d(mean-over-batch weighted CE)/d(logits) per exit.

    ``sample_scale`` optionally multiplies each sample's contribution (used by
    the multiplicative RT coupling mode).
    """
    weights = ce_exit_weights(len(probs), mode)
    n = probs[0].shape[0]
    scale = np.ones(n) if sample_scale is None else np.asarray(sample_scale, dtype=float)
    dlogits = []
    for k, q in enumerate(probs):
        d = q.copy()
        d[np.arange(n), y] -= 1.0
        d *= (weights[k] / n) * scale[:, None]
        dlogits.append(d)
    return dlogits


def exit_distribution(max_scores: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Softmax over per-exit max scores: the probability of exiting at each head."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    z = max_scores / temperature
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def soft_exit_value_and_dlogits(
    probs_sample: list[np.ndarray],
    target: int,
    temperature: float = 1.0,
) -> tuple[float, list[np.ndarray]]:
    """Soft exit loss for one sample plus its gradient w.r.t. each exit's logits.

    The chain is: logits -> softmax q_k -> m_k = max_c q_k[c] ->
    P = softmax(m / T) -> s = sum_k k P_k -> |target - s|.
    """
    n_exits = len(probs_sample)
    maxima = np.array([float(q.max()) for q in probs_sample])
    argmaxes = [int(q.argmax()) for q in probs_sample]
    P = exit_distribution(maxima, temperature)
    idx = np.arange(1, n_exits + 1, dtype=float)
    s = float(np.dot(idx, P))
    value = abs(target - s)

    ds = float(np.sign(s - target))
    g = ds * idx                                      # dL/dP
    dm = (P * (g - np.dot(g, P))) / temperature       # softmax jacobian
    dlogits = []
    for k, q in enumerate(probs_sample):
        # d m_k / d logits_k through the softmax, nonzero only via the argmax
        # coordinate: dz = dm_k * q * (onehot(argmax) - m_k)
        dz = -dm[k] * maxima[k] * q
        dz[argmaxes[k]] += dm[k] * q[argmaxes[k]]
        dlogits.append(dz)
    return value, dlogits
