"""A feedforward classifier with ordered exit heads.

The network is a stack of affine+nonlinearity blocks; after every block an
affine head maps the running representation to class logits, so exit k sees
strictly more computation than exit k-1. Forward passes return per-exit
softmax probability vectors; the backward pass consumes per-exit gradients
with respect to the logits and produces gradients for every parameter.
Training uses plain SGD with momentum and L2 weight decay added to the
gradient.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import TrainingDivergenceError


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def _relu_deriv(x: np.ndarray) -> np.ndarray:
    return (x > 0).astype(float)


def _tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def _tanh_deriv(x: np.ndarray) -> np.ndarray:
    return 1.0 - np.tanh(x) ** 2


ACTIVATIONS = {"relu": (_relu, _relu_deriv), "tanh": (_tanh, _tanh_deriv)}


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    n_classes: int
    block_widths: tuple[int, ...]
    n_exits: int = 5
    activation: str = "relu"
    rng_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "block_widths", tuple(int(w) for w in self.block_widths))
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        if self.n_exits < 2:
            raise ValueError("n_exits must be >= 2")
        if len(self.block_widths) != self.n_exits:
            raise ValueError(
                f"block_widths has {len(self.block_widths)} entries for {self.n_exits} exits"
            )
        if any(w < 1 for w in self.block_widths):
            raise ValueError("block widths must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "n_classes": self.n_classes,
            "block_widths": list(self.block_widths),
            "n_exits": self.n_exits,
            "activation": self.activation,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            input_dim=int(d["input_dim"]),
            n_classes=int(d["n_classes"]),
            block_widths=tuple(d["block_widths"]),
            n_exits=int(d["n_exits"]),
            activation=str(d["activation"]),
            rng_seed=int(d["rng_seed"]),
        )


@dataclass(frozen=True)
class ExitOutputs:
    """Per-exit class-probability vectors for one sample."""

    probs: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        for k, q in enumerate(self.probs):
            if abs(float(q.sum()) - 1.0) > 1e-6:
                raise ValueError(f"exit {k} probabilities sum to {q.sum()}")
            if (q < 0).any() or (q > 1).any():
                raise ValueError(f"exit {k} probabilities outside [0, 1]")


@dataclass
class ForwardCache:
    """Intermediate activations needed by the backward pass."""

    x: np.ndarray
    pre_activations: list[np.ndarray]
    hidden: list[np.ndarray]
    probs: list[np.ndarray]


@dataclass
class Gradients:
    block_w: list[np.ndarray]
    block_b: list[np.ndarray]
    exit_w: list[np.ndarray]
    exit_b: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        return [*self.block_w, *self.block_b, *self.exit_w, *self.exit_b]


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class MultiExitNetwork:
    """Feedforward stack with one classification head per block."""

    def __init__(
        self,
        config: ModelConfig,
        block_w: list[np.ndarray],
        block_b: list[np.ndarray],
        exit_w: list[np.ndarray],
        exit_b: list[np.ndarray],
    ):
        self.config = config
        self.block_w = block_w
        self.block_b = block_b
        self.exit_w = exit_w
        self.exit_b = exit_b
        self._act, self._act_deriv = ACTIVATIONS[config.activation]

    @classmethod
    def initialize(cls, config: ModelConfig) -> "MultiExitNetwork":
        """Fan-in-scaled uniform weights, zero biases."""
        rng = np.random.default_rng(config.rng_seed)
        block_w, block_b, exit_w, exit_b = [], [], [], []
        fan_in = config.input_dim
        for width in config.block_widths:
            bound = 1.0 / np.sqrt(fan_in)
            block_w.append(rng.uniform(-bound, bound, size=(fan_in, width)))
            block_b.append(np.zeros(width))
            head_bound = 1.0 / np.sqrt(width)
            exit_w.append(rng.uniform(-head_bound, head_bound, size=(width, config.n_classes)))
            exit_b.append(np.zeros(config.n_classes))
            fan_in = width
        return cls(config, block_w, block_b, exit_w, exit_b)

    def copy(self) -> "MultiExitNetwork":
        return MultiExitNetwork(
            self.config,
            [w.copy() for w in self.block_w],
            [b.copy() for b in self.block_b],
            [w.copy() for w in self.exit_w],
            [b.copy() for b in self.exit_b],
        )

    def parameter_arrays(self) -> list[np.ndarray]:
        return [*self.block_w, *self.block_b, *self.exit_w, *self.exit_b]

    def forward_batch(self, x: np.ndarray) -> tuple[list[np.ndarray], ForwardCache]:
        """Per-exit probabilities for a batch, with cached activations."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.config.input_dim:
            raise ValueError(
                f"expected input of shape (n, {self.config.input_dim}), got {x.shape}"
            )
        h = x
        pre, hidden, probs = [], [], []
        for k in range(self.config.n_exits):
            a = h @ self.block_w[k] + self.block_b[k]
            h = self._act(a)
            pre.append(a)
            hidden.append(h)
            logits = h @ self.exit_w[k] + self.exit_b[k]
            probs.append(_softmax(logits))
        return probs, ForwardCache(x=x, pre_activations=pre, hidden=hidden, probs=probs)

    def forward(self, x: np.ndarray) -> ExitOutputs:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise ValueError(f"expected a single feature vector, got shape {x.shape}")
        probs, _ = self.forward_batch(x[None, :])
        return ExitOutputs(tuple(q[0] for q in probs))

    def backward(self, cache: ForwardCache, dlogits: list[np.ndarray]) -> Gradients:
        """Parameter gradients given d(loss)/d(logits) at every exit."""
        E = self.config.n_exits
        if len(dlogits) != E:
            raise ValueError(f"expected {E} dlogits arrays, got {len(dlogits)}")
        g_bw = [np.zeros_like(w) for w in self.block_w]
        g_bb = [np.zeros_like(b) for b in self.block_b]
        g_ew = [np.zeros_like(w) for w in self.exit_w]
        g_eb = [np.zeros_like(b) for b in self.exit_b]

        dh = np.zeros_like(cache.hidden[-1])
        for k in reversed(range(E)):
            dl = dlogits[k]
            g_ew[k] = cache.hidden[k].T @ dl
            g_eb[k] = dl.sum(axis=0)
            dh = dh + dl @ self.exit_w[k].T
            da = dh * self._act_deriv(cache.pre_activations[k])
            inputs = cache.hidden[k - 1] if k > 0 else cache.x
            g_bw[k] = inputs.T @ da
            g_bb[k] = da.sum(axis=0)
            dh = da @ self.block_w[k].T
        return Gradients(g_bw, g_bb, g_ew, g_eb)


@dataclass
class SgdState:
    """Momentum velocities, one array per parameter array."""

    velocities: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_network(cls, net: MultiExitNetwork) -> "SgdState":
        return cls([np.zeros_like(p) for p in net.parameter_arrays()])


def sgd_step(
    net: MultiExitNetwork,
    grads: Gradients,
    state: SgdState,
    lr: float,
    momentum: float = 0.0,
    weight_decay: float = 0.0,
) -> MultiExitNetwork:
    """In-place SGD update: v = mu*v + (g + wd*p); p -= lr*v."""
    params = net.parameter_arrays()
    grad_arrays = grads.arrays()
    for p, g, v in zip(params, grad_arrays, state.velocities):
        if not np.isfinite(g).all():
            raise TrainingDivergenceError("non-finite gradient encountered")
        v *= momentum
        v += g + weight_decay * p
        p -= lr * v
    return net


# ---------------------------------------------------------------------------
# Checkpointing: npz container with config, parameters, and bookkeeping.
# Reload is bit-exact (float64 arrays round-trip unchanged).
# ---------------------------------------------------------------------------

@dataclass
class Checkpoint:
    net: MultiExitNetwork
    epoch: int
    train_accuracy: float
    val_accuracy: float


def save_checkpoint(
    path: str | Path,
    net: MultiExitNetwork,
    epoch: int,
    train_accuracy: float,
    val_accuracy: float,
) -> None:
    meta = {
        "config": net.config.to_dict(),
        "epoch": epoch,
        "train_accuracy": train_accuracy,
        "val_accuracy": val_accuracy,
    }
    arrays = {}
    for k in range(net.config.n_exits):
        arrays[f"block_w_{k}"] = net.block_w[k]
        arrays[f"block_b_{k}"] = net.block_b[k]
        arrays[f"exit_w_{k}"] = net.exit_w[k]
        arrays[f"exit_b_{k}"] = net.exit_b[k]
    np.savez(path, meta=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path: str | Path) -> Checkpoint:
    with np.load(path) as data:
        meta = json.loads(str(data["meta"].item()))
        config = ModelConfig.from_dict(meta["config"])
        block_w = [data[f"block_w_{k}"] for k in range(config.n_exits)]
        block_b = [data[f"block_b_{k}"] for k in range(config.n_exits)]
        exit_w = [data[f"exit_w_{k}"] for k in range(config.n_exits)]
        exit_b = [data[f"exit_b_{k}"] for k in range(config.n_exits)]
    net = MultiExitNetwork(config, block_w, block_b, exit_w, exit_b)
    return Checkpoint(
        net=net,
        epoch=int(meta["epoch"]),
        train_accuracy=float(meta["train_accuracy"]),
        val_accuracy=float(meta["val_accuracy"]),
    )
