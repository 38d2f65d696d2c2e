"""Training, model selection, calibration, and test-set evaluation.

The loop trains the multi-exit network with the combined loss, refreshing
training thresholds on a fixed epoch period, checkpointing every epoch with
its train/validation accuracy, and logging the per-epoch loss breakdown. The
checkpoint with the highest top-1 validation accuracy (earliest epoch on
ties) becomes the best model; inference thresholds are calibrated from it and
applied to both test partitions.

Only the cross-entropy term (and, in soft mode, the differentiable exit
surrogate) carries gradient; the performance and hard exit terms contribute
to reported loss values but not to parameter updates.
"""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np

from .config import ExperimentConfig
from .errors import ManifestError, TrainingDivergenceError
from .evaluation import (
    UNKNOWN,
    EvaluatedSample,
    infer_batch,
    metrics_report,
    score_all,
)
from .losses import (
    SampleAnnotation,
    ce_batch_dlogits,
    ce_batch_value,
    performance_loss,
    soft_exit_value_and_dlogits,
)
from .manifest import DatasetManifest
from .model import (
    Checkpoint,
    ModelConfig,
    MultiExitNetwork,
    SgdState,
    save_checkpoint,
    sgd_step,
)
from .rt_data import ExitBinning, ImageRT, compute_quintile_binning, target_exit
from .thresholds import (
    ThresholdSet,
    compute_inference_thresholds,
    init_training_thresholds,
    training_exits,
    update_training_thresholds,
)

LOSS_LOG_COLUMNS = ("epoch", "mean_ce", "mean_performance", "mean_exit", "mean_total")


@dataclass
class EpochRecord:
    epoch: int
    train_accuracy: float
    val_accuracy: float
    mean_ce: float
    mean_performance: float
    mean_exit: float
    mean_total: float


@dataclass
class TrainResult:
    checkpoints: list[Checkpoint]
    records: list[EpochRecord]
    threshold_update_epochs: list[int]
    binning: ExitBinning | None
    class_to_index: dict[str, int]


@dataclass
class _Prepared:
    class_to_index: dict[str, int]
    x_train: np.ndarray
    y_train: np.ndarray
    x_valid: np.ndarray
    y_valid: np.ndarray
    annotations: list[SampleAnnotation]
    binning: ExitBinning | None


def _prepare(manifest: DatasetManifest, config: ExperimentConfig) -> _Prepared:
    train_entries = manifest.subset("train")
    valid_entries = manifest.subset("valid")
    if not train_entries or not valid_entries:
        raise ManifestError("manifest needs nonempty train and valid splits")
    labels = manifest.known_labels()
    class_to_index = {label: i for i, label in enumerate(labels)}

    rts = [
        e.mean_rt_seconds
        for e in train_entries + valid_entries
        if e.mean_rt_seconds is not None
    ]
    binning = None
    if rts:
        binning = compute_quintile_binning(
            [ImageRT(f"rt{i}", v, 1) for i, v in enumerate(rts)], config.n_exits
        )

    annotations = []
    for e in train_entries:
        if e.mean_rt_seconds is not None and binning is not None:
            annotations.append(
                SampleAnnotation(
                    label=class_to_index[e.label],
                    mean_rt_seconds=e.mean_rt_seconds,
                    target_exit=target_exit(binning, e.mean_rt_seconds, config.max_rt_seconds),
                )
            )
        else:
            annotations.append(SampleAnnotation(label=class_to_index[e.label]))

    return _Prepared(
        class_to_index=class_to_index,
        x_train=manifest.features_of(train_entries),
        y_train=np.array([class_to_index[e.label] for e in train_entries]),
        x_valid=manifest.features_of(valid_entries),
        y_valid=np.array([class_to_index[e.label] for e in valid_entries]),
        annotations=annotations,
        binning=binning,
    )


def final_exit_accuracy(net: MultiExitNetwork, x: np.ndarray, y: np.ndarray) -> float:
    """Top-1 accuracy of the deepest exit, as a fraction."""
    probs, _ = net.forward_batch(x)
    return float((probs[-1].argmax(axis=1) == y).mean())


def write_loss_log(records: Sequence[EpochRecord], f: TextIO) -> None:
    w = csv.writer(f)
    w.writerow(LOSS_LOG_COLUMNS)
    for r in records:
        w.writerow(
            [r.epoch, repr(r.mean_ce), repr(r.mean_performance), repr(r.mean_exit), repr(r.mean_total)]
        )


def train(
    config: ExperimentConfig,
    manifest: DatasetManifest,
    out_dir: str | Path | None = None,
) -> TrainResult:
    prepared = _prepare(manifest, config)
    n_classes = len(prepared.class_to_index)
    model_config = ModelConfig(
        input_dim=manifest.feature_dim,
        n_classes=n_classes,
        block_widths=config.block_widths,
        n_exits=config.n_exits,
        activation=config.activation,
        rng_seed=config.seed,
    )
    net = MultiExitNetwork.initialize(model_config)
    state = SgdState.for_network(net)
    thresholds = init_training_thresholds(config.n_exits)
    rng = np.random.default_rng(config.seed + 1)

    n = prepared.x_train.shape[0]
    # performance term is constant per sample; compute it once
    perf_all = np.array(
        [performance_loss(a, config.max_rt_seconds) for a in prepared.annotations]
    )
    targets_all = np.array(
        [a.target_exit if a.target_exit is not None else -1 for a in prepared.annotations]
    )

    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        (out_path / "checkpoints").mkdir(parents=True, exist_ok=True)

    checkpoints: list[Checkpoint] = []
    records: list[EpochRecord] = []
    update_epochs: list[int] = []

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        lr = config.learning_rate_at(epoch)
        sum_ce = sum_perf = sum_exit = sum_total = 0.0

        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            xb = prepared.x_train[idx]
            yb = prepared.y_train[idx]
            probs, cache = net.forward_batch(xb)

            ce_vals = ce_batch_value(probs, yb, config.ce_mode)
            perf_vals = perf_all[idx]
            batch_targets = targets_all[idx]

            sample_scale = None
            if config.coupling == "multiplicative":
                sample_scale = 1.0 + config.w_performance * perf_vals
            dlogits = ce_batch_dlogits(probs, yb, config.ce_mode, sample_scale)
            for d in dlogits:
                d *= config.w_ce

            if config.exit_loss_mode == "hard":
                exits = training_exits(probs, yb, thresholds)
                exit_vals = np.where(
                    batch_targets > 0, np.abs(batch_targets - exits), 0.0
                )
            else:
                exit_vals = np.zeros(len(idx))
                batch_size = len(idx)
                for i in np.nonzero(batch_targets > 0)[0]:
                    value, soft_dl = soft_exit_value_and_dlogits(
                        [q[i] for q in probs],
                        int(batch_targets[i]),
                        config.soft_temperature,
                    )
                    exit_vals[i] = value
                    for k, dz in enumerate(soft_dl):
                        dlogits[k][i] += (config.w_exit / batch_size) * dz

            if config.coupling == "multiplicative":
                totals = (
                    config.w_ce * ce_vals * (1.0 + config.w_performance * perf_vals)
                    + config.w_exit * exit_vals
                )
            else:
                totals = (
                    config.w_ce * ce_vals
                    + config.w_performance * perf_vals
                    + config.w_exit * exit_vals
                )
            batch_total = float(totals.sum())
            if not math.isfinite(batch_total):
                raise TrainingDivergenceError(
                    f"non-finite loss at epoch {epoch}: {batch_total}"
                )
            sum_ce += float(ce_vals.sum())
            sum_perf += float(perf_vals.sum())
            sum_exit += float(exit_vals.sum())
            sum_total += batch_total

            grads = net.backward(cache, dlogits)
            sgd_step(net, grads, state, lr, config.momentum, config.weight_decay)

        train_acc = final_exit_accuracy(net, prepared.x_train, prepared.y_train)
        val_acc = final_exit_accuracy(net, prepared.x_valid, prepared.y_valid)

        if epoch % config.threshold_period == 0:
            thresholds = update_training_thresholds(net, prepared.x_valid, epoch)
            update_epochs.append(epoch)

        checkpoint = Checkpoint(net.copy(), epoch, train_acc, val_acc)
        checkpoints.append(checkpoint)
        if out_path is not None:
            save_checkpoint(
                out_path / "checkpoints" / f"epoch_{epoch:04d}.npz",
                net,
                epoch,
                train_acc,
                val_acc,
            )

        records.append(
            EpochRecord(
                epoch=epoch,
                train_accuracy=train_acc,
                val_accuracy=val_acc,
                mean_ce=sum_ce / n,
                mean_performance=sum_perf / n,
                mean_exit=sum_exit / n,
                mean_total=sum_total / n,
            )
        )

    if out_path is not None:
        with open(out_path / "losses.csv", "w", encoding="utf-8", newline="") as f:
            write_loss_log(records, f)

    return TrainResult(
        checkpoints=checkpoints,
        records=records,
        threshold_update_epochs=update_epochs,
        binning=prepared.binning,
        class_to_index=prepared.class_to_index,
    )


def select_best_model(checkpoints: Sequence[Checkpoint]) -> Checkpoint:
    """Checkpoint with the highest top-1 validation accuracy; ties go to the
    earliest epoch."""
    if not checkpoints:
        raise ValueError("no checkpoints to select from")
    best = checkpoints[0]
    for c in checkpoints[1:]:
        if c.val_accuracy > best.val_accuracy:
            best = c
    return best


def calibrate_on_manifest(
    net: MultiExitNetwork, manifest: DatasetManifest, epoch: int = 0
) -> ThresholdSet:
    valid_entries = manifest.subset("valid")
    if not valid_entries:
        raise ManifestError("manifest has no valid split to calibrate on")
    return compute_inference_thresholds(net, manifest.features_of(valid_entries), epoch)


def evaluate_manifest(
    net: MultiExitNetwork,
    inference_thresholds: ThresholdSet,
    manifest: DatasetManifest,
) -> tuple[dict, list[EvaluatedSample]]:
    """Run the open-set walk over both test partitions and score everything."""
    known_entries = manifest.subset("test_known")
    unknown_entries = manifest.subset("test_unknown")
    if not known_entries or not unknown_entries:
        raise ManifestError("manifest needs test_known and test_unknown splits")
    class_to_index = {label: i for i, label in enumerate(manifest.known_labels())}

    samples: list[EvaluatedSample] = []
    known_verdicts = infer_batch(
        net, manifest.features_of(known_entries), inference_thresholds
    )
    for e, v in zip(known_entries, known_verdicts):
        samples.append(EvaluatedSample(e.sample_id, class_to_index[e.label], v))
    unknown_verdicts = infer_batch(
        net, manifest.features_of(unknown_entries), inference_thresholds
    )
    for e, v in zip(unknown_entries, unknown_verdicts):
        samples.append(EvaluatedSample(e.sample_id, UNKNOWN, v))

    confusion = score_all(samples)
    return metrics_report(samples, confusion), samples


def aggregate_reports(reports: Sequence[dict]) -> dict:
    """Mean and standard error (sample stddev / sqrt(n)) per numeric field."""
    if not reports:
        raise ValueError("no reports to aggregate")
    out: dict = {"n_runs": len(reports)}
    for key in reports[0]:
        values = [r[key] for r in reports]
        if any(v is None or isinstance(v, (bool, str)) for v in values):
            continue
        mean = statistics.fmean(values)
        stderr = (
            statistics.stdev(values) / math.sqrt(len(values)) if len(values) > 1 else 0.0
        )
        out[key] = {"mean": mean, "stderr": stderr}
    return out
