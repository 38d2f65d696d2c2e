"""Multi-seed comparison of loss configurations on the synthetic dataset.

Trains one model per (loss configuration, seed), calibrates inference
thresholds from each run's best checkpoint, evaluates both test partitions,
and aggregates per-configuration means with standard errors. Data generation
and the train/valid split are fixed across configurations so runs differ only
in the loss.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

from .config import DEFAULT_SEEDS, ExperimentConfig
from .manifest import DatasetManifest, split_train_valid
from .synth import SyntheticConfig, generate_synthetic
from .training import (
    aggregate_reports,
    calibrate_on_manifest,
    evaluate_manifest,
    select_best_model,
    train,
)

# Desk-scale training setup used by the comparison experiment.
TOY_TRAIN_CONFIG = ExperimentConfig(
    block_widths=(32, 32, 32, 32, 32),
    epochs=40,
    batch_size=16,
    learning_rate=0.05,
    momentum=0.9,
    weight_decay=1e-4,
)

LOSS_VARIANTS = {
    "ce_only": {"w_performance": 0.0, "w_exit": 0.0},
    "ce_performance": {"w_exit": 0.0},
    "combined": {},
}


@dataclass
class VariantResult:
    per_seed: list[dict]
    aggregate: dict
    mean_performance_term: float
    mean_exit_term: float


def run_seeded_variant(
    manifest: DatasetManifest,
    base: ExperimentConfig,
    overrides: dict,
    seeds: Sequence[int],
) -> VariantResult:
    reports = []
    perf_terms = []
    exit_terms = []
    for seed in seeds:
        cfg = replace(base, seed=seed, **overrides)
        result = train(cfg, manifest)
        best = select_best_model(result.checkpoints)
        thresholds = calibrate_on_manifest(best.net, manifest, best.epoch)
        report, _ = evaluate_manifest(best.net, thresholds, manifest)
        reports.append(report)
        perf_terms.append(result.records[-1].mean_performance)
        exit_terms.append(result.records[-1].mean_exit)
    return VariantResult(
        per_seed=reports,
        aggregate=aggregate_reports(reports),
        mean_performance_term=sum(perf_terms) / len(perf_terms),
        mean_exit_term=sum(exit_terms) / len(exit_terms),
    )


def run_toy_comparison(
    variants: dict[str, dict] | None = None,
    seeds: Sequence[int] = DEFAULT_SEEDS,
    synth_config: SyntheticConfig | None = None,
    train_config: ExperimentConfig | None = None,
    split_seed: int = 0,
) -> dict[str, VariantResult]:
    """Compare loss variants over fixed seeds on one synthetic dataset."""
    synth_config = synth_config or SyntheticConfig()
    train_config = train_config or TOY_TRAIN_CONFIG
    variants = variants if variants is not None else LOSS_VARIANTS

    data = generate_synthetic(synth_config)
    manifest = split_train_valid(data.manifest, ratio=0.7, seed=split_seed)
    return {
        name: run_seeded_variant(manifest, train_config, overrides, seeds)
        for name, overrides in variants.items()
    }
