"""Synthetic desk-scale dataset: Gaussian class clusters with synthetic RTs.

Known and unknown classes are isotropic Gaussian blobs in feature space.
Annotated training samples get a synthetic reaction time that grows as the
sample's class margin shrinks: hard-to-place samples are "slow", easy ones
"fast", so the RT carries the same difficulty signal the loss functions
expect from human data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .manifest import DatasetManifest, ManifestEntry
from .rt_data import DEFAULT_MAX_RT_SECONDS, ImageRT


@dataclass(frozen=True)
class SyntheticConfig:
    n_known: int = 20
    n_unknown: int = 5
    dim: int = 16
    samples_per_known: int = 50
    test_per_known: int = 25
    samples_per_unknown: int = 50
    center_spread: float = 4.0
    cluster_sigma: float = 1.0
    annotated_class_fraction: float = 0.5
    rt_base: float = 2.0
    rt_slope: float = 20.0
    rt_noise: float = 1.0
    max_rt: float = DEFAULT_MAX_RT_SECONDS
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_known < 2:
            raise ConfigError("n_known must be >= 2")
        if self.n_unknown < 1:
            raise ConfigError("n_unknown must be >= 1")
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if self.samples_per_known < 2:
            raise ConfigError("samples_per_known must be >= 2")
        if not 0.0 <= self.annotated_class_fraction <= 1.0:
            raise ConfigError("annotated_class_fraction must be in [0, 1]")
        if not 0.0 < self.rt_base <= self.max_rt:
            raise ConfigError("rt_base must be in (0, max_rt]")
        if self.rt_slope < 0 or self.rt_noise < 0:
            raise ConfigError("rt_slope and rt_noise must be nonnegative")


@dataclass
class SyntheticData:
    manifest: DatasetManifest
    image_rts: list[ImageRT]
    margins: dict[str, float]  # sample_id -> class margin in [0, 1]


def _margin(x: np.ndarray, own: np.ndarray, others: np.ndarray) -> float:
    """Relative gap between distance-to-own-center and nearest other center,
    clipped to [0, 1]; 1 is maximally easy, 0 is on or past the boundary."""
    d_own = float(np.linalg.norm(x - own))
    d_other = float(np.min(np.linalg.norm(others - x, axis=1)))
    if d_own + d_other == 0.0:
        return 0.0
    return float(np.clip((d_other - d_own) / (d_other + d_own), 0.0, 1.0))


def generate_synthetic(cfg: SyntheticConfig) -> SyntheticData:
    rng = np.random.default_rng(cfg.seed)
    n_total = cfg.n_known + cfg.n_unknown
    centers = rng.normal(0.0, cfg.center_spread, size=(n_total, cfg.dim))
    known_centers = centers[: cfg.n_known]

    n_annotated = round(cfg.annotated_class_fraction * cfg.n_known)
    entries: list[ManifestEntry] = []
    image_rts: list[ImageRT] = []
    margins: dict[str, float] = {}

    for c in range(cfg.n_known):
        label = f"k{c:03d}"
        annotated = c < n_annotated
        others = np.delete(known_centers, c, axis=0)
        pool = centers[c] + rng.normal(0.0, cfg.cluster_sigma, size=(cfg.samples_per_known, cfg.dim))
        for i, x in enumerate(pool):
            sid = f"{label}_p{i:04d}"
            rt = None
            if annotated:
                m = _margin(x, centers[c], others)
                margins[sid] = m
                raw = cfg.rt_base + cfg.rt_slope * (1.0 - m)
                if cfg.rt_noise > 0:
                    raw += float(rng.normal(0.0, cfg.rt_noise))
                rt = float(np.clip(raw, 1e-3, cfg.max_rt))
                image_rts.append(ImageRT(sid, rt, n_measurements=5))
            entries.append(ManifestEntry(sid, label, "pool", tuple(x), rt))
        test = centers[c] + rng.normal(0.0, cfg.cluster_sigma, size=(cfg.test_per_known, cfg.dim))
        entries.extend(
            ManifestEntry(f"{label}_t{i:04d}", label, "test_known", tuple(x))
            for i, x in enumerate(test)
        )

    for u in range(cfg.n_unknown):
        label = f"u{u:03d}"
        samples = centers[cfg.n_known + u] + rng.normal(
            0.0, cfg.cluster_sigma, size=(cfg.samples_per_unknown, cfg.dim)
        )
        entries.extend(
            ManifestEntry(f"{label}_t{i:04d}", label, "test_unknown", tuple(x))
            for i, x in enumerate(samples)
        )

    return SyntheticData(DatasetManifest(entries), image_rts, margins)
