"""Dataset manifests: sample features, labels, split assignments, optional RTs.

A manifest row is one sample. Splits are ``pool`` (known-class samples not
yet divided), ``train``, ``valid``, ``test_known``, and ``test_unknown``.
Unknown-class labels must never appear outside ``test_unknown``, and RT
annotations are only allowed on non-test samples; both are enforced on every
load.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass, replace
from typing import Iterable, TextIO

import numpy as np

from .errors import ManifestError

SPLITS = ("pool", "train", "valid", "test_known", "test_unknown")
KNOWN_SPLITS = ("pool", "train", "valid", "test_known")


@dataclass(frozen=True)
class ManifestEntry:
    sample_id: str
    label: str
    split: str
    features: tuple[float, ...]
    mean_rt_seconds: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", tuple(float(v) for v in self.features))
        if self.split not in SPLITS:
            raise ManifestError(f"unknown split {self.split!r}")
        if self.mean_rt_seconds is not None and self.mean_rt_seconds <= 0:
            raise ManifestError("mean_rt_seconds must be positive when present")


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        ids = [e.sample_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ManifestError("duplicate sample_id")
        dims = {len(e.features) for e in self.entries}
        if len(dims) > 1:
            raise ManifestError(f"inconsistent feature dimensions: {sorted(dims)}")
        known = {e.label for e in self.entries if e.split in KNOWN_SPLITS}
        unknown = {e.label for e in self.entries if e.split == "test_unknown"}
        overlap = known & unknown
        if overlap:
            raise ManifestError(
                f"unknown-class labels also appear in known splits: {sorted(overlap)}"
            )
        for e in self.entries:
            if e.split in ("test_known", "test_unknown") and e.mean_rt_seconds is not None:
                raise ManifestError(
                    f"test sample {e.sample_id!r} carries an RT annotation"
                )

    @property
    def feature_dim(self) -> int:
        if not self.entries:
            raise ManifestError("empty manifest")
        return len(self.entries[0].features)

    def subset(self, split: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]

    def known_labels(self) -> list[str]:
        return sorted({e.label for e in self.entries if e.split in KNOWN_SPLITS})

    def features_of(self, entries: Iterable[ManifestEntry]) -> np.ndarray:
        rows = [e.features for e in entries]
        return np.asarray(rows, dtype=float).reshape(len(rows), -1)


def split_train_valid(
    manifest: DatasetManifest, ratio: float = 0.7, seed: int = 0
) -> DatasetManifest:
    """Reassign pool/train/valid entries to a per-class train/valid split.

    Within each class, RT-annotated and unannotated samples are split at the
    same ratio and merged, so RT coverage is proportional across train and
    valid. Test entries pass through untouched. Deterministic in the seed.
    """
    if not 0.0 < ratio < 1.0:
        raise ManifestError("ratio must be in (0, 1)")
    rng = random.Random(seed)
    splittable = [e for e in manifest.entries if e.split in ("pool", "train", "valid")]
    by_class: dict[str, list[ManifestEntry]] = {}
    for e in splittable:
        by_class.setdefault(e.label, []).append(e)

    assignment: dict[str, str] = {}
    for label in sorted(by_class):
        members = by_class[label]
        if len(members) < 2:
            raise ManifestError(
                f"class {label!r} has {len(members)} splittable samples; need >= 2"
            )
        train_ids: list[str] = []
        valid_ids: list[str] = []
        for annotated in (True, False):
            stratum = [m for m in members if (m.mean_rt_seconds is not None) == annotated]
            rng.shuffle(stratum)
            n_train = int(ratio * len(stratum))
            train_ids += [m.sample_id for m in stratum[:n_train]]
            valid_ids += [m.sample_id for m in stratum[n_train:]]
        # Every class must land on both sides of the split.
        if not train_ids:
            train_ids.append(valid_ids.pop(0))
        if not valid_ids:
            valid_ids.append(train_ids.pop())
        for sid in train_ids:
            assignment[sid] = "train"
        for sid in valid_ids:
            assignment[sid] = "valid"

    entries = [
        replace(e, split=assignment[e.sample_id]) if e.sample_id in assignment else e
        for e in manifest.entries
    ]
    return DatasetManifest(entries)


# ---------------------------------------------------------------------------
# CSV serialization: sample_id, split, label, mean_rt_seconds, f0..f{d-1}
# ---------------------------------------------------------------------------

def write_manifest_csv(manifest: DatasetManifest, f: TextIO) -> None:
    dim = manifest.feature_dim
    w = csv.writer(f)
    w.writerow(["sample_id", "split", "label", "mean_rt_seconds"] + [f"f{i}" for i in range(dim)])
    for e in manifest.entries:
        rt = "" if e.mean_rt_seconds is None else repr(e.mean_rt_seconds)
        w.writerow([e.sample_id, e.split, e.label, rt] + [repr(v) for v in e.features])


def read_manifest_csv(f: TextIO) -> DatasetManifest:
    reader = csv.reader(f)
    try:
        header = next(reader)
    except StopIteration:
        raise ManifestError("empty manifest file") from None
    fixed = ["sample_id", "split", "label", "mean_rt_seconds"]
    if header[: len(fixed)] != fixed:
        raise ManifestError(f"manifest header must start with {fixed}, got {header[:4]}")
    feature_cols = header[len(fixed):]
    if not feature_cols:
        raise ManifestError("manifest has no feature columns")
    entries = []
    for row in reader:
        if not row:
            continue
        sid, split, label, rt_text = row[: len(fixed)]
        features = tuple(float(v) for v in row[len(fixed):])
        if len(features) != len(feature_cols):
            raise ManifestError(f"row {sid!r} has {len(features)} feature values")
        entries.append(
            ManifestEntry(
                sample_id=sid,
                label=label,
                split=split,
                features=features,
                mean_rt_seconds=float(rt_text) if rt_text else None,
            )
        )
    return DatasetManifest(entries)
