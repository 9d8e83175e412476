"""Distilling per-patch predictions into per-sample class-presence vectors.

For every sample and every patch config, the winning (maximum) softmax value
of each patch is added to the entry of the winning class. The result is a
time-independent feature vector with one block of class_count entries per
config; argmax ties go to the lowest class index. Alongside the confidence
sums the per-class win counts are kept, which is what occurrence voting needs.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class ClassPresenceVector:
    sample_id: int
    blocks: np.ndarray  # (n_configs, class_count) summed winning confidences
    counts: np.ndarray  # (n_configs, class_count) number of argmax wins
    patch_counts: np.ndarray  # (n_configs,) patches per config for this sample
    label: int

    @property
    def n_configs(self) -> int:
        return self.blocks.shape[0]

    @property
    def class_count(self) -> int:
        return self.blocks.shape[1]

    def features(self, collapse: bool = False, normalize: bool = False) -> np.ndarray:
        blocks = self.blocks
        if normalize:
            blocks = blocks / np.maximum(self.patch_counts[:, None], 1)
        if collapse:
            blocks = blocks.sum(axis=0, keepdims=True)
        return blocks.reshape(-1)


def extract(
    sample_id: int,
    predictions: list[tuple[int, np.ndarray]],
    class_count: int,
    n_configs: int,
    label: int = -1,
) -> ClassPresenceVector:
    """Build the class-presence vector from (config_index, softmax) pairs.

    Every softmax vector contributes its maximum value to exactly one entry:
    the (config, argmax class) one.
    """
    if not predictions:
        raise ValueError(f"sample {sample_id}: empty prediction list")
    blocks = np.zeros((n_configs, class_count))
    counts = np.zeros((n_configs, class_count), dtype=np.int64)
    patch_counts = np.zeros(n_configs, dtype=np.int64)
    for config_index, probs in predictions:
        probs = np.asarray(probs)
        if probs.shape != (class_count,):
            raise ValueError(
                f"sample {sample_id}: softmax length {probs.shape} != ({class_count},)"
            )
        if not (0 <= config_index < n_configs):
            raise ValueError(f"sample {sample_id}: config index {config_index} out of range")
        winner = int(np.argmax(probs))  # ties go to the lowest class index
        blocks[config_index, winner] += float(probs[winner])
        counts[config_index, winner] += 1
        patch_counts[config_index] += 1
    return ClassPresenceVector(
        sample_id=sample_id, blocks=blocks, counts=counts, patch_counts=patch_counts, label=label
    )


def extract_all(
    softmaxes: np.ndarray,
    sample_ids: np.ndarray,
    config_indices: np.ndarray,
    labels: np.ndarray,
    class_count: int,
    n_configs: int,
) -> list[ClassPresenceVector]:
    """Group batched patch predictions by sample id and extract one vector each.

    Rows must be ordered so that all patches of one sample are contiguous (the
    order build_patch_dataset produces). Patch order within a sample does not
    affect the result beyond float accumulation order.
    """
    if len(softmaxes) == 0:
        raise ValueError("no patch predictions to extract from")
    vectors: list[ClassPresenceVector] = []
    boundaries = np.flatnonzero(np.diff(sample_ids)) + 1
    start = 0
    for stop in list(boundaries) + [len(sample_ids)]:
        preds = [
            (int(config_indices[i]), softmaxes[i]) for i in range(start, stop)
        ]
        vectors.append(
            extract(
                sample_id=int(sample_ids[start]),
                predictions=preds,
                class_count=class_count,
                n_configs=n_configs,
                label=int(labels[start]),
            )
        )
        start = stop
    return vectors


def feature_matrix(
    vectors: list[ClassPresenceVector], collapse: bool = False, normalize: bool = False
) -> np.ndarray:
    return np.stack([v.features(collapse=collapse, normalize=normalize) for v in vectors])


def labels_array(vectors: list[ClassPresenceVector]) -> np.ndarray:
    return np.array([v.label for v in vectors], dtype=np.int64)


def save_vectors(vectors: list[ClassPresenceVector], path: str | Path,
                 collapse: bool = False, normalize: bool = False) -> None:
    """Delimited-text export: sample_id, label, then the feature values."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        for v in vectors:
            fields = [str(v.sample_id), str(v.label)]
            fields.extend(repr(float(x)) for x in v.features(collapse=collapse, normalize=normalize))
            f.write(",".join(fields))
            f.write("\n")
