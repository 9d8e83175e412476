"""Persisted pipeline artifact: network + patch configs + normalization + shallow model.

File layout (all little-endian):

    bytes 0-4   magic b"PCHX1"
    bytes 5-6   uint16 format version (currently 1)
    bytes 7-14  uint64 JSON header length
    ...         UTF-8 JSON header (specs, shallow metadata, array manifest)
    ...         raw array payload, float64/int64 buffers in manifest order

Round-trips are bitwise faithful: every numeric parameter travels through the
binary payload, never through JSON.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, NormStats, TimeSeriesSample, znormalize
from .metadata import ClassPresenceVector, extract, extract_all
from .neuralnet import EVAL_BATCH, NetworkSpec, PatchNet, build_network
from .patching import PatchConfig, build_patch_arrays, enumerate_patches, transform
from .shallow import ForestModel, SvmModel, TreeArrays, TrivialModel, predict_all

MAGIC = b"PCHX1"
FORMAT_VERSION = 1


class BundleError(ValueError):
    pass


@dataclass
class PatchXBundle:
    network: PatchNet
    patch_configs: list[PatchConfig]
    norm_stats: NormStats | None
    shallow_model: object
    collapse: bool = False
    normalize_features: bool = False

    @property
    def class_count(self) -> int:
        return self.network.spec.class_count

    # -- inference ---------------------------------------------------------

    def normalize_dataset(self, dataset: Dataset) -> Dataset:
        if self.norm_stats is None:
            return dataset
        return znormalize(dataset, self.norm_stats)

    def normalize_values(self, values: np.ndarray) -> np.ndarray:
        if self.norm_stats is None:
            return values
        return (values - self.norm_stats.mean[:, None]) / self.norm_stats.std[:, None]

    def patch_predictions(
        self, dataset: Dataset
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Softmax for every patch of every sample.

        Returns (softmaxes, sample_ids, config_indices, labels) in the
        canonical samples -> configs -> patch order.
        """
        normalized = self.normalize_dataset(dataset)
        x, labels, sample_ids, config_indices = build_patch_arrays(normalized, self.patch_configs)
        probs = np.empty((len(x), self.class_count))
        for lo in range(0, len(x), EVAL_BATCH):
            probs[lo : lo + EVAL_BATCH] = self.network.forward_batch(x[lo : lo + EVAL_BATCH])
        return probs, sample_ids, config_indices, labels

    def vectors(self, dataset: Dataset) -> list[ClassPresenceVector]:
        probs, sample_ids, config_indices, labels = self.patch_predictions(dataset)
        vectors = extract_all(
            probs, sample_ids, config_indices, labels,
            class_count=self.class_count, n_configs=len(self.patch_configs),
        )
        if len(vectors) != len(dataset.samples):
            raise ValueError(
                f"got {len(vectors)} vectors for {len(dataset.samples)} samples; "
                "a sample produced no patches"
            )
        return vectors

    def predict_dataset(self, dataset: Dataset) -> tuple[np.ndarray, list[ClassPresenceVector]]:
        vectors = self.vectors(dataset)
        return predict_all(self.shallow_model, vectors), vectors

    def sample_patch_predictions(
        self, sample: TimeSeriesSample
    ) -> list[tuple[int, int, int, int, np.ndarray]]:
        """Per-patch (config_index, patch_index, start, end, softmax) for one sample.

        start/end are the source-coordinate span from patch enumeration, which
        is what overlays need even for notemp-shifted instances.
        """
        values = self.normalize_values(sample.values)
        normalized = TimeSeriesSample(id=sample.id, values=values, label=sample.label)
        instances = []
        spans = []
        for ci, config in enumerate(self.patch_configs):
            for p, start, end in enumerate_patches(sample.length, config):
                instances.append(transform(normalized, p, config, config_index=ci).values)
                spans.append((ci, p, start, end))
        probs = self.network.forward_batch(np.stack(instances))
        return [(ci, p, s, e, probs[i]) for i, (ci, p, s, e) in enumerate(spans)]

    def predict_sample(self, sample: TimeSeriesSample) -> tuple[int, ClassPresenceVector]:
        preds = self.sample_patch_predictions(sample)
        vector = extract(
            sample_id=sample.id,
            predictions=[(ci, probs) for ci, _, _, _, probs in preds],
            class_count=self.class_count,
            n_configs=len(self.patch_configs),
            label=sample.label,
        )
        return self.shallow_model.predict(vector), vector


# -- serialization -----------------------------------------------------------


_DTYPES = {"<f8": np.dtype("<f8"), "<i8": np.dtype("<i8")}


def _shallow_state(model) -> tuple[dict, dict[str, np.ndarray]]:
    if isinstance(model, SvmModel):
        meta = {
            "kind": "svm",
            "class_count": model.class_count,
            "standardized": model.feature_mean is not None,
            "collapse": model.collapse,
            "normalize": model.normalize,
        }
        arrays = {"svm_weights": model.weights, "svm_biases": model.biases}
        if model.feature_mean is not None:
            arrays["svm_feature_mean"] = model.feature_mean
            arrays["svm_feature_std"] = model.feature_std
        return meta, arrays
    if isinstance(model, ForestModel):
        offsets = np.cumsum([0] + [len(t.feature) for t in model.trees]).astype(np.int64)
        arrays = {
            "forest_offsets": offsets,
            "forest_feature": np.concatenate([t.feature for t in model.trees]),
            "forest_threshold": np.concatenate([t.threshold for t in model.trees]),
            "forest_left": np.concatenate([t.left for t in model.trees]),
            "forest_right": np.concatenate([t.right for t in model.trees]),
            "forest_leaf": np.concatenate([t.leaf_class for t in model.trees]),
        }
        meta = {
            "kind": "forest",
            "class_count": model.class_count,
            "feature_dim": model.feature_dim,
            "collapse": model.collapse,
            "normalize": model.normalize,
        }
        return meta, arrays
    if isinstance(model, TrivialModel):
        meta = {
            "kind": "trivial",
            "mode": model.mode,
            "class_count": model.class_count,
            "n_configs": model.n_configs,
        }
        return meta, {}
    raise BundleError(f"cannot serialize shallow model of type {type(model).__name__}")


def _shallow_from_state(meta: dict, arrays: dict[str, np.ndarray]):
    kind = meta["kind"]
    if kind == "svm":
        return SvmModel(
            weights=arrays["svm_weights"],
            biases=arrays["svm_biases"],
            class_count=meta["class_count"],
            feature_mean=arrays.get("svm_feature_mean"),
            feature_std=arrays.get("svm_feature_std"),
            collapse=meta["collapse"],
            normalize=meta["normalize"],
        )
    if kind == "forest":
        offsets = arrays["forest_offsets"]
        trees = []
        for i in range(len(offsets) - 1):
            lo, hi = offsets[i], offsets[i + 1]
            trees.append(
                TreeArrays(
                    feature=arrays["forest_feature"][lo:hi],
                    threshold=arrays["forest_threshold"][lo:hi],
                    left=arrays["forest_left"][lo:hi],
                    right=arrays["forest_right"][lo:hi],
                    leaf_class=arrays["forest_leaf"][lo:hi],
                )
            )
        return ForestModel(
            trees=trees,
            class_count=meta["class_count"],
            feature_dim=meta["feature_dim"],
            collapse=meta["collapse"],
            normalize=meta["normalize"],
        )
    if kind == "trivial":
        return TrivialModel(
            mode=meta["mode"], class_count=meta["class_count"], n_configs=meta["n_configs"]
        )
    raise BundleError(f"unknown shallow kind {kind!r} in bundle")


def save_bundle(bundle: PatchXBundle, path: str | Path) -> None:
    arrays: dict[str, np.ndarray] = {}
    for name, p in bundle.network.parameters():
        arrays[f"net/{name}"] = p
    if bundle.norm_stats is not None:
        arrays["norm_mean"] = bundle.norm_stats.mean
        arrays["norm_std"] = bundle.norm_stats.std
    shallow_meta, shallow_arrays = _shallow_state(bundle.shallow_model)
    arrays.update(shallow_arrays)

    manifest = []
    payload = bytearray()
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        if arr.dtype == np.float64:
            dtype = "<f8"
        elif arr.dtype == np.int64:
            dtype = "<i8"
        else:
            raise BundleError(f"array {name} has unsupported dtype {arr.dtype}")
        manifest.append({"name": name, "dtype": dtype, "shape": list(arr.shape)})
        payload.extend(arr.astype(_DTYPES[dtype], copy=False).tobytes())

    spec = bundle.network.spec
    header = {
        "network": {
            "input_channels": spec.input_channels,
            "input_length": spec.input_length,
            "class_count": spec.class_count,
            "conv_blocks": [list(b) for b in spec.conv_blocks],
            "seed": spec.seed,
        },
        "patch_configs": [
            {"stride": c.stride, "length": c.length, "zero": c.zero,
             "attach": c.attach, "notemp": c.notemp}
            for c in bundle.patch_configs
        ],
        "normalized": bundle.norm_stats is not None,
        "metadata_options": {"collapse": bundle.collapse, "normalize": bundle.normalize_features},
        "shallow": shallow_meta,
        "arrays": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with Path(path).open("wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<H", FORMAT_VERSION))
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        f.write(bytes(payload))


def load_bundle(path: str | Path) -> PatchXBundle:
    raw = Path(path).read_bytes()
    if raw[:5] != MAGIC:
        raise BundleError(f"{path}: not a PatchX bundle (bad magic {raw[:5]!r})")
    (version,) = struct.unpack("<H", raw[5:7])
    if version != FORMAT_VERSION:
        raise BundleError(f"{path}: unsupported bundle format version {version}")
    (header_len,) = struct.unpack("<Q", raw[7:15])
    header = json.loads(raw[15 : 15 + header_len].decode("utf-8"))
    offset = 15 + header_len
    arrays: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        dtype = _DTYPES[entry["dtype"]]
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        nbytes = count * dtype.itemsize
        arr = np.frombuffer(raw[offset : offset + nbytes], dtype=dtype).reshape(entry["shape"])
        arrays[entry["name"]] = arr.copy()
        offset += nbytes
    if offset != len(raw):
        raise BundleError(f"{path}: {len(raw) - offset} trailing bytes after array payload")

    net_meta = header["network"]
    spec = NetworkSpec(
        input_channels=net_meta["input_channels"],
        input_length=net_meta["input_length"],
        class_count=net_meta["class_count"],
        conv_blocks=tuple(tuple(b) for b in net_meta["conv_blocks"]),
        seed=net_meta["seed"],
    )
    network = build_network(spec)
    network.set_state({name: arrays[f"net/{name}"] for name, _ in network.parameters()})
    configs = [PatchConfig(**c) for c in header["patch_configs"]]
    stats = None
    if header["normalized"]:
        stats = NormStats(mean=arrays["norm_mean"], std=arrays["norm_std"])
    shallow = _shallow_from_state(header["shallow"], arrays)
    options = header["metadata_options"]
    return PatchXBundle(
        network=network,
        patch_configs=configs,
        norm_stats=stats,
        shallow_model=shallow,
        collapse=options["collapse"],
        normalize_features=options["normalize"],
    )
