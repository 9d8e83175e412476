"""End-to-end workflow: patching, network training, metadata, shallow fitting.

run_pipeline executes the four processing steps on prepared datasets and
returns the trained bundle together with deterministic metrics and wall-clock
timings (kept apart so metrics files stay bit-identical across reruns).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from . import neuralnet
from .bundle import PatchXBundle
from .data import Dataset, normalization_stats, znormalize
from .metadata import ClassPresenceVector
from .neuralnet import NetworkSpec, TrainLog, TrainSpec, build_network
from .patching import PatchConfig, build_patch_arrays
from .shallow import ShallowSpec, evaluate, fit


def default_network_spec(dataset: Dataset, configs: list[PatchConfig], seed: int = 0) -> NetworkSpec:
    channels = dataset.channels + (1 if configs and configs[0].attach else 0)
    return NetworkSpec(
        input_channels=channels,
        input_length=dataset.length,
        class_count=dataset.class_count,
        seed=seed,
    )


@dataclass
class PipelineResult:
    bundle: PatchXBundle
    train_log: TrainLog
    metrics: dict
    timing: dict
    train_vectors: list[ClassPresenceVector]
    test_vectors: list[ClassPresenceVector] | None


def run_pipeline(
    train: Dataset,
    val: Dataset,
    test: Dataset | None,
    configs: list[PatchConfig],
    net_spec: NetworkSpec | None = None,
    train_spec: TrainSpec | None = None,
    shallow_spec: ShallowSpec | None = None,
    normalize: bool = True,
    collapse: bool = False,
    normalize_features: bool = False,
) -> PipelineResult:
    """Train the full hybrid pipeline; deterministic for fixed specs and seeds."""
    train_spec = train_spec or TrainSpec()
    shallow_spec = shallow_spec or ShallowSpec()
    if net_spec is None:
        net_spec = default_network_spec(train, configs, seed=train_spec.seed)

    t0 = time.perf_counter()
    stats = normalization_stats(train) if normalize else None
    norm_train = znormalize(train, stats) if stats else train
    norm_val = znormalize(val, stats) if stats else val

    x_train, y_train, _, _ = build_patch_arrays(norm_train, configs)
    x_val, y_val, _, _ = build_patch_arrays(norm_val, configs)
    t_patching = time.perf_counter() - t0

    network = build_network(net_spec)
    t0 = time.perf_counter()
    log = neuralnet.train(network, (x_train, y_train), (x_val, y_val), train_spec)
    t_network = time.perf_counter() - t0

    bundle = PatchXBundle(
        network=network,
        patch_configs=list(configs),
        norm_stats=stats,
        shallow_model=None,
        collapse=collapse,
        normalize_features=normalize_features,
    )
    t0 = time.perf_counter()
    train_vectors = bundle.vectors(train)
    bundle.shallow_model = fit(
        shallow_spec, train_vectors, collapse=collapse, normalize=normalize_features
    )
    t_shallow = time.perf_counter() - t0

    metrics: dict = {
        "shallow_kind": shallow_spec.kind,
        "patch_configs": [[c.stride, c.length] for c in configs],
        "flags": {
            "zero": configs[0].zero,
            "attach": configs[0].attach,
            "notemp": any(c.notemp for c in configs),
        },
        "train_epochs_run": log.epochs_run,
        "best_epoch": log.best_epoch,
        "val_patch_accuracy": log.best_val_accuracy,
        "train_loss_curve": log.train_loss,
        "train_accuracy": evaluate(bundle.shallow_model, train_vectors).accuracy,
    }
    timing = {
        "patching_seconds": t_patching,
        "network_train_seconds": t_network,
        "shallow_train_seconds": t_shallow,
        "train_seconds": t_patching + t_network + t_shallow,
    }

    test_vectors = None
    if test is not None:
        t0 = time.perf_counter()
        preds, test_vectors = bundle.predict_dataset(test)
        timing["inference_seconds"] = time.perf_counter() - t0
        result = evaluate(bundle.shallow_model, test_vectors)
        metrics["test_accuracy"] = result.accuracy
        metrics["test_confusion"] = result.confusion.tolist()
    return PipelineResult(
        bundle=bundle,
        train_log=log,
        metrics=metrics,
        timing=timing,
        train_vectors=train_vectors,
        test_vectors=test_vectors,
    )


def refit_shallow(
    result: PipelineResult, shallow_spec: ShallowSpec, test: Dataset | None = None
) -> PipelineResult:
    """Swap the sample-level classifier on top of an already trained network."""
    bundle = result.bundle
    t0 = time.perf_counter()
    model = fit(
        shallow_spec, result.train_vectors,
        collapse=bundle.collapse, normalize=bundle.normalize_features,
    )
    t_shallow = time.perf_counter() - t0
    new_bundle = PatchXBundle(
        network=bundle.network,
        patch_configs=bundle.patch_configs,
        norm_stats=bundle.norm_stats,
        shallow_model=model,
        collapse=bundle.collapse,
        normalize_features=bundle.normalize_features,
    )
    metrics = dict(result.metrics)
    metrics["shallow_kind"] = shallow_spec.kind
    metrics["train_accuracy"] = evaluate(model, result.train_vectors).accuracy
    timing = dict(result.timing)
    timing["shallow_train_seconds"] = t_shallow
    test_vectors = result.test_vectors
    if test is not None and test_vectors is None:
        t0 = time.perf_counter()
        test_vectors = new_bundle.vectors(test)
        timing["inference_seconds"] = time.perf_counter() - t0
    if test_vectors is not None:
        eval_result = evaluate(model, test_vectors)
        metrics["test_accuracy"] = eval_result.accuracy
        metrics["test_confusion"] = eval_result.confusion.tolist()
    return PipelineResult(
        bundle=new_bundle,
        train_log=result.train_log,
        metrics=metrics,
        timing=timing,
        train_vectors=result.train_vectors,
        test_vectors=test_vectors,
    )


@dataclass
class BlackboxResult:
    network: object
    train_log: TrainLog
    metrics: dict
    timing: dict


def train_blackbox(
    train: Dataset,
    val: Dataset,
    test: Dataset | None,
    net_spec: NetworkSpec | None = None,
    train_spec: TrainSpec | None = None,
    normalize: bool = True,
) -> BlackboxResult:
    """Baseline: the identical network applied to whole samples, no patching."""
    train_spec = train_spec or TrainSpec()
    if net_spec is None:
        net_spec = NetworkSpec(
            input_channels=train.channels,
            input_length=train.length,
            class_count=train.class_count,
            seed=train_spec.seed,
        )
    stats = normalization_stats(train) if normalize else None
    norm = lambda ds: znormalize(ds, stats) if stats else ds
    pack = lambda ds: (norm(ds).values_array(), ds.labels_array())

    network = build_network(net_spec)
    t0 = time.perf_counter()
    log = neuralnet.train(network, pack(train), pack(val), train_spec)
    t_train = time.perf_counter() - t0
    metrics: dict = {"val_accuracy": log.best_val_accuracy}
    timing = {"train_seconds": t_train}
    if test is not None:
        x_test, y_test = pack(test)
        t0 = time.perf_counter()
        metrics["test_accuracy"] = neuralnet.accuracy(network, (x_test, y_test))
        timing["inference_seconds"] = time.perf_counter() - t0
    return BlackboxResult(network=network, train_log=log, metrics=metrics, timing=timing)
