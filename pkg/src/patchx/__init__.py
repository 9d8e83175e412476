"""PatchX: hybrid patch-based time-series classification with patch-level explanations.

Pipeline: (1) transform samples into length-preserved patches, (2) train a 1-D
CNN on the patches with inherited labels, (3) distill per-sample class-presence
vectors from the patch predictions, (4) classify samples with a shallow model.
"""

from .bundle import PatchXBundle, load_bundle, save_bundle
from .data import (
    AnomalyGenSpec,
    Dataset,
    NormStats,
    TimeSeriesSample,
    anomaly_label,
    generate_anomaly,
    load_dataset,
    normalization_stats,
    save_dataset,
    split_holdout,
    znormalize,
)
from .metadata import ClassPresenceVector, extract, extract_all
from .neuralnet import NetworkSpec, PatchNet, TrainSpec, build_network, gradient_check, train
from .patching import PatchConfig, PatchInstance, build_patch_dataset, enumerate_patches, transform
from .pipeline import run_pipeline, train_blackbox
from .shallow import ForestSpec, ShallowSpec, SvmSpec, TrivialSpec, evaluate, fit, predict

__version__ = "0.1.0"

__all__ = [
    "AnomalyGenSpec",
    "ClassPresenceVector",
    "Dataset",
    "ForestSpec",
    "NetworkSpec",
    "NormStats",
    "PatchConfig",
    "PatchInstance",
    "PatchNet",
    "PatchXBundle",
    "ShallowSpec",
    "SvmSpec",
    "TimeSeriesSample",
    "TrainSpec",
    "TrivialSpec",
    "anomaly_label",
    "build_network",
    "build_patch_dataset",
    "enumerate_patches",
    "evaluate",
    "extract",
    "extract_all",
    "fit",
    "generate_anomaly",
    "gradient_check",
    "load_bundle",
    "load_dataset",
    "normalization_stats",
    "predict",
    "run_pipeline",
    "save_bundle",
    "save_dataset",
    "split_holdout",
    "train",
    "train_blackbox",
    "transform",
    "znormalize",
]
