import pytest

from patchx.data import AnomalyGenSpec, generate_anomaly
from patchx.neuralnet import NetworkSpec, TrainSpec
from patchx.patching import PatchConfig
from patchx.pipeline import run_pipeline
from patchx.shallow import ShallowSpec, SvmSpec

SMALL_NET = ((8, 3, "relu"), (16, 3, "relu"))


@pytest.fixture(scope="session")
def anomaly_splits():
    spec = AnomalyGenSpec(train_count=250, val_count=100, test_count=150, seed=123)
    return generate_anomaly(spec)


@pytest.fixture(scope="session")
def small_pipeline(anomaly_splits):
    """A quickly trained but functional pipeline over the anomaly task."""
    train, val, test = anomaly_splits
    configs = [PatchConfig(5, 10), PatchConfig(10, 20)]
    net_spec = NetworkSpec(
        input_channels=4, input_length=50, class_count=2, conv_blocks=SMALL_NET, seed=7
    )
    train_spec = TrainSpec(
        epochs=5, batch_size=64, learning_rate=2e-3, early_stopping_patience=4, seed=7
    )
    return run_pipeline(
        train, val, test, configs,
        net_spec=net_spec, train_spec=train_spec,
        shallow_spec=ShallowSpec(kind="svm", svm=SvmSpec(standardize=True)),
    )


@pytest.fixture(scope="session")
def small_bundle(small_pipeline):
    return small_pipeline.bundle
