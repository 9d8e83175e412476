"""Loading, generation, normalization, and splitting of labeled time-series datasets.

A dataset is an ordered list of fixed-shape multichannel samples with integer
class labels. The synthetic point-anomaly generator reproduces the shape of the
benchmark anomaly task (length 50, 3 channels, 2 classes) and labels each
sample with a deterministic mean + k*std exceedance rule, so labels can always
be recomputed from the raw values.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

DEFAULT_SIGMA_MULTIPLIER = 4.0


class ParseError(ValueError):
    """Raised for malformed dataset files; carries the offending 1-based row."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


@dataclass
class TimeSeriesSample:
    """One multichannel series with a class label.

    values has shape (channels, length). meta optionally carries generator
    provenance such as the injected peak location.
    """

    id: int
    values: np.ndarray
    label: int
    meta: dict | None = None

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]


@dataclass
class Dataset:
    samples: list[TimeSeriesSample]
    class_count: int
    split: str = "train"

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def channels(self) -> int:
        return self.samples[0].channels

    @property
    def length(self) -> int:
        return self.samples[0].length

    def values_array(self) -> np.ndarray:
        """Stack all sample values into an (n, channels, length) array."""
        return np.stack([s.values for s in self.samples])

    def labels_array(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def ids(self) -> list[int]:
        return [s.id for s in self.samples]

    def validate(self) -> None:
        """Check the dataset invariants; raises ValueError on the first violation."""
        if self.class_count < 2:
            raise ValueError(f"class_count must be >= 2, got {self.class_count}")
        if not self.samples:
            return
        shape = self.samples[0].values.shape
        seen_ids = set()
        for s in self.samples:
            if s.values.ndim != 2 or s.values.shape != shape:
                raise ValueError(
                    f"sample {s.id}: shape {s.values.shape} differs from {shape}"
                )
            if not (0 <= s.label < self.class_count):
                raise ValueError(
                    f"sample {s.id}: label {s.label} outside [0, {self.class_count})"
                )
            if not np.all(np.isfinite(s.values)):
                raise ValueError(f"sample {s.id}: values contain NaN or Inf")
            if s.id in seen_ids:
                raise ValueError(f"duplicate sample id {s.id} in split {self.split!r}")
            seen_ids.add(s.id)


@dataclass
class AnomalyGenSpec:
    """Parameters of the synthetic point-anomaly generator.

    Half of the samples receive a single-point peak in one random channel at a
    uniform position in [2, length-2]; the label is then derived from the
    mean + k*std rule regardless of whether a peak was injected.
    """

    train_count: int = 3500
    val_count: int = 1500
    test_count: int = 1000
    length: int = 50
    channels: int = 3
    noise_sigma: float = 1.0
    peak_amplitude_range: tuple[float, float] = (5.0, 10.0)
    sigma_multiplier: float = DEFAULT_SIGMA_MULTIPLIER
    seed: int = 0

    def validate(self) -> None:
        if min(self.train_count, self.val_count, self.test_count) <= 0:
            raise ValueError("split counts must be positive")
        if self.length < 5:
            raise ValueError(f"length must be >= 5, got {self.length}")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if self.noise_sigma <= 0:
            raise ValueError(f"noise_sigma must be > 0, got {self.noise_sigma}")
        lo, hi = self.peak_amplitude_range
        if not (0 < lo <= hi):
            raise ValueError(f"bad peak_amplitude_range {self.peak_amplitude_range}")
        if self.sigma_multiplier <= 0:
            raise ValueError("sigma_multiplier must be > 0")


def anomaly_label(values: np.ndarray, sigma_multiplier: float = DEFAULT_SIGMA_MULTIPLIER) -> int:
    """Label rule of the anomaly family: 1 iff any point in any channel exceeds
    that channel's within-sample mean + k*std (population std)."""
    mean = values.mean(axis=1, keepdims=True)
    std = values.std(axis=1, keepdims=True)
    return int(np.any(values > mean + sigma_multiplier * std))


def generate_anomaly(spec: AnomalyGenSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Generate (train, val, test) datasets; deterministic for a fixed seed.

    Peaked samples carry meta = {peak_channel, peak_step, peak_value}.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    splits = []
    for split_name, count in (
        ("train", spec.train_count),
        ("val", spec.val_count),
        ("test", spec.test_count),
    ):
        samples = []
        for i in range(count):
            values = rng.normal(0.0, spec.noise_sigma, size=(spec.channels, spec.length))
            meta = None
            if rng.random() < 0.5:
                channel = int(rng.integers(0, spec.channels))
                step = int(rng.integers(2, spec.length - 1))
                amplitude = float(rng.uniform(*spec.peak_amplitude_range))
                values[channel, step] = amplitude
                meta = {"peak_channel": channel, "peak_step": step, "peak_value": amplitude}
            label = anomaly_label(values, spec.sigma_multiplier)
            samples.append(TimeSeriesSample(id=i, values=values, label=label, meta=meta))
        ds = Dataset(samples=samples, class_count=2, split=split_name)
        ds.validate()
        splits.append(ds)
    return splits[0], splits[1], splits[2]


@dataclass
class NormStats:
    """Per-channel normalization statistics computed on a training split."""

    mean: np.ndarray  # (channels,)
    std: np.ndarray  # (channels,), clamped below at 1e-8


def normalization_stats(dataset: Dataset) -> NormStats:
    if not dataset.samples:
        raise ValueError("cannot compute statistics of an empty dataset")
    values = dataset.values_array()  # (n, c, l)
    mean = values.mean(axis=(0, 2))
    std = np.maximum(values.std(axis=(0, 2)), 1e-8)
    return NormStats(mean=mean, std=std)


def znormalize(dataset: Dataset, stats: NormStats | None = None) -> Dataset:
    """Z-normalize per channel. With stats=None the dataset's own statistics are
    used (correct only for the training split); val/test must pass train stats."""
    if stats is None:
        stats = normalization_stats(dataset)
    mean = stats.mean[:, None]
    std = stats.std[:, None]
    samples = [
        replace(s, values=(s.values - mean) / std) for s in dataset.samples
    ]
    return Dataset(samples=samples, class_count=dataset.class_count, split=dataset.split)


def split_holdout(
    dataset: Dataset,
    fractions: tuple[float, float] = (0.5, 0.2),
    seed: int = 0,
) -> tuple[Dataset, Dataset, Dataset]:
    """Stratified train/val/test split preserving the original sample ids."""
    f_train, f_val = fractions
    if f_train <= 0 or f_val <= 0 or f_train + f_val >= 1:
        raise ValueError(f"fractions must be positive and sum below 1, got {fractions}")
    rng = np.random.default_rng(seed)
    by_class: dict[int, list[int]] = {}
    for idx, s in enumerate(dataset.samples):
        by_class.setdefault(s.label, []).append(idx)
    picks: dict[str, list[int]] = {"train": [], "val": [], "test": []}
    for label in sorted(by_class):
        indices = np.array(by_class[label])
        if len(indices) < 3:
            raise ValueError(
                f"class {label} has {len(indices)} sample(s); need at least 3 to stratify"
            )
        rng.shuffle(indices)
        n = len(indices)
        n_train = max(1, round(n * f_train))
        n_val = max(1, round(n * f_val))
        if n_train + n_val >= n:  # keep at least one test sample per class
            n_train = max(1, n - n_val - 1)
        picks["train"].extend(indices[:n_train])
        picks["val"].extend(indices[n_train : n_train + n_val])
        picks["test"].extend(indices[n_train + n_val :])
    out = []
    for split_name in ("train", "val", "test"):
        chosen = sorted(picks[split_name])
        out.append(
            Dataset(
                samples=[dataset.samples[i] for i in chosen],
                class_count=dataset.class_count,
                split=split_name,
            )
        )
    return out[0], out[1], out[2]


def save_dataset(dataset: Dataset, path: str | Path, delimiter: str = ",") -> None:
    """Write the delimited-text layout: a `channels,length,class_count` header,
    then one sample per row (channel-major values followed by the label)."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        f.write(delimiter.join(str(v) for v in (dataset.channels, dataset.length, dataset.class_count)))
        f.write("\n")
        for s in dataset.samples:
            fields = [repr(float(v)) for v in s.values.reshape(-1)]
            fields.append(str(s.label))
            f.write(delimiter.join(fields))
            f.write("\n")


def load_dataset(path: str | Path, delimiter: str = ",", split: str = "train") -> Dataset:
    """Parse a delimited-text dataset file; row order gives the sample ids.

    Raises ParseError naming the 1-based data row on any malformed content.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8") as f:
        lines = [line.rstrip("\n") for line in f]
    lines = [line for line in lines if line.strip()]
    if not lines:
        raise ParseError(f"{path} is empty")
    header = lines[0].split(delimiter)
    if len(header) != 3:
        raise ParseError(f"header must be 'channels{delimiter}length{delimiter}class_count'")
    try:
        channels, length, class_count = (int(v) for v in header)
    except ValueError:
        raise ParseError(f"non-integer header field in {lines[0]!r}") from None
    expected = channels * length + 1
    samples = []
    for row_no, line in enumerate(lines[1:], start=1):
        fields = line.split(delimiter)
        if len(fields) != expected:
            raise ParseError(
                f"inconsistent length: expected {expected} fields "
                f"({channels}x{length} values + label), got {len(fields)}",
                row=row_no,
            )
        try:
            values = np.array([float(v) for v in fields[:-1]], dtype=np.float64)
        except ValueError:
            bad = next(v for v in fields[:-1] if not _is_number(v))
            raise ParseError(f"non-numeric value {bad!r}", row=row_no) from None
        if not np.all(np.isfinite(values)):
            raise ParseError("values contain NaN or Inf", row=row_no)
        try:
            label = int(fields[-1])
        except ValueError:
            raise ParseError(f"non-integer label {fields[-1]!r}", row=row_no) from None
        if not (0 <= label < class_count):
            raise ParseError(f"label {label} outside [0, {class_count})", row=row_no)
        samples.append(
            TimeSeriesSample(id=row_no - 1, values=values.reshape(channels, length), label=label)
        )
    dataset = Dataset(samples=samples, class_count=class_count, split=split)
    dataset.validate()
    return dataset


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False
