import json

import numpy as np
import pytest

from patchx.data import Dataset, TimeSeriesSample, anomaly_label
from patchx.explain import (
    boundary_probe,
    categorize_confidence,
    confidence_histogram,
    explain_sample,
    mislabel_report,
    save_records,
    save_report,
)
from patchx.metadata import extract
from patchx.neuralnet import NetworkSpec, TrainSpec
from patchx.patching import PatchConfig, enumerate_patches
from patchx.pipeline import run_pipeline
from patchx.shallow import predict as shallow_predict


class TestCategorize:
    def test_tiers(self):
        assert categorize_confidence(0.95, 2) == "class-specific"
        assert categorize_confidence(0.9, 2) == "class-specific"
        assert categorize_confidence(0.55, 2) == "unrelated"
        assert categorize_confidence(0.75, 2) == "shared"

    def test_unrelated_band_tracks_class_count(self):
        assert categorize_confidence(0.3, 5) == "unrelated"
        assert categorize_confidence(0.45, 5) == "shared"


class TestExplainSample:
    def test_spans_match_patch_enumeration(self, small_bundle, anomaly_splits):
        sample = anomaly_splits[2].samples[0]
        records, _ = explain_sample(small_bundle, sample)
        expected = []
        for ci, config in enumerate(small_bundle.patch_configs):
            for p, start, end in enumerate_patches(sample.length, config):
                expected.append((ci, p, start, end))
        got = [(r.config_index, r.patch_index, r.span[0], r.span[1]) for r in records]
        assert got == expected

    def test_prediction_matches_shallow_on_extracted_vector(self, small_bundle, anomaly_splits):
        sample = anomaly_splits[2].samples[3]
        records, prediction = explain_sample(small_bundle, sample)
        vector = extract(
            sample.id,
            [(r.config_index, r.softmax) for r in records],
            class_count=small_bundle.class_count,
            n_configs=len(small_bundle.patch_configs),
            label=sample.label,
        )
        assert prediction == shallow_predict(small_bundle.shallow_model, vector)

    def test_matches_dataset_pipeline_prediction(self, small_bundle, anomaly_splits):
        test = anomaly_splits[2]
        preds, _ = small_bundle.predict_dataset(test)
        for sample, expected in list(zip(test.samples, preds))[:10]:
            _, prediction = explain_sample(small_bundle, sample)
            assert prediction == int(expected)

    def test_confidence_is_max_softmax(self, small_bundle, anomaly_splits):
        records, _ = explain_sample(small_bundle, anomaly_splits[2].samples[1])
        for r in records:
            assert r.confidence == pytest.approx(float(np.max(r.softmax)))
            assert 0.0 <= r.overlay_alpha() <= 1.0

    def test_records_export(self, small_bundle, anomaly_splits, tmp_path):
        records, _ = explain_sample(small_bundle, anomaly_splits[2].samples[0])
        path = tmp_path / "records.csv"
        save_records(records, path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == len(records) + 1  # header
        assert lines[0].startswith("sample_id,config_index")


class TestHistogram:
    def test_counts_sum_to_patch_total(self, small_bundle, anomaly_splits):
        test = anomaly_splits[2]
        report = confidence_histogram(small_bundle, test)
        assert report.total == len(test) * 15  # 10 + 5 patches per sample

    def test_lower_bound_is_chance(self, small_bundle, anomaly_splits):
        report = confidence_histogram(small_bundle, anomaly_splits[2])
        assert report.bin_edges[0] == pytest.approx(0.5)
        assert report.bin_edges[-1] == pytest.approx(1.0)

    def test_uniform_network_masses_lowest_bin(self, small_bundle, anomaly_splits):
        import copy

        uniform = copy.deepcopy(small_bundle)
        uniform.network.dense.w[...] = 0.0
        uniform.network.dense.b[...] = 0.0
        report = confidence_histogram(uniform, anomaly_splits[2])
        assert report.counts[0] == report.total  # every confidence is exactly 0.5

    def test_confident_network_masses_top_bin(self, small_bundle, anomaly_splits):
        import copy

        confident = copy.deepcopy(small_bundle)
        confident.network.dense.w[...] = 0.0
        confident.network.dense.b[...] = np.array([80.0, 0.0])
        report = confidence_histogram(confident, anomaly_splits[2])
        assert report.counts[-1] == report.total

    def test_per_class_breakdown_sums(self, small_bundle, anomaly_splits):
        report = confidence_histogram(small_bundle, anomaly_splits[2], per_class=True)
        stacked = sum(report.per_class.values())
        np.testing.assert_array_equal(stacked, report.counts)

    def test_report_serializes(self, small_bundle, anomaly_splits, tmp_path):
        report = confidence_histogram(small_bundle, anomaly_splits[2], per_class=True)
        path = tmp_path / "hist.json"
        save_report(report.to_dict(), path)
        loaded = json.loads(path.read_text())
        assert loaded["total_patches"] == report.total


class TestBoundaryProbe:
    def probe_sample(self, anomaly_splits):
        test = anomaly_splits[2]
        return next(s for s in test.samples if s.meta is not None)

    def test_factor_one_identity(self, small_bundle, anomaly_splits):
        sample = self.probe_sample(anomaly_splits)
        pos = (sample.meta["peak_channel"], sample.meta["peak_step"])
        result = boundary_probe(small_bundle, sample, pos, [1.0])
        records, prediction = explain_sample(small_bundle, sample)
        step = result.steps[0]
        assert step.sample_prediction == prediction
        assert step.ground_truth == anomaly_label(sample.values)
        for r_probe, r_plain in zip(step.records, records):
            np.testing.assert_array_equal(r_probe.softmax, r_plain.softmax)

    def test_flip_factor_matches_label_rule(self, small_bundle, anomaly_splits):
        sample = self.probe_sample(anomaly_splits)
        pos = (sample.meta["peak_channel"], sample.meta["peak_step"])
        factors = list(np.linspace(0.2, 2.0, 10))
        result = boundary_probe(small_bundle, sample, pos, factors)
        flips = []
        for f in factors:
            v = sample.values.copy()
            v[pos] *= f
            mean = v.mean(axis=1, keepdims=True)
            std = v.std(axis=1, keepdims=True)
            flips.append(int(np.any(v > mean + 4.0 * std)))
        expected = next((factors[i] for i in range(len(flips)) if flips[i] != flips[0]), None)
        assert result.ground_truth_flip_factor() == expected

    def test_factors_must_increase(self, small_bundle, anomaly_splits):
        sample = self.probe_sample(anomaly_splits)
        with pytest.raises(ValueError, match="increasing"):
            boundary_probe(small_bundle, sample, (0, 5), [1.0, 0.5])

    def test_position_out_of_range(self, small_bundle, anomaly_splits):
        sample = self.probe_sample(anomaly_splits)
        with pytest.raises(IndexError):
            boundary_probe(small_bundle, sample, (0, 500), [1.0])
        with pytest.raises(IndexError):
            boundary_probe(small_bundle, sample, (9, 5), [1.0])

    def test_monotonicity_is_reported_not_asserted(self, small_bundle, anomaly_splits):
        sample = self.probe_sample(anomaly_splits)
        pos = (sample.meta["peak_channel"], sample.meta["peak_step"])
        result = boundary_probe(small_bundle, sample, pos, [0.5, 1.0, 1.5])
        report = result.patch_confidence_monotone(target_class=1)
        assert report  # one entry per peak-covering patch
        assert all(isinstance(v, bool) for v in report.values())

    def test_report_round_trips_json(self, small_bundle, anomaly_splits, tmp_path):
        sample = self.probe_sample(anomaly_splits)
        pos = (sample.meta["peak_channel"], sample.meta["peak_step"])
        result = boundary_probe(small_bundle, sample, pos, [0.5, 1.0])
        path = tmp_path / "probe.json"
        save_report(result.to_dict(), path)
        loaded = json.loads(path.read_text())
        assert loaded["sample_id"] == sample.id
        assert len(loaded["steps"]) == 2


class TestMislabelReport:
    def test_count_consistent_with_accuracy(self, small_pipeline, anomaly_splits):
        test = anomaly_splits[2]
        entries = mislabel_report(small_pipeline.bundle, test)
        accuracy = small_pipeline.metrics["test_accuracy"]
        assert len(entries) == round(len(test) * (1.0 - accuracy))

    def test_entries_match_explain_sample(self, small_pipeline, anomaly_splits):
        test = anomaly_splits[2]
        entries = mislabel_report(small_pipeline.bundle, test)
        for entry in entries[:3]:
            sample = next(s for s in test.samples if s.id == entry.sample_id)
            records, prediction = explain_sample(small_pipeline.bundle, sample)
            assert entry.predicted_label == prediction != entry.true_label
            assert len(entry.records) == len(records)

    def test_sorted_by_margin(self, small_pipeline, anomaly_splits):
        entries = mislabel_report(small_pipeline.bundle, anomaly_splits[2])
        margins = [e.margin for e in entries]
        assert margins == sorted(margins)

    def test_perfect_pipeline_empty_report(self):
        # trivially separable task: constant-level classes
        rng = np.random.default_rng(5)
        def make(n, split):
            samples = []
            for i in range(n):
                label = i % 2
                level = 3.0 if label else -3.0
                samples.append(TimeSeriesSample(
                    id=i, values=level + rng.normal(0, 0.05, (1, 20)), label=label))
            return Dataset(samples=samples, class_count=2, split=split)
        train, val, test = make(40, "train"), make(20, "val"), make(20, "test")
        result = run_pipeline(
            train, val, test, [PatchConfig(10, 10)],
            net_spec=NetworkSpec(2, 20, 2, conv_blocks=((4, 3, "relu"),), seed=1),
            train_spec=TrainSpec(epochs=10, batch_size=16, learning_rate=5e-3,
                                 early_stopping_patience=9, seed=1),
        )
        assert result.metrics["test_accuracy"] == 1.0
        assert mislabel_report(result.bundle, test) == []
