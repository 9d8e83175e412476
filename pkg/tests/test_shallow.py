import numpy as np
import pytest

from patchx.metadata import ClassPresenceVector, extract
from patchx.shallow import (
    ForestSpec,
    ShallowSpec,
    TrivialSpec,
    evaluate,
    fit,
    predict,
    predict_all,
    sgd_hinge,
    SvmModel,
)


def vector(blocks, counts=None, label=0, sample_id=0):
    blocks = np.atleast_2d(np.asarray(blocks, dtype=float))
    if counts is None:
        counts = np.ceil(blocks).astype(np.int64)
    return ClassPresenceVector(
        sample_id=sample_id,
        blocks=blocks,
        counts=np.atleast_2d(np.asarray(counts, dtype=np.int64)),
        patch_counts=np.maximum(blocks.sum(axis=1), 1).astype(np.int64),
        label=label,
    )


def separable_vectors(n_per_class=20, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_per_class):
        out.append(vector([[2.0 + rng.normal(0, 0.1), rng.normal(0, 0.05) ** 2]],
                          label=0, sample_id=i))
        out.append(vector([[rng.normal(0, 0.05) ** 2, 2.0 + rng.normal(0, 0.1)]],
                          label=1, sample_id=n_per_class + i))
    return out


class TestFit:
    def test_svm_separable_perfect_training(self):
        vectors = separable_vectors()
        model = fit(ShallowSpec(kind="svm"), vectors)
        assert evaluate(model, vectors).accuracy == 1.0

    def test_forest_one_stump_separable(self):
        vectors = separable_vectors()
        spec = ShallowSpec(kind="forest", forest=ForestSpec(trees=1, max_depth=1, feature_subsample="all"))
        model = fit(spec, vectors)
        assert evaluate(model, vectors).accuracy == 1.0

    def test_trivial_is_pass_through(self):
        vectors = separable_vectors(n_per_class=2)
        model = fit(ShallowSpec(kind="trivial"), vectors)
        assert model.kind == "trivial"
        assert model.class_count == 2

    def test_single_class_rejected(self):
        vectors = [vector([[1.0, 0.0]], label=0, sample_id=i) for i in range(5)]
        with pytest.raises(ValueError, match="single class"):
            fit(ShallowSpec(kind="svm"), vectors)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            ShallowSpec(kind="boosting").validate()
        with pytest.raises(ValueError):
            ShallowSpec(trivial=TrivialSpec(mode="median")).validate()


class TestPredict:
    def test_occurrence_majority_with_recount_oracle(self):
        # blocks equal the per-class win counts (every winning confidence is 1.0)
        preds = [(0, np.array([1.0, 0.0]))] * 3 + [(0, np.array([0.0, 1.0]))]
        v = extract(0, preds, class_count=2, n_configs=1)
        model = fit(ShallowSpec(kind="trivial", trivial=TrivialSpec(mode="occurrence")), [
            vector([[1.0, 0.0]], label=0), vector([[0.0, 1.0]], label=1)])
        assert predict(model, v) == 0
        # independent recount of argmax wins
        wins = np.zeros(2)
        for _, p in preds:
            wins[int(np.argmax(p))] += 1
        assert int(np.argmax(wins)) == 0

    def test_confidence_sum(self):
        model = fit(ShallowSpec(kind="trivial", trivial=TrivialSpec(mode="confidence-sum")), [
            vector([[1.0, 0.0]], label=0), vector([[0.0, 1.0]], label=1)])
        assert predict(model, vector([[1.5, 0.8]])) == 0
        assert predict(model, vector([[0.3, 0.9]])) == 1

    def test_logodds_confident_minority_outvotes_uncertain_majority(self):
        # 11 noise-grade class-0 wins vs 4 high-confidence class-1 wins
        preds = [(0, np.array([0.58, 0.42]))] * 11 + [(0, np.array([0.02, 0.98]))] * 4
        v = extract(0, preds, class_count=2, n_configs=1)
        model = fit(ShallowSpec(kind="trivial"), [
            vector([[1.0, 0.0]], label=0), vector([[0.0, 1.0]], label=1)])
        assert model.mode == "logodds"
        assert predict(model, v) == 1
        # occurrence voting on the same vector prefers the majority class
        occ = fit(ShallowSpec(kind="trivial", trivial=TrivialSpec(mode="occurrence")), [
            vector([[1.0, 0.0]], label=0), vector([[0.0, 1.0]], label=1)])
        assert predict(occ, v) == 0

    def test_logodds_uniform_ties_to_lowest(self):
        preds = [(0, np.array([0.5, 0.5]))] * 4
        v = extract(0, preds, class_count=2, n_configs=1)
        model = fit(ShallowSpec(kind="trivial"), [
            vector([[1.0, 0.0]], label=0), vector([[0.0, 1.0]], label=1)])
        assert predict(model, v) == 0

    def test_svm_boundary_tie_breaks_to_lowest(self):
        model = SvmModel(
            weights=np.array([[1.0, 0.0], [0.0, 1.0]]),
            biases=np.zeros(2),
            class_count=2,
            feature_mean=None,
            feature_std=None,
            collapse=False,
            normalize=False,
        )
        on_boundary = vector([[1.0, 1.0]])  # identical scores for both machines
        assert model.predict(on_boundary) == 0

    def test_dimension_mismatch_rejected(self):
        vectors = separable_vectors()
        model = fit(ShallowSpec(kind="svm"), vectors)
        wrong = vector([[1.0, 0.0, 0.0]])
        with pytest.raises(ValueError, match="dimension"):
            model.predict(wrong)

    def test_trivial_shape_mismatch_rejected(self):
        model = fit(ShallowSpec(kind="trivial"), separable_vectors(n_per_class=2))
        with pytest.raises(ValueError):
            model.predict(vector([[1.0, 0.0, 0.5]]))


class TestEvaluate:
    def test_all_correct(self):
        vectors = separable_vectors(n_per_class=10)
        model = fit(ShallowSpec(kind="svm"), vectors)
        result = evaluate(model, vectors)
        assert result.accuracy == 1.0
        assert np.all(result.confusion == np.diag(np.diag(result.confusion)))

    def test_random_labels_near_chance(self):
        rng = np.random.default_rng(12)
        vectors = [
            vector([list(rng.dirichlet(np.ones(2)))], label=int(rng.integers(0, 2)), sample_id=i)
            for i in range(1000)
        ]
        model = fit(ShallowSpec(kind="trivial", trivial=TrivialSpec(mode="confidence-sum")), vectors)
        acc = evaluate(model, vectors).accuracy
        assert 0.44 <= acc <= 0.56

    def test_confusion_total_is_n(self):
        vectors = separable_vectors(n_per_class=17)
        model = fit(ShallowSpec(kind="svm"), vectors)
        assert evaluate(model, vectors).confusion.sum() == len(vectors)

    def test_confusion_row_sums_are_class_supports(self):
        vectors = separable_vectors(n_per_class=9)
        model = fit(ShallowSpec(kind="svm"), vectors)
        confusion = evaluate(model, vectors).confusion
        assert confusion.sum(axis=1).tolist() == [9, 9]


class TestInvariants:
    def test_ovr_agrees_with_single_binary_machine(self):
        vectors = separable_vectors(seed=4)
        features = np.stack([v.features() for v in vectors])
        labels = np.array([v.label for v in vectors])
        model = fit(ShallowSpec(kind="svm"), vectors)
        signs = np.where(labels == 1, 1.0, -1.0)[:, None]
        w, b = sgd_hinge(features, signs, 1.0, 200, 0.1, 0)
        test_vectors = separable_vectors(seed=99)
        for v in test_vectors:
            score = float(v.features() @ w[0] + b[0])
            binary_pred = 1 if score > 0 else 0
            assert model.predict(v) == binary_pred

    def test_forest_deterministic_bitwise(self):
        vectors = separable_vectors(seed=6)
        spec = ShallowSpec(kind="forest", forest=ForestSpec(trees=12, seed=42))
        a = fit(spec, vectors)
        b = fit(spec, vectors)
        for tree_a, tree_b in zip(a.trees, b.trees):
            np.testing.assert_array_equal(tree_a.feature, tree_b.feature)
            np.testing.assert_array_equal(tree_a.threshold, tree_b.threshold)
            np.testing.assert_array_equal(tree_a.leaf_class, tree_b.leaf_class)
        np.testing.assert_array_equal(predict_all(a, vectors), predict_all(b, vectors))

    def test_forest_scale_invariance(self):
        rng = np.random.default_rng(8)
        vectors = []
        for i in range(60):
            label = i % 2
            base = np.array([[1.0 + label + rng.normal(0, 0.2), 2.0 - label + rng.normal(0, 0.2)]])
            vectors.append(vector(base, label=label, sample_id=i))
        scale = 37.5
        scaled = [
            ClassPresenceVector(v.sample_id, v.blocks * scale, v.counts, v.patch_counts, v.label)
            for v in vectors
        ]
        spec = ShallowSpec(kind="forest", forest=ForestSpec(trees=15, seed=5))
        model = fit(spec, vectors)
        model_scaled = fit(spec, scaled)
        test = [vector([[1.3 + rng.normal(0, 0.3), 1.7 + rng.normal(0, 0.3)]], sample_id=i)
                for i in range(40)]
        test_scaled = [
            ClassPresenceVector(v.sample_id, v.blocks * scale, v.counts, v.patch_counts, v.label)
            for v in test
        ]
        np.testing.assert_array_equal(predict_all(model, test), predict_all(model_scaled, test_scaled))

    def test_svm_deterministic(self):
        vectors = separable_vectors(seed=10)
        a = fit(ShallowSpec(kind="svm"), vectors)
        b = fit(ShallowSpec(kind="svm"), vectors)
        np.testing.assert_array_equal(a.weights, b.weights)
        np.testing.assert_array_equal(a.biases, b.biases)

    def test_multiclass_ovr(self):
        rng = np.random.default_rng(14)
        vectors = []
        for i in range(90):
            label = i % 3
            blocks = np.full((1, 3), 0.2) + rng.normal(0, 0.03, (1, 3))
            blocks[0, label] += 2.0
            vectors.append(vector(blocks, label=label, sample_id=i))
        model = fit(ShallowSpec(kind="svm"), vectors)
        assert evaluate(model, vectors).accuracy == 1.0
