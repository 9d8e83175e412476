"""Sample-level classifiers over class-presence vectors.

Three interchangeable kinds:

* svm     - linear one-vs-rest SVM trained by mini-batch subgradient descent
            on L2-regularized hinge loss,
* forest  - random forest with Gini-impurity CART trees, bootstrap sampling
            and per-tree seeds derived from the master seed,
* trivial - voting directly on the class-presence vector, no fitting. Modes:
            occurrence (most argmax wins, confidence-sum tie-break),
            confidence-sum (largest summed winning confidence), and logodds
            (wins weighted by the log-odds of their mean confidence, the
            default: near-chance patch predictions then carry almost no
            weight, so a few confident patches can outvote many uncertain
            ones).

Ties are always broken toward the lowest class index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .metadata import ClassPresenceVector, feature_matrix, labels_array

TRIVIAL_MODES = ("occurrence", "confidence-sum", "logodds")
_LOGIT_CLAMP = 1e-12


@dataclass
class SvmSpec:
    c_reg: float = 1.0
    epochs: int = 200
    learning_rate: float = 0.1
    seed: int = 0
    standardize: bool = False

    def validate(self) -> None:
        if self.c_reg <= 0 or self.epochs < 1 or self.learning_rate <= 0:
            raise ValueError("svm parameters must be positive")


@dataclass
class ForestSpec:
    trees: int = 100
    max_depth: int | None = None
    min_leaf: int = 1
    feature_subsample: str = "sqrt"  # sqrt | all
    seed: int = 0

    def validate(self) -> None:
        if self.trees < 1 or self.min_leaf < 1:
            raise ValueError("forest parameters must be positive")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 or None")
        if self.feature_subsample not in ("sqrt", "all"):
            raise ValueError(f"unknown feature_subsample {self.feature_subsample!r}")


@dataclass
class TrivialSpec:
    mode: str = "logodds"

    def validate(self) -> None:
        if self.mode not in TRIVIAL_MODES:
            raise ValueError(f"unknown trivial mode {self.mode!r}; choose from {TRIVIAL_MODES}")


@dataclass
class ShallowSpec:
    kind: str = "svm"  # svm | forest | trivial
    svm: SvmSpec = field(default_factory=SvmSpec)
    forest: ForestSpec = field(default_factory=ForestSpec)
    trivial: TrivialSpec = field(default_factory=TrivialSpec)

    def validate(self) -> None:
        if self.kind not in ("svm", "forest", "trivial"):
            raise ValueError(f"unknown shallow kind {self.kind!r}")
        self.svm.validate()
        self.forest.validate()
        self.trivial.validate()


# -- linear SVM --------------------------------------------------------------


def sgd_hinge(
    features: np.ndarray,
    signs: np.ndarray,
    c_reg: float,
    epochs: int,
    learning_rate: float,
    seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Mini-batch subgradient descent on mean hinge loss + ||w||^2 / (2*c_reg).

    signs is an (n, machines) matrix of +-1 targets; all machines share the
    shuffling, so a one-vs-rest bank trains in a single pass.

    Returns (weights (machines, dim), biases (machines,)).
    """
    n, dim = features.shape
    machines = signs.shape[1]
    w = np.zeros((machines, dim))
    b = np.zeros(machines)
    lam = 1.0 / c_reg
    rng = np.random.default_rng(seed)
    batch = min(64, n)
    for epoch in range(epochs):
        lr = learning_rate / (1.0 + 0.01 * epoch)
        order = rng.permutation(n)
        for lo in range(0, n, batch):
            idx = order[lo : lo + batch]
            xb = features[idx]
            sb = signs[idx]
            scores = xb @ w.T + b
            violating = (sb * scores < 1.0).astype(np.float64) * sb
            w -= lr * (lam * w / n - violating.T @ xb / len(idx))
            b += lr * violating.sum(axis=0) / len(idx)
    return w, b


@dataclass
class SvmModel:
    weights: np.ndarray  # (class_count, dim)
    biases: np.ndarray  # (class_count,)
    class_count: int
    feature_mean: np.ndarray | None
    feature_std: np.ndarray | None
    collapse: bool
    normalize: bool

    kind = "svm"

    def _prepare(self, vector: ClassPresenceVector) -> np.ndarray:
        x = vector.features(collapse=self.collapse, normalize=self.normalize)
        if x.shape[0] != self.weights.shape[1]:
            raise ValueError(
                f"feature dimension {x.shape[0]} does not match fitted dimension "
                f"{self.weights.shape[1]}"
            )
        if self.feature_mean is not None:
            x = (x - self.feature_mean) / self.feature_std
        return x

    def decision_scores(self, vector: ClassPresenceVector) -> np.ndarray:
        return self._prepare(vector) @ self.weights.T + self.biases

    def predict(self, vector: ClassPresenceVector) -> int:
        return int(np.argmax(self.decision_scores(vector)))


# -- random forest ------------------------------------------------------------


@dataclass
class TreeArrays:
    """One CART tree flattened to arrays; leaf nodes have feature == -1."""

    feature: np.ndarray  # int64
    threshold: np.ndarray  # float64
    left: np.ndarray  # int64
    right: np.ndarray  # int64
    leaf_class: np.ndarray  # int64, -1 on internal nodes

    def predict(self, features: np.ndarray) -> np.ndarray:
        node = np.zeros(len(features), dtype=np.int64)
        while True:
            internal = self.feature[node] >= 0
            if not internal.any():
                return self.leaf_class[node]
            rows = np.flatnonzero(internal)
            current = node[rows]
            go_left = features[rows, self.feature[current]] <= self.threshold[current]
            node[rows] = np.where(go_left, self.left[current], self.right[current])


def _majority(labels: np.ndarray, class_count: int) -> int:
    return int(np.argmax(np.bincount(labels, minlength=class_count)))


def _best_split(
    features: np.ndarray,
    labels: np.ndarray,
    candidates: np.ndarray,
    class_count: int,
    min_leaf: int,
) -> tuple[int, float] | None:
    n = len(labels)
    onehot = np.zeros((n, class_count))
    onehot[np.arange(n), labels] = 1.0
    total = onehot.sum(axis=0)
    best = None
    best_score = np.inf
    for f in candidates:
        order = np.argsort(features[:, f], kind="stable")
        xs = features[order, f]
        left_counts = np.cumsum(onehot[order], axis=0)
        sizes_left = np.arange(1, n + 1, dtype=np.float64)
        valid = np.flatnonzero(
            (xs[:-1] < xs[1:])
            & (sizes_left[:-1] >= min_leaf)
            & (n - sizes_left[:-1] >= min_leaf)
        )
        if len(valid) == 0:
            continue
        nl = sizes_left[valid]
        nr = n - nl
        cl = left_counts[valid]
        cr = total - cl
        gini_left = 1.0 - ((cl / nl[:, None]) ** 2).sum(axis=1)
        gini_right = 1.0 - ((cr / nr[:, None]) ** 2).sum(axis=1)
        weighted = (nl * gini_left + nr * gini_right) / n
        k = int(np.argmin(weighted))
        if weighted[k] < best_score:
            best_score = float(weighted[k])
            pos = valid[k]
            best = (int(f), float((xs[pos] + xs[pos + 1]) / 2.0))
    return best


def _grow_tree(
    features: np.ndarray,
    labels: np.ndarray,
    class_count: int,
    spec: ForestSpec,
    rng: np.random.Generator,
) -> TreeArrays:
    feature_nodes: list[int] = []
    threshold_nodes: list[float] = []
    left_nodes: list[int] = []
    right_nodes: list[int] = []
    leaf_nodes: list[int] = []
    dim = features.shape[1]
    n_candidates = dim if spec.feature_subsample == "all" else max(1, int(math.isqrt(dim)))

    def new_node() -> int:
        feature_nodes.append(-1)
        threshold_nodes.append(0.0)
        left_nodes.append(-1)
        right_nodes.append(-1)
        leaf_nodes.append(-1)
        return len(feature_nodes) - 1

    def build(idx: np.ndarray, depth: int) -> int:
        node = new_node()
        y = labels[idx]
        if (
            len(idx) < 2 * spec.min_leaf
            or (spec.max_depth is not None and depth >= spec.max_depth)
            or len(np.unique(y)) == 1
        ):
            leaf_nodes[node] = _majority(y, class_count)
            return node
        candidates = np.sort(rng.choice(dim, size=n_candidates, replace=False))
        split = _best_split(features[idx], y, candidates, class_count, spec.min_leaf)
        if split is None:
            leaf_nodes[node] = _majority(y, class_count)
            return node
        f, threshold = split
        go_left = features[idx, f] <= threshold
        feature_nodes[node] = f
        threshold_nodes[node] = threshold
        left_nodes[node] = build(idx[go_left], depth + 1)
        right_nodes[node] = build(idx[~go_left], depth + 1)
        return node

    build(np.arange(len(labels)), 0)
    return TreeArrays(
        feature=np.array(feature_nodes, dtype=np.int64),
        threshold=np.array(threshold_nodes, dtype=np.float64),
        left=np.array(left_nodes, dtype=np.int64),
        right=np.array(right_nodes, dtype=np.int64),
        leaf_class=np.array(leaf_nodes, dtype=np.int64),
    )


@dataclass
class ForestModel:
    trees: list[TreeArrays]
    class_count: int
    feature_dim: int
    collapse: bool
    normalize: bool

    kind = "forest"

    def _prepare(self, vector: ClassPresenceVector) -> np.ndarray:
        x = vector.features(collapse=self.collapse, normalize=self.normalize)
        if x.shape[0] != self.feature_dim:
            raise ValueError(
                f"feature dimension {x.shape[0]} does not match fitted dimension {self.feature_dim}"
            )
        return x

    def votes(self, features_2d: np.ndarray) -> np.ndarray:
        out = np.zeros((len(features_2d), self.class_count))
        for tree in self.trees:
            preds = tree.predict(features_2d)
            out[np.arange(len(preds)), preds] += 1.0
        return out

    def decision_scores(self, vector: ClassPresenceVector) -> np.ndarray:
        return self.votes(self._prepare(vector)[None])[0] / len(self.trees)

    def predict(self, vector: ClassPresenceVector) -> int:
        return int(np.argmax(self.decision_scores(vector)))


# -- trivial voting ------------------------------------------------------------


@dataclass
class TrivialModel:
    mode: str
    class_count: int
    n_configs: int

    kind = "trivial"

    def _check(self, vector: ClassPresenceVector) -> None:
        if vector.blocks.shape != (self.n_configs, self.class_count):
            raise ValueError(
                f"vector blocks {vector.blocks.shape} do not match "
                f"({self.n_configs}, {self.class_count})"
            )

    def decision_scores(self, vector: ClassPresenceVector) -> np.ndarray:
        self._check(vector)
        counts = vector.counts.sum(axis=0).astype(np.float64)
        sums = vector.blocks.sum(axis=0)
        if self.mode == "occurrence":
            # confidence sums only break ties between equal win counts
            span = sums.max() + 1.0
            return counts + sums / span
        if self.mode == "confidence-sum":
            return sums.copy()
        mean_conf = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
        mean_conf = np.clip(mean_conf, _LOGIT_CLAMP, 1.0 - _LOGIT_CLAMP)
        logit = np.log(mean_conf) - np.log1p(-mean_conf)
        return np.where(counts > 0, counts * logit, 0.0)

    def predict(self, vector: ClassPresenceVector) -> int:
        return int(np.argmax(self.decision_scores(vector)))


ShallowModel = SvmModel | ForestModel | TrivialModel


# -- spec operations -----------------------------------------------------------


def fit(
    spec: ShallowSpec,
    train_vectors: list[ClassPresenceVector],
    collapse: bool = False,
    normalize: bool = False,
) -> ShallowModel:
    """Train the configured classifier on class-presence vectors."""
    spec.validate()
    if not train_vectors:
        raise ValueError("no training vectors")
    class_count = train_vectors[0].class_count
    n_configs = train_vectors[0].n_configs
    labels = labels_array(train_vectors)
    if spec.kind != "trivial" and len(np.unique(labels)) < 2:
        raise ValueError("training vectors contain a single class; need at least 2")
    if spec.kind == "trivial":
        return TrivialModel(mode=spec.trivial.mode, class_count=class_count, n_configs=n_configs)
    features = feature_matrix(train_vectors, collapse=collapse, normalize=normalize)
    if spec.kind == "svm":
        mean = std = None
        if spec.svm.standardize:
            mean = features.mean(axis=0)
            std = np.maximum(features.std(axis=0), 1e-8)
            features = (features - mean) / std
        signs = np.where(labels[:, None] == np.arange(class_count)[None, :], 1.0, -1.0)
        w, b = sgd_hinge(
            features, signs, spec.svm.c_reg, spec.svm.epochs, spec.svm.learning_rate, spec.svm.seed
        )
        return SvmModel(
            weights=w,
            biases=b,
            class_count=class_count,
            feature_mean=mean,
            feature_std=std,
            collapse=collapse,
            normalize=normalize,
        )
    seeds = np.random.SeedSequence(spec.forest.seed).spawn(spec.forest.trees)
    trees = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        bootstrap = rng.integers(0, len(labels), len(labels))
        trees.append(_grow_tree(features[bootstrap], labels[bootstrap], class_count, spec.forest, rng))
    return ForestModel(
        trees=trees,
        class_count=class_count,
        feature_dim=features.shape[1],
        collapse=collapse,
        normalize=normalize,
    )


def predict(model: ShallowModel, vector: ClassPresenceVector) -> int:
    """Class index in [0, class_count); ties go to the lowest index."""
    return model.predict(vector)


def predict_all(model: ShallowModel, vectors: list[ClassPresenceVector]) -> np.ndarray:
    if isinstance(model, ForestModel):
        features = np.stack([model._prepare(v) for v in vectors])
        return np.argmax(model.votes(features), axis=1)
    return np.array([model.predict(v) for v in vectors], dtype=np.int64)


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray  # (class_count, class_count), rows = true class


def evaluate(model: ShallowModel, vectors: list[ClassPresenceVector]) -> EvalResult:
    """Accuracy plus confusion matrix (row = true class, column = prediction)."""
    if not vectors:
        raise ValueError("no vectors to evaluate")
    preds = predict_all(model, vectors)
    truth = labels_array(vectors)
    confusion = np.zeros((model.class_count, model.class_count), dtype=np.int64)
    np.add.at(confusion, (truth, preds), 1)
    return EvalResult(accuracy=float((preds == truth).mean()), confusion=confusion)
