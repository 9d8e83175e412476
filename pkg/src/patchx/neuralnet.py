"""From-scratch 1-D convolutional patch classifier.

Architecture: a stack of same-padded Conv1d+ReLU blocks, global average
pooling over time, and a dense layer producing class logits; softmax on top.
All math is float64 numpy, so serial runs are bit-reproducible and the
analytic gradients can be checked against central finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .patching import PatchInstance

LOG_CLAMP = 1e-12
EVAL_BATCH = 1024


class DimensionError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass
class NetworkSpec:
    input_channels: int
    input_length: int
    class_count: int
    conv_blocks: tuple[tuple[int, int, str], ...] = ((32, 3, "relu"), (64, 3, "relu"), (64, 3, "relu"))
    seed: int = 0

    def validate(self) -> None:
        if self.input_channels < 1 or self.input_length < 1:
            raise ValueError("input dimensions must be positive")
        if self.class_count < 2:
            raise ValueError(f"class_count must be >= 2, got {self.class_count}")
        for filters, kernel, activation in self.conv_blocks:
            if filters < 1:
                raise ValueError(f"filter count must be >= 1, got {filters}")
            if not (1 <= kernel <= self.input_length):
                raise ValueError(
                    f"kernel size {kernel} outside [1, {self.input_length}]"
                )
            if activation not in ("relu", "linear"):
                raise ValueError(f"unknown activation {activation!r}")


@dataclass
class TrainSpec:
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 1e-3
    optimizer: str = "adam"  # adam | sgd-momentum
    early_stopping_patience: int = 5
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("epochs, batch_size and learning_rate must be positive")
        if self.optimizer not in ("adam", "sgd-momentum"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not (0 <= self.early_stopping_patience < self.epochs):
            raise ValueError("early_stopping_patience must be in [0, epochs)")


class Conv1d:
    """Same-padded 1-D convolution; forward is one im2col GEMM."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int, rng: np.random.Generator):
        bound = 1.0 / math.sqrt(in_channels * kernel)
        self.w = rng.uniform(-bound, bound, size=(out_channels, in_channels, kernel))
        self.b = np.zeros(out_channels)
        self.kernel = kernel
        self.pad_left = (kernel - 1) // 2
        self.pad_right = kernel - 1 - self.pad_left

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """x: (batch, in_channels, length) -> (out, cols); cols is kept for backprop."""
        batch, _, length = x.shape
        xp = np.pad(x, ((0, 0), (0, 0), (self.pad_left, self.pad_right)))
        windows = np.lib.stride_tricks.sliding_window_view(xp, self.kernel, axis=2)
        cols = np.ascontiguousarray(windows.transpose(0, 2, 1, 3)).reshape(
            batch * length, -1
        )  # (batch*length, in_channels*kernel)
        out2d = cols @ self.w.reshape(self.w.shape[0], -1).T + self.b
        out = out2d.reshape(batch, length, -1).transpose(0, 2, 1)
        return out, cols

    def backward(
        self, dout: np.ndarray, cols: np.ndarray, in_shape: tuple[int, int, int]
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        batch, in_channels, length = in_shape
        g2d = dout.transpose(0, 2, 1).reshape(batch * length, -1)
        dw = (g2d.T @ cols).reshape(self.w.shape)
        db = g2d.sum(axis=0)
        dcols = (g2d @ self.w.reshape(self.w.shape[0], -1)).reshape(
            batch, length, in_channels, self.kernel
        )
        dxp = np.zeros((batch, in_channels, length + self.kernel - 1))
        for j in range(self.kernel):
            dxp[:, :, j : j + length] += dcols[:, :, :, j].transpose(0, 2, 1)
        dx = dxp[:, :, self.pad_left : self.pad_left + length]
        return dx, dw, db


class Dense:
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        bound = 1.0 / math.sqrt(in_features)
        self.w = rng.uniform(-bound, bound, size=(out_features, in_features))
        self.b = np.zeros(out_features)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x @ self.w.T + self.b

    def backward(self, dout: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return dout @ self.w, dout.T @ x, dout.sum(axis=0)


class PatchNet:
    """The patch classification network; build with build_network()."""

    def __init__(self, spec: NetworkSpec):
        spec.validate()
        self.spec = spec
        rng = np.random.default_rng(spec.seed)
        self.convs: list[Conv1d] = []
        channels = spec.input_channels
        self.activations: list[str] = []
        for filters, kernel, activation in spec.conv_blocks:
            self.convs.append(Conv1d(channels, filters, kernel, rng))
            self.activations.append(activation)
            channels = filters
        self.dense = Dense(channels, spec.class_count, rng)

    # -- parameter access -------------------------------------------------

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        params = []
        for i, conv in enumerate(self.convs):
            params.append((f"conv{i}.w", conv.w))
            params.append((f"conv{i}.b", conv.b))
        params.append(("dense.w", self.dense.w))
        params.append(("dense.b", self.dense.b))
        return params

    def parameter_count(self) -> int:
        return sum(p.size for _, p in self.parameters())

    def get_state(self) -> dict[str, np.ndarray]:
        return {name: p.copy() for name, p in self.parameters()}

    def set_state(self, state: dict[str, np.ndarray]) -> None:
        for name, p in self.parameters():
            src = state[name]
            if src.shape != p.shape:
                raise DimensionError(f"parameter {name}: shape {src.shape} != {p.shape}")
            p[...] = src

    # -- forward / backward ------------------------------------------------

    def _check_input(self, x: np.ndarray) -> None:
        if x.ndim != 3 or x.shape[1] != self.spec.input_channels or x.shape[2] != self.spec.input_length:
            raise DimensionError(
                f"expected input (batch, {self.spec.input_channels}, "
                f"{self.spec.input_length}), got {x.shape}"
            )

    def _forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, list]:
        self._check_input(x)
        caches = []
        h = x
        for conv, activation in zip(self.convs, self.activations):
            pre, cols = conv.forward(h)
            post = np.maximum(pre, 0.0) if activation == "relu" else pre
            caches.append((h.shape, cols, pre))
            h = post
        pooled = h.mean(axis=2)
        logits = self.dense.forward(pooled)
        caches.append((h.shape, pooled))
        return logits, caches

    def logits_batch(self, x: np.ndarray) -> np.ndarray:
        logits, _ = self._forward_cached(x)
        return logits

    def forward_batch(self, x: np.ndarray) -> np.ndarray:
        """Softmax class probabilities, shape (batch, class_count)."""
        return softmax(self.logits_batch(x))

    def backward_from_logits(self, dlogits: np.ndarray, caches: list) -> dict[str, np.ndarray]:
        grads: dict[str, np.ndarray] = {}
        conv_out_shape, pooled = caches[-1]
        dpooled, dw, db = self.dense.backward(dlogits, pooled)
        grads["dense.w"] = dw
        grads["dense.b"] = db
        dh = np.broadcast_to(
            dpooled[:, :, None] / conv_out_shape[2], conv_out_shape
        ).copy() if self.convs else None
        for i in range(len(self.convs) - 1, -1, -1):
            in_shape, cols, pre = caches[i]
            if self.activations[i] == "relu":
                dh = dh * (pre > 0)
            dh, dw, db = self.convs[i].backward(dh, cols, in_shape)
            grads[f"conv{i}.w"] = dw
            grads[f"conv{i}.b"] = db
        return grads


def build_network(spec: NetworkSpec) -> PatchNet:
    return PatchNet(spec)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


# -- spec operations -------------------------------------------------------


def as_patch_arrays(
    patches: "list[PatchInstance] | tuple[np.ndarray, np.ndarray]",
) -> tuple[np.ndarray, np.ndarray]:
    """Accept either a list of PatchInstance or a prepared (values, labels) pair."""
    if isinstance(patches, tuple):
        return patches
    if not patches:
        raise ValueError("patch list is empty")
    x = np.stack([p.values for p in patches])
    y = np.array([p.label for p in patches], dtype=np.int64)
    return x, y


def forward(net: PatchNet, patch: "PatchInstance | np.ndarray") -> np.ndarray:
    """Softmax prediction for a single patch, shape (class_count,)."""
    values = patch.values if isinstance(patch, PatchInstance) else patch
    return net.forward_batch(values[None])[0]


def patch_cross_entropy(prediction: np.ndarray, label: int) -> float:
    """-log of the predicted probability of the label, clamped at 1e-12."""
    prediction = np.asarray(prediction)
    if not (0 <= label < prediction.shape[-1]):
        raise IndexError(f"label {label} outside [0, {prediction.shape[-1]})")
    return float(-np.log(max(float(prediction[label]), LOG_CLAMP)))


def batch_cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    picked = np.maximum(probs[np.arange(len(labels)), labels], LOG_CLAMP)
    return float(-np.log(picked).mean())


def dataset_loss(net: PatchNet, patches) -> float:
    """Mean patch cross-entropy over all instances (uniform weighting).

    The per-patch losses are reduced with math.fsum, so the result does not
    depend on the ordering of the patch list.
    """
    x, y = as_patch_arrays(patches)
    if len(y) == 0:
        raise ValueError("dataset_loss requires at least one patch")
    losses: list[float] = []
    for lo in range(0, len(y), EVAL_BATCH):
        probs = net.forward_batch(x[lo : lo + EVAL_BATCH])
        picked = np.maximum(probs[np.arange(len(probs)), y[lo : lo + EVAL_BATCH]], LOG_CLAMP)
        losses.extend((-np.log(picked)).tolist())
    return math.fsum(losses) / len(losses)


def backward(net: PatchNet, batch) -> dict[str, np.ndarray]:
    """Gradient of the mean batch cross-entropy w.r.t. every parameter."""
    x, y = as_patch_arrays(batch)
    if len(y) == 0:
        raise ValueError("backward requires a non-empty batch")
    logits, caches = net._forward_cached(x)
    probs = softmax(logits)
    dlogits = probs.copy()
    dlogits[np.arange(len(y)), y] -= 1.0
    dlogits /= len(y)
    return net.backward_from_logits(dlogits, caches)


def predictions(net: PatchNet, x: np.ndarray) -> np.ndarray:
    """Argmax class per row, evaluated in batches."""
    out = np.empty(len(x), dtype=np.int64)
    for lo in range(0, len(x), EVAL_BATCH):
        out[lo : lo + EVAL_BATCH] = np.argmax(net.forward_batch(x[lo : lo + EVAL_BATCH]), axis=1)
    return out


def accuracy(net: PatchNet, patches) -> float:
    x, y = as_patch_arrays(patches)
    return float((predictions(net, x) == y).mean())


# -- optimizers ------------------------------------------------------------


class Adam:
    def __init__(self, params: list[tuple[str, np.ndarray]], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p) for name, p in params}
        self.v = {name: np.zeros_like(p) for name, p in params}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for name, p in self.params:
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            m_hat = m / (1 - self.beta1 ** self.t)
            v_hat = v / (1 - self.beta2 ** self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class SgdMomentum:
    def __init__(self, params: list[tuple[str, np.ndarray]], lr: float, momentum: float = 0.9):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.velocity = {name: np.zeros_like(p) for name, p in params}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for name, p in self.params:
            v = self.velocity[name]
            v *= self.momentum
            v -= self.lr * grads[name]
            p += v


@dataclass
class TrainLog:
    train_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val_accuracy: float = -1.0
    epochs_run: int = 0


def train(net: PatchNet, train_patches, val_patches, spec: TrainSpec) -> TrainLog:
    """Mini-batch training of the mean patch cross-entropy; restores the
    parameters of the epoch with best validation accuracy.

    Serial and deterministic for a fixed spec.seed: the only randomness is the
    per-epoch shuffle drawn from one seeded generator.
    """
    spec.validate()
    x_train, y_train = as_patch_arrays(train_patches)
    x_val, y_val = as_patch_arrays(val_patches)
    if len(y_val) == 0:
        raise ValueError("validation patches must be non-empty")
    rng = np.random.default_rng(spec.seed)
    params = net.parameters()
    if spec.optimizer == "adam":
        optimizer = Adam(params, spec.learning_rate)
    else:
        optimizer = SgdMomentum(params, spec.learning_rate)
    log = TrainLog()
    best_state = net.get_state()
    n = len(y_train)
    for epoch in range(spec.epochs):
        order = rng.permutation(n)
        batch_losses: list[float] = []
        for lo in range(0, n, spec.batch_size):
            idx = order[lo : lo + spec.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            logits, caches = net._forward_cached(xb)
            probs = softmax(logits)
            batch_losses.append(batch_cross_entropy(probs, yb))
            dlogits = probs
            dlogits[np.arange(len(yb)), yb] -= 1.0
            dlogits /= len(yb)
            optimizer.step(net.backward_from_logits(dlogits, caches))
        epoch_loss = math.fsum(batch_losses) / len(batch_losses)
        if not math.isfinite(epoch_loss):
            raise TrainingError(f"training loss diverged at epoch {epoch}")
        val_acc = accuracy(net, (x_val, y_val))
        log.train_loss.append(epoch_loss)
        log.val_accuracy.append(val_acc)
        log.epochs_run = epoch + 1
        if val_acc > log.best_val_accuracy:
            log.best_val_accuracy = val_acc
            log.best_epoch = epoch
            best_state = net.get_state()
        elif spec.early_stopping_patience and epoch - log.best_epoch >= spec.early_stopping_patience:
            break
    net.set_state(best_state)
    return log


# -- gradient verification ---------------------------------------------------


@dataclass
class GradientCheckEntry:
    name: str
    max_rel_error: float
    worst_index: int
    analytic: float
    numeric: float


@dataclass
class GradientCheckReport:
    passed: bool
    tolerance: float
    entries: list[GradientCheckEntry]

    def worst(self) -> GradientCheckEntry:
        return max(self.entries, key=lambda e: e.max_rel_error)

    def summary(self) -> str:
        lines = [f"gradient check ({'pass' if self.passed else 'FAIL'}, tol={self.tolerance:g})"]
        for e in sorted(self.entries, key=lambda e: -e.max_rel_error):
            lines.append(
                f"  {e.name:<10} max_rel={e.max_rel_error:.3e} "
                f"(analytic={e.analytic: .6e}, numeric={e.numeric: .6e} at flat index {e.worst_index})"
            )
        return "\n".join(lines)


def relu_preactivation_margin(net: PatchNet, x: np.ndarray) -> float:
    """Smallest |pre-activation| feeding a ReLU anywhere in the batch.

    Finite differences are only meaningful at differentiable points; a margin
    well above the finite-difference step keeps the +-h sweep on one side of
    every ReLU kink. Returns inf for purely linear networks.
    """
    margin = np.inf
    h = x
    for conv, activation in zip(net.convs, net.activations):
        pre, _ = conv.forward(h)
        if activation == "relu":
            margin = min(margin, float(np.abs(pre).min()))
            h = np.maximum(pre, 0.0)
        else:
            h = pre
    return margin


def nudge_biases_off_kinks(net: PatchNet, x: np.ndarray, margin: float = 0.02) -> None:
    """Shift conv biases so every ReLU pre-activation of this batch is at least
    `margin` away from zero.

    Works front to back: a bias shift only influences later layers, so one pass
    suffices. The shifted net is still an ordinary random network; the point is
    to make the loss differentiable in a +-h neighborhood for every parameter.
    """
    h = x
    for conv, activation in zip(net.convs, net.activations):
        if activation == "relu":
            pre, _ = conv.forward(h)
            for f in range(pre.shape[1]):
                vals = pre[:, f, :].ravel()
                if np.abs(vals).min() >= margin:
                    continue
                for k in range(1, 801):
                    delta = margin * ((k + 1) // 2) * (1 if k % 2 else -1)
                    if np.abs(vals + delta).min() >= margin:
                        conv.b[f] += delta
                        break
                else:
                    raise RuntimeError("could not move pre-activations off the ReLU kink")
            pre, _ = conv.forward(h)
            h = np.maximum(pre, 0.0)
        else:
            h, _ = conv.forward(h)


def gradcheck_case(
    spec: NetworkSpec,
    batch_size: int = 4,
    seed: int = 0,
    margin: float = 0.02,
) -> tuple[PatchNet, np.ndarray, np.ndarray]:
    """Deterministic (net, inputs, labels) fixture whose ReLU pre-activations
    all sit at least `margin` away from the kink, so central differences are
    valid everywhere in the finite-difference sweep."""
    net = PatchNet(
        NetworkSpec(
            input_channels=spec.input_channels,
            input_length=spec.input_length,
            class_count=spec.class_count,
            conv_blocks=spec.conv_blocks,
            seed=seed * 1009 + 7,
        )
    )
    rng = np.random.default_rng(seed * 1009 + 8)
    x = rng.normal(size=(batch_size, spec.input_channels, spec.input_length))
    y = rng.integers(0, spec.class_count, batch_size)
    nudge_biases_off_kinks(net, x, margin)
    return net, x, y


def gradient_check(
    net: PatchNet,
    batch,
    tolerance: float = 1e-3,
    step_scale: float = 1e-3,
) -> GradientCheckReport:
    """Compare backward() against central finite differences of the batch loss.

    The step for each scalar parameter is step_scale * max(1, |value|).
    Meaningful only when the batch keeps ReLU pre-activations away from zero;
    see gradcheck_case / relu_preactivation_margin.
    """
    x, y = as_patch_arrays(batch)
    analytic = backward(net, (x, y))

    def loss() -> float:
        probs = net.forward_batch(x)
        return batch_cross_entropy(probs, y)

    entries = []
    for name, p in net.parameters():
        grad = analytic[name]
        flat = p.reshape(-1)
        worst = GradientCheckEntry(name, 0.0, 0, 0.0, 0.0)
        for i in range(flat.size):
            original = flat[i]
            h = step_scale * max(1.0, abs(original))
            flat[i] = original + h
            plus = loss()
            flat[i] = original - h
            minus = loss()
            flat[i] = original
            numeric = (plus - minus) / (2 * h)
            a = grad.reshape(-1)[i]
            denom = max(abs(a), abs(numeric), 1e-8)
            rel = abs(a - numeric) / denom
            if rel > worst.max_rel_error:
                worst = GradientCheckEntry(name, rel, i, float(a), float(numeric))
        entries.append(worst)
    report = GradientCheckReport(
        passed=all(e.max_rel_error < tolerance for e in entries),
        tolerance=tolerance,
        entries=entries,
    )
    return report
