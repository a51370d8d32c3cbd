"""Minimal from-scratch neural network engine on numpy arrays.

Layers keep NHWC layout (batch, height, width, channels) and implement
exact backward passes; training uses Adam with early stopping on
validation loss and best-parameter restore. Everything runs in double
precision by default as a single deterministic sequence; a dtype knob on
the builders allows single precision at loosened test tolerances.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 20
    max_epochs: int = 200
    patience: int = 50
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self) -> None:
        if min(self.learning_rate, self.batch_size, self.max_epochs, self.patience) <= 0:
            raise ValueError("learning_rate, batch_size, max_epochs and patience must be positive")
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1 and self.epsilon > 0):
            raise ValueError("invalid Adam constants")


@dataclass
class History:
    train_loss: list[float] = field(default_factory=list)
    train_accuracy: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    best_epoch: int = 0  # 1-based

    def __len__(self) -> int:
        return len(self.train_loss)

    def to_csv(self, path) -> None:
        lines = ["epoch,train_loss,train_acc,val_loss,val_acc"]
        for i in range(len(self)):
            lines.append(
                f"{i + 1},{self.train_loss[i]!r},{self.train_accuracy[i]!r},"
                f"{self.val_loss[i]!r},{self.val_accuracy[i]!r}"
            )
        Path(path).write_text("\n".join(lines) + "\n")


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Conv3x3:
    """3x3 stride-1 cross-correlation with one pixel of zero padding (same size)."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator, dtype=np.float64):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernels = glorot_uniform(
            rng, (3, 3, in_channels, out_channels), 9 * in_channels, 9 * out_channels, dtype
        )
        self.bias = np.zeros(out_channels, dtype=dtype)
        self.d_kernels = np.zeros_like(self.kernels)
        self.d_bias = np.zeros_like(self.bias)
        self._cache = None

    def forward(self, x, training=False, rng=None):
        if x.ndim != 4 or x.shape[3] != self.in_channels:
            raise ValueError(f"expected (b,h,w,{self.in_channels}) input, got {x.shape}")
        b, h, w, _ = x.shape
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        out = np.tile(self.bias, (b * h * w, 1))
        for di in range(3):
            for dj in range(3):
                patch = xp[:, di : di + h, dj : dj + w, :].reshape(-1, self.in_channels)
                out += patch @ self.kernels[di, dj]
        self._cache = (xp, (b, h, w))
        return out.reshape(b, h, w, self.out_channels)

    def backward(self, grad):
        xp, (b, h, w) = self._cache
        gm = grad.reshape(-1, self.out_channels)
        self.d_bias = gm.sum(axis=0)
        dxp = np.zeros_like(xp)
        for di in range(3):
            for dj in range(3):
                patch = xp[:, di : di + h, dj : dj + w, :].reshape(-1, self.in_channels)
                self.d_kernels[di, dj] = patch.T @ gm
                dxp[:, di : di + h, dj : dj + w, :] += (gm @ self.kernels[di, dj].T).reshape(
                    b, h, w, self.in_channels
                )
        return dxp[:, 1 : 1 + h, 1 : 1 + w, :]

    def params(self):
        return [("kernels", self.kernels), ("bias", self.bias)]

    def grads(self):
        return [self.d_kernels, self.d_bias]

    def spec(self):
        return {"type": "conv3x3", "in_channels": self.in_channels, "out_channels": self.out_channels}


class MaxPool2x2:
    """2x2 max pooling; the gradient flows to the first maximal element of a block."""

    def forward(self, x, training=False, rng=None):
        b, h, w, c = x.shape
        if h % 2 or w % 2:
            raise ValueError(f"spatial dims must be even, got {x.shape}")
        blocks = x.reshape(b, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(
            b, h // 2, w // 2, c, 4
        )
        self._argmax = blocks.argmax(axis=-1)  # first index on ties
        self._in_shape = x.shape
        return np.take_along_axis(blocks, self._argmax[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        b, h, w, c = self._in_shape
        scatter = np.zeros((b, h // 2, w // 2, c, 4), dtype=grad.dtype)
        np.put_along_axis(scatter, self._argmax[..., None], grad[..., None], axis=-1)
        return scatter.reshape(b, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(b, h, w, c)

    def params(self):
        return []

    def grads(self):
        return []

    def spec(self):
        return {"type": "maxpool2x2"}


class Flatten:
    def forward(self, x, training=False, rng=None):
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._in_shape)

    def params(self):
        return []

    def grads(self):
        return []

    def spec(self):
        return {"type": "flatten"}


class Dense:
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, dtype=np.float64):
        self.in_features = in_features
        self.out_features = out_features
        self.weights = glorot_uniform(rng, (in_features, out_features), in_features, out_features, dtype)
        self.bias = np.zeros(out_features, dtype=dtype)
        self.d_weights = np.zeros_like(self.weights)
        self.d_bias = np.zeros_like(self.bias)

    def forward(self, x, training=False, rng=None):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ValueError(f"expected (b,{self.in_features}) input, got {x.shape}")
        self._x = x
        return x @ self.weights + self.bias

    def backward(self, grad):
        self.d_weights = self._x.T @ grad
        self.d_bias = grad.sum(axis=0)
        return grad @ self.weights.T

    def params(self):
        return [("weights", self.weights), ("bias", self.bias)]

    def grads(self):
        return [self.d_weights, self.d_bias]

    def spec(self):
        return {"type": "dense", "in_features": self.in_features, "out_features": self.out_features}


class ReLU:
    def forward(self, x, training=False, rng=None):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad):
        return grad * self._mask

    def params(self):
        return []

    def grads(self):
        return []

    def spec(self):
        return {"type": "relu"}


class Dropout:
    """Inverted dropout: survivors are scaled by 1/(1-rate); identity in eval mode."""

    def __init__(self, rate: float = 0.5):
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.rate = rate
        self._scale = None

    def forward(self, x, training=False, rng=None):
        if not training or self.rate == 0.0:
            self._scale = None
            return x
        if rng is None:
            raise ValueError("training-mode dropout needs an rng")
        keep = rng.random(x.shape) >= self.rate
        self._scale = keep / (1.0 - self.rate)
        return x * self._scale

    def backward(self, grad):
        if self._scale is None:
            return grad
        return grad * self._scale

    def params(self):
        return []

    def grads(self):
        return []

    def spec(self):
        return {"type": "dropout", "rate": self.rate}


class Softmax:
    def forward(self, x, training=False, rng=None):
        shifted = x - x.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        self._p = e / e.sum(axis=1, keepdims=True)
        return self._p

    def backward(self, grad):
        p = self._p
        return p * (grad - (grad * p).sum(axis=1, keepdims=True))

    def params(self):
        return []

    def grads(self):
        return []

    def spec(self):
        return {"type": "softmax"}


_LAYER_TYPES = {
    "conv3x3": Conv3x3,
    "maxpool2x2": MaxPool2x2,
    "flatten": Flatten,
    "dense": Dense,
    "relu": ReLU,
    "dropout": Dropout,
    "softmax": Softmax,
}


def softmax_crossentropy(logits: np.ndarray, onehot: np.ndarray):
    """Mean categorical cross entropy over the batch.

    Returns (loss, probabilities, gradient w.r.t. logits); the gradient is
    (p - y) / batch so that backpropagating it yields the gradient of the
    mean loss.
    """
    if logits.shape != onehot.shape:
        raise ValueError("logits and targets must have the same shape")
    rows = onehot.sum(axis=1)
    if not (np.allclose(rows, 1.0) and np.all((onehot == 0) | (onehot == 1))):
        raise ValueError("targets must be one-hot")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_norm
    loss = float(-(onehot * log_p).sum(axis=1).mean())
    probs = np.exp(log_p)
    grad = (probs - onehot) / logits.shape[0]
    return loss, probs, grad


def adam_step(param, grad, m, v, t, *, learning_rate, beta1=0.9, beta2=0.999, epsilon=1e-7):
    """One Adam update, pure-functional: returns (param', m', v')."""
    if t < 1:
        raise ValueError("t must be >= 1")
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    return param - learning_rate * m_hat / (np.sqrt(v_hat) + epsilon), m, v


class Adam:
    """In-place Adam over a parameter list, mirroring :func:`adam_step`."""

    def __init__(self, params: list[np.ndarray], config: TrainConfig):
        self.config = config
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        cfg = self.config
        self.t += 1
        b1t = 1.0 - cfg.beta1**self.t
        b2t = 1.0 - cfg.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            p -= cfg.learning_rate * (m / b1t) / (np.sqrt(v / b2t) + cfg.epsilon)


class Model:
    """Optional image and feature branches merged by concatenation into a head.

    ``forward`` returns class probabilities; training uses
    ``forward_logits`` plus the fused softmax cross entropy for stability.
    A missing branch means the corresponding input is ignored entirely.
    """

    def __init__(self, image_layers, feature_layers, head_layers, dtype=np.float64):
        if image_layers is None and feature_layers is None:
            raise ValueError("model needs at least one input branch")
        self.image_layers = image_layers
        self.feature_layers = feature_layers
        self.head_layers = head_layers
        self.dtype = dtype
        self._image_width = None

    def _run(self, layers, x, training, rng):
        for layer in layers:
            x = layer.forward(x, training=training, rng=rng)
        return x

    def forward_logits(self, images, features, training=False, rng=None):
        parts = []
        if self.image_layers is not None:
            if images is None:
                raise ValueError("model has an image branch but no images were given")
            parts.append(self._run(self.image_layers, np.asarray(images, self.dtype), training, rng))
            self._image_width = parts[-1].shape[1]
        if self.feature_layers is not None:
            if features is None:
                raise ValueError("model has a feature branch but no features were given")
            parts.append(self._run(self.feature_layers, np.asarray(features, self.dtype), training, rng))
        merged = parts[0] if len(parts) == 1 else np.concatenate(parts, axis=1)
        return self._run(self.head_layers, merged, training, rng)

    def forward(self, images, features, training=False, rng=None):
        logits = self.forward_logits(images, features, training=training, rng=rng)
        return Softmax().forward(logits)

    def backward(self, dlogits):
        grad = dlogits
        for layer in reversed(self.head_layers):
            grad = layer.backward(grad)
        if self.image_layers is not None and self.feature_layers is not None:
            g_img, g_feat = grad[:, : self._image_width], grad[:, self._image_width :]
        elif self.image_layers is not None:
            g_img, g_feat = grad, None
        else:
            g_img, g_feat = None, grad
        if self.image_layers is not None:
            g = g_img
            for layer in reversed(self.image_layers):
                g = layer.backward(g)
        if self.feature_layers is not None:
            g = g_feat
            for layer in reversed(self.feature_layers):
                g = layer.backward(g)

    def _all_layers(self):
        for group in (self.image_layers, self.feature_layers, self.head_layers):
            if group is not None:
                yield from group

    def parameters(self) -> list[np.ndarray]:
        return [array for layer in self._all_layers() for _, array in layer.params()]

    def gradients(self) -> list[np.ndarray]:
        return [g for layer in self._all_layers() for g in layer.grads()]

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def snapshot(self) -> list[np.ndarray]:
        return [p.copy() for p in self.parameters()]

    def restore(self, snapshot: list[np.ndarray]) -> None:
        for p, s in zip(self.parameters(), snapshot):
            p[...] = s

    def manifest_layers(self) -> dict:
        def describe(group):
            return None if group is None else [layer.spec() for layer in group]

        return {
            "image_branch": describe(self.image_layers),
            "feature_branch": describe(self.feature_layers),
            "head": describe(self.head_layers),
        }


def _build_group(specs, rng, dtype):
    if specs is None:
        return None
    layers = []
    for s in specs:
        kind = s["type"]
        if kind == "conv3x3":
            layers.append(Conv3x3(s["in_channels"], s["out_channels"], rng, dtype))
        elif kind == "dense":
            layers.append(Dense(s["in_features"], s["out_features"], rng, dtype))
        elif kind == "dropout":
            layers.append(Dropout(s["rate"]))
        else:
            layers.append(_LAYER_TYPES[kind]())
    return layers


def model_from_manifest_layers(layer_groups: dict, dtype=np.float64) -> Model:
    rng = np.random.default_rng(0)  # placeholder values, overwritten on load
    return Model(
        _build_group(layer_groups["image_branch"], rng, dtype),
        _build_group(layer_groups["feature_branch"], rng, dtype),
        _build_group(layer_groups["head"], rng, dtype),
        dtype=dtype,
    )


def save_model(model: Model, out_dir, seed: int | None = None, config: dict | None = None) -> None:
    """Write ``model.json`` (manifest) and ``model.bin`` (parameters).

    Parameters are concatenated row-major as little-endian 64-bit floats in
    manifest order; the manifest records byte offsets per tensor.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    offset = 0
    tensors = []
    blobs = []
    for layer_idx, layer in enumerate(model._all_layers()):
        for name, array in layer.params():
            raw = np.ascontiguousarray(array, dtype="<f8").tobytes()
            tensors.append(
                {
                    "layer_index": layer_idx,
                    "name": name,
                    "shape": list(array.shape),
                    "byte_offset": offset,
                    "byte_length": len(raw),
                }
            )
            blobs.append(raw)
            offset += len(raw)
    manifest = {
        "format": "vibediag-model-v1",
        "layers": model.manifest_layers(),
        "tensors": tensors,
        "total_bytes": offset,
        "seed": seed,
        "config": config,
    }
    (out_dir / "model.json").write_text(json.dumps(manifest, indent=2) + "\n")
    (out_dir / "model.bin").write_bytes(b"".join(blobs))


def load_model(in_dir) -> tuple[Model, dict]:
    in_dir = Path(in_dir)
    manifest = json.loads((in_dir / "model.json").read_text())
    blob = (in_dir / "model.bin").read_bytes()
    if len(blob) != manifest["total_bytes"]:
        raise ValueError("model.bin length does not match the manifest")
    model = model_from_manifest_layers(manifest["layers"])
    arrays = []
    for t in manifest["tensors"]:
        flat = np.frombuffer(blob, dtype="<f8", count=t["byte_length"] // 8, offset=t["byte_offset"])
        arrays.append(flat.reshape(t["shape"]).astype(np.float64))
    model.restore(arrays)
    return model, manifest


def _batched_eval(model: Model, images, features, onehot, chunk: int = 256):
    n = onehot.shape[0]
    total_loss = 0.0
    correct = 0
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        logits = model.forward_logits(
            None if images is None else images[lo:hi],
            None if features is None else features[lo:hi],
            training=False,
        )
        loss, probs, _ = softmax_crossentropy(logits, onehot[lo:hi])
        total_loss += loss * (hi - lo)
        correct += int((probs.argmax(axis=1) == onehot[lo:hi].argmax(axis=1)).sum())
    return total_loss / n, correct / n


def train(model: Model, train_data, val_data, config: TrainConfig) -> tuple[Model, History]:
    """Train with Adam, early stopping on validation loss, best-model restore.

    ``train_data`` and ``val_data`` are (images, features, onehot) triples;
    an input not consumed by the model may be None. The last partial
    minibatch is kept. Raises RuntimeError on non-finite loss.
    """
    images, features, onehot = train_data
    n = onehot.shape[0]
    if n == 0 or val_data[2].shape[0] == 0:
        raise ValueError("training and validation splits must be non-empty")

    rng = np.random.default_rng(config.seed)
    optimizer = Adam(model.parameters(), config)
    history = History()
    best_loss = np.inf
    best_params = model.snapshot()
    epochs_since_best = 0

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        epoch_loss = 0.0
        epoch_correct = 0
        for lo in range(0, n, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            logits = model.forward_logits(
                None if images is None else images[idx],
                None if features is None else features[idx],
                training=True,
                rng=rng,
            )
            loss, probs, dlogits = softmax_crossentropy(logits, onehot[idx])
            if not np.isfinite(loss):
                raise RuntimeError(f"training diverged: non-finite loss at epoch {epoch}")
            model.backward(dlogits)
            optimizer.step(model.parameters(), model.gradients())
            epoch_loss += loss * idx.size
            epoch_correct += int((probs.argmax(axis=1) == onehot[idx].argmax(axis=1)).sum())

        val_loss, val_acc = _batched_eval(model, *val_data)
        if not np.isfinite(val_loss):
            raise RuntimeError(f"training diverged: non-finite validation loss at epoch {epoch}")
        history.train_loss.append(epoch_loss / n)
        history.train_accuracy.append(epoch_correct / n)
        history.val_loss.append(val_loss)
        history.val_accuracy.append(val_acc)

        if val_loss < best_loss:
            best_loss = val_loss
            best_params = model.snapshot()
            history.best_epoch = epoch
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= config.patience:
                break

    model.restore(best_params)
    return model, history
