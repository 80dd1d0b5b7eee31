"""From-scratch trainable models, local SGD, and federated averaging.

Models are softmax regression or a ReLU multilayer perceptron, stored as a
single flat float64 parameter vector. The flat layout is fixed: for each
layer in input-to-output order, the weight matrix W (shape fan_in x fan_out,
row-major) followed by the bias vector. Everything here is deterministic
given its seeds; the hand-written backpropagation is validated against
central finite differences by `grad_check`.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .datasets import LabeledDataset

CHECKPOINT_MAGIC = b"FLSM"
CHECKPOINT_VERSION = 1


class NumericalError(RuntimeError):
    """Training produced non-finite values (diverged learning rate, bad data)."""


@dataclass(frozen=True)
class Arch:
    """Network shape: `hidden` is () for plain softmax regression."""

    in_dim: int
    hidden: tuple[int, ...]
    n_classes: int

    def __post_init__(self) -> None:
        if self.in_dim < 1 or self.n_classes < 2 or any(h < 1 for h in self.hidden):
            raise ValueError(f"invalid architecture {self}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.in_dim, *self.hidden, self.n_classes)

    @property
    def param_count(self) -> int:
        d = self.dims
        return sum(d[i] * d[i + 1] + d[i + 1] for i in range(len(d) - 1))


def softmax_arch(in_dim: int, n_classes: int) -> Arch:
    return Arch(in_dim, (), n_classes)


def mlp_arch(in_dim: int, n_classes: int, hidden: tuple[int, ...] = (64, 64)) -> Arch:
    return Arch(in_dim, tuple(hidden), n_classes)


@dataclass(frozen=True)
class ModelParams:
    """Flat parameter vector plus the architecture that gives it shape."""

    values: np.ndarray
    arch: Arch

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float).copy()
        if values.ndim != 1 or len(values) != self.arch.param_count:
            raise ValueError(
                f"parameter vector has length {len(values)}, "
                f"architecture needs {self.arch.param_count}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("parameter vector contains non-finite values")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class LocalTrainConfig:
    epochs: int = 1
    batch_size: int = 10
    learning_rate: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")


def _unpack(flat: np.ndarray, arch: Arch) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views of the flat vector as per-layer (W, b) pairs; no copies."""
    layers = []
    offset = 0
    d = arch.dims
    for i in range(len(d) - 1):
        fan_in, fan_out = d[i], d[i + 1]
        w = flat[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = flat[offset : offset + fan_out]
        offset += fan_out
        layers.append((w, b))
    return layers


def init_params(arch: Arch, seed: int) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init, layer by layer."""
    rng = np.random.default_rng(seed)
    flat = np.empty(arch.param_count)
    for w, b in _unpack(flat, arch):
        bound = 1.0 / np.sqrt(w.shape[0])
        w[...] = rng.uniform(-bound, bound, size=w.shape)
        b[...] = rng.uniform(-bound, bound, size=b.shape)
    return ModelParams(flat, arch)


def _check_input(params: ModelParams, data: LabeledDataset) -> None:
    if data.d_in != params.arch.in_dim:
        raise ValueError(
            f"feature dimension {data.d_in} does not match model input {params.arch.in_dim}"
        )
    if data.n_classes > params.arch.n_classes:
        raise ValueError(
            f"dataset has {data.n_classes} classes, model only {params.arch.n_classes}"
        )


def _forward(layers: list[tuple[np.ndarray, np.ndarray]], x: np.ndarray) -> np.ndarray:
    a = x
    for w, b in layers[:-1]:
        a = np.maximum(a @ w + b, 0.0)
    w, b = layers[-1]
    return a @ w + b


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _mean_ce(logits: np.ndarray, labels: np.ndarray) -> float:
    return float(-_log_softmax(logits)[np.arange(len(labels)), labels].mean())


def local_loss(params: ModelParams, data: LabeledDataset) -> float:
    """Mean cross-entropy of the model on one client's partition."""
    _check_input(params, data)
    layers = _unpack(params.values, params.arch)
    return _mean_ce(_forward(layers, data.features), data.labels)


def global_loss(params: ModelParams, partitions: list[LabeledDataset]) -> float:
    """Sample-size-weighted average of per-client losses.

    Equals the loss on the pooled dataset, since each client contributes
    n_k / n of the total.
    """
    sizes = np.array([p.n for p in partitions], dtype=float)
    losses = np.array([local_loss(params, p) for p in partitions])
    return float(np.dot(sizes / sizes.sum(), losses))


def _loss_grad(
    layers: list[tuple[np.ndarray, np.ndarray]], x: np.ndarray, y: np.ndarray
) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Mean cross-entropy and its gradient for one batch via backprop."""
    acts = [x]
    pre = []
    a = x
    for w, b in layers[:-1]:
        z = a @ w + b
        pre.append(z)
        a = np.maximum(z, 0.0)
        acts.append(a)
    w, b = layers[-1]
    logits = a @ w + b

    log_p = _log_softmax(logits)
    loss = float(-log_p[np.arange(len(y)), y].mean())

    delta = np.exp(log_p)
    delta[np.arange(len(y)), y] -= 1.0
    delta /= len(y)

    grads: list[tuple[np.ndarray, np.ndarray]] = []
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        grads.append((acts[i].T @ delta, delta.sum(axis=0)))
        if i > 0:
            delta = (delta @ w.T) * (pre[i - 1] > 0.0)
    grads.reverse()
    return loss, grads


def local_train(params: ModelParams, data: LabeledDataset, cfg: LocalTrainConfig) -> ModelParams:
    """Mini-batch SGD on cross-entropy; shuffles per epoch with cfg.seed.

    Pure: returns new parameters, input untouched. The trailing partial batch
    of each epoch is used.
    """
    _check_input(params, data)
    rng = np.random.default_rng(cfg.seed)
    flat = params.values.copy()
    layers = _unpack(flat, params.arch)

    for _ in range(cfg.epochs):
        perm = rng.permutation(data.n)
        for start in range(0, data.n, cfg.batch_size):
            batch = perm[start : start + cfg.batch_size]
            _, grads = _loss_grad(layers, data.features[batch], data.labels[batch])
            for (w, b), (gw, gb) in zip(layers, grads):
                if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
                    raise NumericalError("non-finite gradient during local training")
                w -= cfg.learning_rate * gw
                b -= cfg.learning_rate * gb
    return ModelParams(flat, params.arch)


def fedavg(updates: list[tuple[ModelParams, int]], base: ModelParams) -> ModelParams:
    """Average client updates weighted by local sample counts.

    Weights are renormalized over the participating subset so they sum to 1.
    An empty update list returns `base` unchanged (a round with no uploads).
    """
    if not updates:
        return base
    for p, n_k in updates:
        if p.arch != base.arch:
            raise ValueError(f"architecture mismatch in aggregation: {p.arch} vs {base.arch}")
        if n_k < 1:
            raise ValueError(f"sample count must be >= 1, got {n_k}")
    total = float(sum(n_k for _, n_k in updates))
    out = np.zeros_like(base.values)
    for p, n_k in updates:
        out += (n_k / total) * p.values
    return ModelParams(out, base.arch)


def evaluate(params: ModelParams, test: LabeledDataset) -> tuple[float, float]:
    """Top-1 accuracy (argmax, lowest class index on ties) and mean cross-entropy."""
    _check_input(params, test)
    logits = _forward(_unpack(params.values, params.arch), test.features)
    pred = np.argmax(logits, axis=1)
    accuracy = float(np.mean(pred == test.labels))
    return accuracy, _mean_ce(logits, test.labels)


def _max_rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Componentwise relative error with a unit floor; 0 for empty vectors."""
    if len(a) == 0:
        return 0.0
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom))


def grad_check(params: ModelParams, data: LabeledDataset, step: float = 1e-5) -> float:
    """Max relative error of the analytic gradient vs central differences.

    Meant for tiny partitions (a handful of samples); cost is two full-batch
    loss evaluations per parameter.
    """
    _check_input(params, data)
    layers = _unpack(params.values, params.arch)
    _, grads = _loss_grad(layers, data.features, data.labels)
    analytic = np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in grads])

    flat = params.values.copy()
    numeric = np.empty_like(flat)
    for i in range(len(flat)):
        orig = flat[i]
        flat[i] = orig + step
        up = _mean_ce(_forward(_unpack(flat, params.arch), data.features), data.labels)
        flat[i] = orig - step
        down = _mean_ce(_forward(_unpack(flat, params.arch), data.features), data.labels)
        flat[i] = orig
        numeric[i] = (up - down) / (2.0 * step)
    return _max_rel_err(analytic, numeric)


def save_checkpoint(params: ModelParams, path: str) -> None:
    """Write a model checkpoint.

    Byte layout: magic b"FLSM", u32 LE version, u32 LE header length, a UTF-8
    JSON header {"in_dim", "hidden", "n_classes", "d"}, then d little-endian
    float64 parameter values.
    """
    header = json.dumps(
        {
            "in_dim": params.arch.in_dim,
            "hidden": list(params.arch.hidden),
            "n_classes": params.arch.n_classes,
            "d": len(params.values),
        },
        sort_keys=True,
    ).encode()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
        f.write(header)
        f.write(params.values.astype("<f8").tobytes())


def load_checkpoint(path: str) -> ModelParams:
    """Read a checkpoint written by `save_checkpoint`."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"checkpoint {path}: bad magic {raw[:4]!r}")
    version, header_len = struct.unpack("<II", raw[4:12])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"checkpoint {path}: unsupported version {version}")
    meta = json.loads(raw[12 : 12 + header_len].decode())
    arch = Arch(meta["in_dim"], tuple(meta["hidden"]), meta["n_classes"])
    values = np.frombuffer(raw[12 + header_len :], dtype="<f8")
    if len(values) != meta["d"] or meta["d"] != arch.param_count:
        raise ValueError(f"checkpoint {path}: parameter count mismatch")
    return ModelParams(values.astype(float), arch)
