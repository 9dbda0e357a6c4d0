"""Minimal fully-connected regression network with quadratic loss.

Forward pass, exact backpropagation, and minibatch Adam are implemented
directly on numpy arrays.  One output node with a sigmoid keeps predictions
in (0, 1), as befits the conditional probability being regressed.  Hidden
layers use ReLU or PReLU (one learnable slope per layer) and, optionally, a
normalization layer after each activation with learnable scale/shift and
running statistics for inference mode.

Feature scaling is owned by the model: callers pass features in natural
units and the model divides by its ``feature_scale`` vector on entry.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MlpSpec",
    "MlpModel",
    "TrainConfig",
    "AdamState",
    "TrainingDiverged",
    "param_count",
    "init_model",
    "forward",
    "loss_and_grad",
    "adam_step",
    "train",
    "save_model",
    "load_model",
]

_BN_EPS = 1e-5
_BN_MOMENTUM = 0.1
_ACTIVATIONS = ("relu", "prelu")


class TrainingDiverged(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths (input, hidden..., 1) plus activation and normalization flags."""

    layer_sizes: tuple[int, ...]
    activation: str = "relu"
    batch_norm: bool = False

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 3:
            raise ValueError("need at least one hidden layer")
        if sizes[0] < 1 or any(s < 1 for s in sizes):
            raise ValueError(f"layer sizes must be positive, got {sizes}")
        if sizes[-1] != 1:
            raise ValueError("output layer must have size 1")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")

    @property
    def n_hidden(self) -> int:
        return len(self.layer_sizes) - 2


@dataclass
class MlpModel:
    spec: MlpSpec
    feature_scale: np.ndarray
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    slopes: list[np.ndarray]        # per hidden layer, shape (); empty unless prelu
    bn_scale: list[np.ndarray]      # per hidden layer, (width,); empty unless batch_norm
    bn_shift: list[np.ndarray]
    bn_mean: list[np.ndarray]       # running statistics, not trainable
    bn_var: list[np.ndarray]

    def trainable(self) -> list[np.ndarray]:
        """Trainable arrays in a fixed canonical order."""
        return [*self.weights, *self.biases, *self.slopes, *self.bn_scale, *self.bn_shift]


def param_count(spec: MlpSpec) -> int:
    """Number of trainable parameters: (fan_in + 1) * fan_out per layer, plus
    one slope per hidden layer for PReLU and scale+shift per node for
    normalization."""
    sizes = spec.layer_sizes
    count = sum((sizes[i] + 1) * sizes[i + 1] for i in range(len(sizes) - 1))
    if spec.activation == "prelu":
        count += spec.n_hidden
    if spec.batch_norm:
        count += 2 * sum(sizes[1:-1])
    return count


def init_model(
    spec: MlpSpec,
    feature_scale: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> MlpModel:
    """Fan-in-scaled uniform weight init; PReLU slopes start at 0.25;
    normalization starts as the identity with zero-mean/unit-variance running
    statistics."""
    if rng is None:
        rng = np.random.default_rng(0)
    sizes = spec.layer_sizes
    if feature_scale is None:
        feature_scale = np.ones(sizes[0])
    feature_scale = np.asarray(feature_scale, dtype=float)
    if feature_scale.shape != (sizes[0],) or np.any(feature_scale <= 0):
        raise ValueError("feature_scale must be positive with one entry per input")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        k = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-k, k, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-k, k, size=fan_out))
    hidden = sizes[1:-1]
    slopes = [np.array(0.25)] * 0
    if spec.activation == "prelu":
        slopes = [np.array(0.25) for _ in hidden]
    bn_scale = bn_shift = bn_mean = bn_var = []
    if spec.batch_norm:
        bn_scale = [np.ones(w) for w in hidden]
        bn_shift = [np.zeros(w) for w in hidden]
        bn_mean = [np.zeros(w) for w in hidden]
        bn_var = [np.ones(w) for w in hidden]
    return MlpModel(
        spec, feature_scale, weights, biases, list(slopes),
        list(bn_scale), list(bn_shift), list(bn_mean), list(bn_var),
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward_full(
    model: MlpModel, x: np.ndarray, training: bool, update_running: bool
):
    spec = model.spec
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != spec.layer_sizes[0]:
        raise ValueError(
            f"expected features of shape (batch, {spec.layer_sizes[0]}), got {x.shape}"
        )
    if training and spec.batch_norm and x.shape[0] < 2:
        raise ValueError("batch normalization needs batch size >= 2 in training mode")
    h = x / model.feature_scale
    caches = []
    n_hidden = spec.n_hidden
    for l in range(n_hidden):
        z = h @ model.weights[l] + model.biases[l]
        if spec.activation == "prelu":
            k = model.slopes[l]
            a = np.where(z > 0, z, k * z)
        else:
            a = np.maximum(z, 0.0)
        if spec.batch_norm:
            if training:
                mean = a.mean(axis=0)
                centered = a - mean
                var = np.einsum("ij,ij->j", centered, centered) / a.shape[0]
                if update_running:
                    model.bn_mean[l] *= 1.0 - _BN_MOMENTUM
                    model.bn_mean[l] += _BN_MOMENTUM * mean
                    model.bn_var[l] *= 1.0 - _BN_MOMENTUM
                    model.bn_var[l] += _BN_MOMENTUM * var
            else:
                mean = model.bn_mean[l]
                centered = a - mean
                var = model.bn_var[l]
            inv_std = 1.0 / np.sqrt(var + _BN_EPS)
            u = centered * inv_std
            out = model.bn_scale[l] * u + model.bn_shift[l]
        else:
            u = inv_std = None
            out = a
        caches.append({"h_in": h, "z": z, "a": a, "u": u, "inv_std": inv_std})
        h = out
    z_out = h @ model.weights[-1] + model.biases[-1]
    f = _sigmoid(z_out[:, 0])
    caches.append({"h_in": h, "f": f})
    return f, caches


def forward(model: MlpModel, batch: np.ndarray) -> np.ndarray:
    """Inference-mode predictions in (0, 1) for a (batch, d_in) feature array.

    Deterministic: normalization uses the stored running statistics, so the
    result for a row does not depend on how evaluation batches are cut."""
    f, _ = _forward_full(model, batch, training=False, update_running=False)
    return f


@dataclass
class Grads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    slopes: list[np.ndarray]
    bn_scale: list[np.ndarray]
    bn_shift: list[np.ndarray]

    def trainable(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases, *self.slopes, *self.bn_scale, *self.bn_shift]


def loss_and_grad(
    model: MlpModel,
    batch: np.ndarray,
    targets: np.ndarray,
    update_running: bool = True,
) -> tuple[float, Grads]:
    """Mean squared error over the batch and exact gradients for every
    trainable parameter (training mode: normalization uses batch statistics
    and, unless disabled, updates the running ones)."""
    spec = model.spec
    t = np.asarray(targets, dtype=float).reshape(-1)
    f, caches = _forward_full(model, batch, training=True, update_running=update_running)
    if t.shape != f.shape:
        raise ValueError(f"targets shape {t.shape} does not match batch of {f.shape[0]}")
    bsz = f.shape[0]
    resid = f - t
    loss = float(np.mean(resid * resid))

    n_hidden = spec.n_hidden
    d_w = [None] * (n_hidden + 1)
    d_b = [None] * (n_hidden + 1)
    d_k = [np.zeros(())] * n_hidden if spec.activation == "prelu" else []
    d_g = [None] * n_hidden if spec.batch_norm else []
    d_s = [None] * n_hidden if spec.batch_norm else []

    # output layer: d loss / d z_out through the sigmoid
    dz = (2.0 / bsz) * resid * f * (1.0 - f)
    dz = dz[:, None]
    d_w[-1] = caches[-1]["h_in"].T @ dz
    d_b[-1] = dz.sum(axis=0)
    dh = dz @ model.weights[-1].T

    for l in range(n_hidden - 1, -1, -1):
        c = caches[l]
        if spec.batch_norm:
            u, inv_std = c["u"], c["inv_std"]
            d_g[l] = np.einsum("ij,ij->j", dh, u)
            d_s[l] = dh.sum(axis=0)
            du = dh * model.bn_scale[l]
            da = (inv_std / bsz) * (
                bsz * du - du.sum(axis=0) - u * np.einsum("ij,ij->j", du, u)
            )
        else:
            da = dh
        z = c["z"]
        if spec.activation == "prelu":
            k = model.slopes[l]
            neg = z <= 0
            d_k[l] = np.asarray((da * z * neg).sum())
            dz = da * np.where(neg, k, 1.0)
        else:
            dz = da * (z > 0)
        d_w[l] = c["h_in"].T @ dz
        d_b[l] = dz.sum(axis=0)
        if l > 0:
            dh = dz @ model.weights[l].T
        else:
            # input-layer gradient not needed (features are data)
            pass
    return loss, Grads(d_w, d_b, list(d_k), list(d_g), list(d_s))


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_model(cls, model: MlpModel) -> "AdamState":
        params = model.trainable()
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(
    model: MlpModel,
    grads: Grads,
    state: AdamState,
    learning_rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One in-place Adam update with bias-corrected moments."""
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for p, g, m, v in zip(model.trainable(), grads.trainable(), state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= learning_rate * (m / c1) / (np.sqrt(v / c2) + eps)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 50
    learning_rate: float = 1e-3
    max_iterations: int = 100_000
    patience_iterations: int = 50_000
    validation_fraction: float = 0.02
    seed: int = 0
    eval_every: int = 100

    def __post_init__(self):
        if min(self.batch_size, self.max_iterations, self.patience_iterations, self.eval_every) < 1:
            raise ValueError("batch_size, iteration counts, and eval_every must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 < self.validation_fraction <= 0.5:
            raise ValueError("validation_fraction must be in (0, 0.5]")


def _mse(model: MlpModel, x: np.ndarray, t: np.ndarray) -> float:
    total = 0.0
    for start in range(0, x.shape[0], 65536):
        f = forward(model, x[start : start + 65536])
        r = f - t[start : start + 65536]
        total += float(np.dot(r, r))
    return total / x.shape[0]


def _snapshot(model: MlpModel) -> MlpModel:
    return copy.deepcopy(model)


def train(
    spec: MlpSpec,
    features: np.ndarray,
    targets: np.ndarray,
    cfg: TrainConfig,
    feature_scale: np.ndarray | None = None,
) -> tuple[MlpModel, list[tuple[int, float, float]]]:
    """Minibatch Adam with validation-checkpoint early stopping.

    The data is shuffled once (seeded); the trailing ``validation_fraction``
    is held out.  Every ``eval_every`` iterations the held-out loss is logged
    and the best checkpoint kept; training stops after
    ``patience_iterations`` without improvement or at ``max_iterations``.
    Returns the best checkpoint and the (iteration, train, validation) log.
    """
    from confsim.core import PURPOSE_BATCH, PURPOSE_INIT, PURPOSE_SHUFFLE, SeedSpec, purpose_stream

    x = np.asarray(features, dtype=float)
    t = np.asarray(targets, dtype=float).reshape(-1)
    if x.ndim != 2 or x.shape[0] != t.shape[0]:
        raise ValueError("features must be (n, d) with one target per row")
    n = x.shape[0]
    if n < 10 * cfg.batch_size:
        raise ValueError(f"need at least 10*batch_size rows, got {n}")

    seed = SeedSpec(cfg.seed)
    perm = purpose_stream(seed, PURPOSE_SHUFFLE).permutation(n)
    x, t = x[perm], t[perm]
    n_val = max(1, int(round(cfg.validation_fraction * n)))
    x_tr, t_tr = x[: n - n_val], t[: n - n_val]
    x_val, t_val = x[n - n_val :], t[n - n_val :]

    model = init_model(spec, feature_scale, purpose_stream(seed, PURPOSE_INIT))
    state = AdamState.for_model(model)
    batch_rng = purpose_stream(seed, PURPOSE_BATCH)

    log: list[tuple[int, float, float]] = []
    best_val = math.inf
    best_model = _snapshot(model)
    best_iter = 0
    for it in range(1, cfg.max_iterations + 1):
        idx = batch_rng.integers(0, x_tr.shape[0], size=cfg.batch_size)
        loss, grads = loss_and_grad(model, x_tr[idx], t_tr[idx])
        if not math.isfinite(loss):
            raise TrainingDiverged(f"non-finite training loss at iteration {it}")
        adam_step(model, grads, state, cfg.learning_rate)
        if it % cfg.eval_every == 0 or it == cfg.max_iterations:
            val = _mse(model, x_val, t_val)
            if not math.isfinite(val):
                raise TrainingDiverged(f"non-finite validation loss at iteration {it}")
            log.append((it, loss, val))
            if val < best_val:
                best_val = val
                best_model = _snapshot(model)
                best_iter = it
            elif it - best_iter >= cfg.patience_iterations:
                break
    return best_model, log


def save_model(model: MlpModel, path) -> None:
    """Single-file artifact: spec header plus every array, loads bit-exactly."""
    header = json.dumps(
        {
            "layer_sizes": list(model.spec.layer_sizes),
            "activation": model.spec.activation,
            "batch_norm": model.spec.batch_norm,
            "n_layers": len(model.weights),
        }
    )
    arrays = {"feature_scale": model.feature_scale}
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    for i, k in enumerate(model.slopes):
        arrays[f"slope{i}"] = k
    for i in range(len(model.bn_scale)):
        arrays[f"bn_scale{i}"] = model.bn_scale[i]
        arrays[f"bn_shift{i}"] = model.bn_shift[i]
        arrays[f"bn_mean{i}"] = model.bn_mean[i]
        arrays[f"bn_var{i}"] = model.bn_var[i]
    np.savez(path, header=np.frombuffer(header.encode(), dtype=np.uint8), **arrays)


def load_model(path) -> MlpModel:
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode())
        spec = MlpSpec(
            tuple(header["layer_sizes"]), header["activation"], header["batch_norm"]
        )
        n_layers = header["n_layers"]
        weights = [data[f"w{i}"] for i in range(n_layers)]
        biases = [data[f"b{i}"] for i in range(n_layers)]
        slopes = []
        if spec.activation == "prelu":
            slopes = [data[f"slope{i}"] for i in range(spec.n_hidden)]
        bn_scale = bn_shift = bn_mean = bn_var = []
        if spec.batch_norm:
            bn_scale = [data[f"bn_scale{i}"] for i in range(spec.n_hidden)]
            bn_shift = [data[f"bn_shift{i}"] for i in range(spec.n_hidden)]
            bn_mean = [data[f"bn_mean{i}"] for i in range(spec.n_hidden)]
            bn_var = [data[f"bn_var{i}"] for i in range(spec.n_hidden)]
        return MlpModel(
            spec, data["feature_scale"], weights, biases, list(slopes),
            list(bn_scale), list(bn_shift), list(bn_mean), list(bn_var),
        )
