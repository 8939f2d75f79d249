"""Logistic regression and MLPs over flat parameter vectors.

Parameters of every architecture live in one float64 vector. Layers are laid
out in order; each layer stores its ``(fan_in, fan_out)`` weight matrix in
row-major order followed by its ``fan_out`` biases.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, ShapeError

LOGIT_CLAMP = 30.0

# Adam learning rates per dataset profile.
DEFAULT_LEARNING_RATES = {
    "census": 0.01,
    "digits": 0.01,
    "fashion": 0.003,
    "text": 0.001,
}

_ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class ArchSpec:
    kind: str
    layer_sizes: tuple[int, ...]
    activation: str = "relu"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if self.kind not in ("logistic", "mlp"):
            raise ConfigError(f"unknown architecture kind {self.kind!r}")
        if self.activation not in _ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if any(s < 1 for s in sizes):
            raise ConfigError(f"layer sizes must be positive, got {sizes}")
        if self.kind == "logistic" and len(sizes) != 2:
            raise ConfigError("logistic regression has exactly (input, output) sizes")
        if self.kind == "mlp":
            if len(sizes) < 3:
                raise ConfigError("an mlp needs at least one hidden layer")
            if sizes[-1] < 2:
                raise ConfigError("an mlp needs at least two output units")

    @classmethod
    def logistic(cls, dim: int, classes: int) -> "ArchSpec":
        return cls("logistic", (dim, 1 if classes == 2 else classes))

    @classmethod
    def mlp(cls, dim: int, hidden, classes: int, activation: str = "relu") -> "ArchSpec":
        if isinstance(hidden, int):
            hidden = (hidden,)
        return cls("mlp", (dim, *hidden, classes), activation)

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def binary(self) -> bool:
        return self.layer_sizes[-1] == 1

    @property
    def n_classes(self) -> int:
        return 2 if self.binary else self.layer_sizes[-1]

    @property
    def n_params(self) -> int:
        s = self.layer_sizes
        return sum((a + 1) * b for a, b in zip(s[:-1], s[1:]))

    @property
    def name(self) -> str:
        if self.kind == "logistic":
            return "logistic"
        hidden = "x".join(str(h) for h in self.layer_sizes[1:-1])
        suffix = "" if self.activation == "relu" else f"-{self.activation}"
        return f"mlp-{hidden}{suffix}"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "layer_sizes": list(self.layer_sizes), "activation": self.activation}

    @classmethod
    def from_dict(cls, d: dict) -> "ArchSpec":
        return cls(d["kind"], tuple(d["layer_sizes"]), d.get("activation", "relu"))


@dataclass(frozen=True)
class ParamVector:
    values: np.ndarray
    arch: ArchSpec

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True).ravel()
        if len(v) != self.arch.n_params:
            raise ShapeError(f"{self.arch.name} needs {self.arch.n_params} parameters, got {len(v)}")
        if not np.all(np.isfinite(v)):
            raise ShapeError("parameter vector contains NaN or Inf")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)


def _layers(values: np.ndarray, arch: ArchSpec):
    """Yield (W, b) views into a flat vector."""
    s = arch.layer_sizes
    pos = 0
    for a, b in zip(s[:-1], s[1:]):
        w = values[pos:pos + a * b].reshape(a, b)
        pos += a * b
        yield w, values[pos:pos + b]
        pos += b


def init_params(arch: ArchSpec, seed: int) -> ParamVector:
    """Weights uniform in +-1/sqrt(fan_in), biases zero."""
    rng = np.random.default_rng(seed)
    values = np.zeros(arch.n_params)
    for w, _ in _layers(values, arch):
        bound = 1.0 / math.sqrt(w.shape[0])
        w[...] = rng.uniform(-bound, bound, size=w.shape)
    return ParamVector(values, arch)


def _check_batch(arch: ArchSpec, x: np.ndarray, y: np.ndarray | None = None):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != arch.input_dim:
        raise ShapeError(f"{arch.name} expects {arch.input_dim} features, got shape {x.shape}")
    if y is not None:
        y = np.asarray(y)
        if len(y) != len(x):
            raise ShapeError(f"{len(x)} rows but {len(y)} labels")
        if len(x) == 0:
            raise ShapeError("empty batch")
    return x, y


def _act(z, kind):
    return np.maximum(z, 0.0) if kind == "relu" else np.tanh(z)


def _act_grad(z, a, kind):
    return (z > 0).astype(np.float64) if kind == "relu" else 1.0 - a * a


def _forward(values, arch, x):
    """Return (clamped logits, cache for backprop)."""
    layers = list(_layers(values, arch))
    acts = [x]
    pre = []
    h = x
    for k, (w, b) in enumerate(layers):
        z = h @ w + b
        if k < len(layers) - 1:
            pre.append(z)
            h = _act(z, arch.activation)
            acts.append(h)
        else:
            h = z
    return np.clip(h, -LOGIT_CLAMP, LOGIT_CLAMP), (layers, acts, pre, h)


def logits(p: ParamVector, x) -> np.ndarray:
    x, _ = _check_batch(p.arch, x)
    return _forward(p.values, p.arch, x)[0]


def _per_example_loss(z, y, binary):
    if binary:
        z = z[:, 0]
        return np.logaddexp(0.0, z) - y * z
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    return lse - z[np.arange(len(y)), y]


def per_example_loss(p: ParamVector, x, y) -> np.ndarray:
    x, y = _check_batch(p.arch, x, y)
    z, _ = _forward(p.values, p.arch, x)
    return _per_example_loss(z, np.asarray(y, dtype=np.int64), p.arch.binary)


def _loss_and_grad(values: np.ndarray, arch: ArchSpec, x: np.ndarray, y: np.ndarray):
    z, (layers, acts, pre, raw) = _forward(values, arch, x)
    n = len(y)
    loss = float(np.mean(_per_example_loss(z, y, arch.binary)))
    if arch.binary:
        dz = (1.0 / (1.0 + np.exp(-z[:, 0])) - y)[:, None]
    else:
        e = np.exp(z - z.max(axis=1, keepdims=True))
        dz = e / e.sum(axis=1, keepdims=True)
        dz[np.arange(n), y] -= 1.0
    # clamping zeroes the gradient outside the interval
    dz = dz * (np.abs(raw) < LOGIT_CLAMP) / n
    grad = np.empty_like(values)
    grads = list(_layers(grad, arch))
    for k in range(len(layers) - 1, -1, -1):
        gw, gb = grads[k]
        gw[...] = acts[k].T @ dz
        gb[...] = dz.sum(axis=0)
        if k > 0:
            dh = dz @ layers[k][0].T
            dz = dh * _act_grad(pre[k - 1], acts[k], arch.activation)
    return loss, grad


def loss_and_grad(p: ParamVector, x, y) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of a batch and its gradient with respect to ``p``."""
    x, y = _check_batch(p.arch, x, y)
    y = np.asarray(y, dtype=np.int64)
    if y.min() < 0 or y.max() >= p.arch.n_classes:
        raise ShapeError(f"labels outside [0, {p.arch.n_classes})")
    return _loss_and_grad(p.values, p.arch, x, y)


def loss_bounds(arch: ArchSpec) -> tuple[float, float]:
    """Exact range of the per-example clamped cross-entropy."""
    c = LOGIT_CLAMP
    if arch.binary:
        return 0.0, float(np.logaddexp(0.0, c))
    k = arch.n_classes
    return 0.0, float(np.logaddexp(math.log(k - 1) + c, -c) + c)


def predict(p: ParamVector, x) -> np.ndarray:
    """Class predictions; ties go to the lowest class id."""
    z = logits(p, x)
    if p.arch.binary:
        return (z[:, 0] > 0).astype(np.int64)
    return np.argmax(z, axis=1)


def score(p: ParamVector, test) -> float:
    """Test accuracy of ``p`` on a Dataset."""
    if len(test) == 0:
        raise ShapeError("cannot score on an empty test set")
    return float(np.mean(predict(p, test.features) == test.labels))


# -- optimisation ------------------------------------------------------------

@dataclass(frozen=True)
class OptimizerConfig:
    """Local optimizer settings. ``batch_size=None`` means full batch."""

    kind: str = "adam"
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int | None = 32

    def __post_init__(self):
        if self.kind not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.kind!r}")
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2,
                "eps": self.eps, "batch_size": self.batch_size}


@dataclass(frozen=True)
class OptState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, n: int, cfg: OptimizerConfig | None = None) -> "OptState":
        cfg = cfg or OptimizerConfig()
        return cls(np.zeros(n), np.zeros(n), 0, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)


def _adam_update(values, grad, m, v, step, lr, b1, b2, eps):
    m = b1 * m + (1 - b1) * grad
    v = b2 * v + (1 - b2) * grad * grad
    mhat = m / (1 - b1 ** step)
    vhat = v / (1 - b2 ** step)
    return values - lr * mhat / (np.sqrt(vhat) + eps), m, v


def adam_step(p: ParamVector, grad, st: OptState) -> tuple[ParamVector, OptState]:
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != p.values.shape or st.m.shape != p.values.shape:
        raise ShapeError(f"gradient/state length does not match {len(p)} parameters")
    step = st.step + 1
    values, m, v = _adam_update(p.values, grad, st.m, st.v, step, st.lr, st.beta1, st.beta2, st.eps)
    return ParamVector(values, p.arch), replace(st, m=m, v=v, step=step)


def train(p: ParamVector, x, y, epochs: int, opt: OptimizerConfig, rng: np.random.Generator) -> tuple[ParamVector, list[float]]:
    """Run ``epochs`` passes of mini-batch training from ``p``.

    Returns the final parameters and the mean batch loss of each epoch.
    The optimizer state starts fresh on every call.
    """
    x, y = _check_batch(p.arch, x, y)
    y = np.asarray(y, dtype=np.int64)
    arch = p.arch
    values = p.values.copy()
    n = len(y)
    m = np.zeros_like(values)
    v = np.zeros_like(values)
    step = 0
    bs = n if opt.batch_size is None else min(opt.batch_size, n)
    history = []
    for _ in range(epochs):
        order = np.arange(n) if bs == n else rng.permutation(n)
        losses = []
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            xb, yb = (x, y) if bs == n else (x[idx], y[idx])
            loss, grad = _loss_and_grad(values, arch, xb, yb)
            losses.append(loss)
            if opt.kind == "sgd":
                values = values - opt.lr * grad
            else:
                step += 1
                values, m, v = _adam_update(values, grad, m, v, step, opt.lr, opt.beta1, opt.beta2, opt.eps)
        history.append(float(np.mean(losses)))
    return ParamVector(values, arch), history


# -- checkpoints -------------------------------------------------------------

_CKPT_MAGIC = b"HFFLCKPT1\n"


def save_checkpoint(p: ParamVector, path) -> None:
    """Header line of JSON (architecture, length) then little-endian float64s."""
    header = json.dumps({"arch": p.arch.to_dict(), "length": len(p), "dtype": "<f8"}, sort_keys=True)
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(header.encode() + b"\n")
        f.write(p.values.astype("<f8").tobytes())


def load_checkpoint(path) -> ParamVector:
    buf = Path(path).read_bytes()
    if not buf.startswith(_CKPT_MAGIC):
        raise FormatError(f"{path}: not a checkpoint (bad magic)")
    rest = buf[len(_CKPT_MAGIC):]
    nl = rest.find(b"\n")
    if nl < 0:
        raise FormatError(f"{path}: truncated header")
    header = json.loads(rest[:nl])
    body = rest[nl + 1:]
    if len(body) != 8 * header["length"]:
        raise FormatError(f"{path}: expected {header['length']} values, found {len(body) / 8:g}")
    arch = ArchSpec.from_dict(header["arch"])
    return ParamVector(np.frombuffer(body, dtype="<f8"), arch)
