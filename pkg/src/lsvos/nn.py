"""Minimal dense-network numerics: forward, reverse-mode gradients, Adam.

Everything runs in float64.  Networks are plain dataclasses holding weight
matrices of shape (fan_in, fan_out); a batch is a (B, D) array and layers
compute ``a @ W + b`` followed by the layer activation.  Gradients are
computed by explicit backpropagation against one of a small set of loss
kinds, so the whole training loop stays inspectable and deterministic.

Loss kinds
----------
``mse``
    mean over every output element of (y - t)^2.
``cross-entropy``
    softmax cross-entropy against integer class ids.
``uncertainty-sigmoid``
    L = E_out[-sigmoid(f)] + E_in[-(1 - sigmoid(f))] for a single logit f,
    where the expectation is a mean over the outlier rows and the inlier
    rows separately.  Bounded in (-2, 0).
``uncertainty-bce``
    the standard binary cross-entropy on the same logit, kept behind a
    config switch for comparison runs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericalFailure

ACTIVATIONS = ("identity", "relu")
LOSS_KINDS = ("mse", "cross-entropy", "uncertainty-sigmoid", "uncertainty-bce")

CHECKPOINT_MAGIC = b"VOSC"
CHECKPOINT_VERSION = 1


@dataclass
class Layer:
    """One affine layer.  weights: (fan_in, fan_out), bias: (fan_out,)."""

    weights: np.ndarray
    bias: np.ndarray
    activation: str = "relu"

    @property
    def fan_in(self) -> int:
        return self.weights.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[1]


@dataclass
class DenseNet:
    layers: list[Layer]

    @property
    def input_dim(self) -> int:
        return self.layers[0].fan_in

    @property
    def output_dim(self) -> int:
        return self.layers[-1].fan_out


def make_rng(seed: int | np.random.SeedSequence) -> np.random.Generator:
    """Fresh PCG64 generator; the only entry point for randomness."""
    return np.random.default_rng(seed)


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """n independent generators derived from one seed, order-stable."""
    seq = np.random.SeedSequence(seed)
    return [np.random.default_rng(child) for child in seq.spawn(n)]


def dense_net(
    dims: list[int] | tuple[int, ...],
    rng: np.random.Generator,
    final_activation: str = "identity",
) -> DenseNet:
    """Build a net with the given layer widths, e.g. dims=[64, 128, 32].

    Hidden layers use relu, the last layer uses final_activation.  Weights
    are Glorot-uniform, U(-a, a) with a = sqrt(6 / (fan_in + fan_out));
    biases start at zero.
    """
    if len(dims) < 2:
        raise InputError("dense_net needs at least an input and output width")
    if any(int(d) <= 0 for d in dims):
        raise InputError(f"layer widths must be positive, got {list(dims)}")
    if final_activation not in ACTIVATIONS:
        raise InputError(f"unknown activation {final_activation!r}")
    layers = []
    for i in range(len(dims) - 1):
        fan_in, fan_out = int(dims[i]), int(dims[i + 1])
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        b = np.zeros(fan_out)
        act = "relu" if i < len(dims) - 2 else final_activation
        layers.append(Layer(w, b, act))
    return DenseNet(layers)


def _apply_activation(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "identity":
        return z
    raise InputError(f"unknown activation {activation!r}")


def _activation_grad(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return (z > 0.0).astype(z.dtype)
    if activation == "identity":
        return np.ones_like(z)
    raise InputError(f"unknown activation {activation!r}")


def _check_batch(net: DenseNet, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise InputError(f"batch must be 2-D (B, D), got shape {x.shape}")
    if x.shape[1] != net.input_dim:
        raise InputError(
            f"batch has {x.shape[1]} features, net expects {net.input_dim}"
        )
    if x.shape[0] == 0:
        raise InputError("batch is empty")
    if not np.all(np.isfinite(x)):
        raise InputError("batch contains non-finite values")
    return x


def forward(net: DenseNet, x: np.ndarray) -> np.ndarray:
    """Run the net on a (B, D_in) batch, returning (B, D_out)."""
    a = _check_batch(net, x)
    for i, layer in enumerate(net.layers):
        z = a @ layer.weights + layer.bias
        a = _apply_activation(z, layer.activation)
        if not np.all(np.isfinite(a)):
            raise NumericalFailure(f"non-finite activation after layer {i}")
    return a


def forward_cached(net: DenseNet, x: np.ndarray):
    """Forward pass that keeps (input, pre-activation) per layer for backprop."""
    a = _check_batch(net, x)
    caches = []
    for i, layer in enumerate(net.layers):
        z = a @ layer.weights + layer.bias
        caches.append((a, z))
        a = _apply_activation(z, layer.activation)
        if not np.all(np.isfinite(a)):
            raise NumericalFailure(f"non-finite activation after layer {i}")
    return a, caches


def backward(net: DenseNet, caches, d_out: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Backprop d_out = dL/d(output) through the net.

    Returns (grads, d_input) where grads matches parameters(net):
    [dW0, db0, dW1, db1, ...].
    """
    grads: list[np.ndarray] = []
    da = d_out
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        a_prev, z = caches[i]
        dz = da * _activation_grad(z, layer.activation)
        dw = a_prev.T @ dz
        db = dz.sum(axis=0)
        if not (np.all(np.isfinite(dw)) and np.all(np.isfinite(db))):
            raise NumericalFailure(f"non-finite gradient at layer {i}")
        grads.append(db)
        grads.append(dw)
        da = dz @ layer.weights.T
    grads.reverse()
    return grads, da


def parameters(net: DenseNet) -> list[np.ndarray]:
    """Flat parameter list [W0, b0, W1, b1, ...] (live views, not copies)."""
    out: list[np.ndarray] = []
    for layer in net.layers:
        out.append(layer.weights)
        out.append(layer.bias)
    return out


def with_parameters(net: DenseNet, params: list[np.ndarray]) -> DenseNet:
    """Same architecture, new parameter arrays."""
    if len(params) != 2 * len(net.layers):
        raise InputError(
            f"expected {2 * len(net.layers)} parameter arrays, got {len(params)}"
        )
    layers = []
    for i, layer in enumerate(net.layers):
        w, b = params[2 * i], params[2 * i + 1]
        if w.shape != layer.weights.shape or b.shape != layer.bias.shape:
            raise InputError(f"parameter shape mismatch at layer {i}")
        layers.append(Layer(w, b, layer.activation))
    return DenseNet(layers)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + exp(x)) without overflow."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def loss_and_grad(
    outputs: np.ndarray, loss_kind: str, targets: np.ndarray
) -> tuple[float, np.ndarray]:
    """Loss value plus dL/d(outputs) for one of LOSS_KINDS.

    targets: same shape as outputs for mse, integer class ids (B,) for
    cross-entropy, and a boolean is-outlier mask (B,) for the two
    uncertainty kinds (whose outputs must be a single logit per row).
    """
    y = np.asarray(outputs, dtype=np.float64)
    if y.ndim != 2 or y.shape[0] == 0:
        raise InputError(f"outputs must be a non-empty (B, D) array, got {y.shape}")

    if loss_kind == "mse":
        t = np.asarray(targets, dtype=np.float64)
        if t.shape != y.shape:
            raise InputError(f"mse targets shape {t.shape} != outputs {y.shape}")
        diff = y - t
        loss = float(np.mean(diff * diff))
        return loss, 2.0 * diff / diff.size

    if loss_kind == "cross-entropy":
        t = np.asarray(targets)
        if t.shape != (y.shape[0],):
            raise InputError("cross-entropy targets must be class ids of shape (B,)")
        t = t.astype(np.int64)
        if t.min() < 0 or t.max() >= y.shape[1]:
            raise InputError("class id out of range for logits")
        b = y.shape[0]
        logp = log_softmax(y)
        loss = float(-logp[np.arange(b), t].mean())
        grad = np.exp(logp)
        grad[np.arange(b), t] -= 1.0
        return loss, grad / b

    if loss_kind in ("uncertainty-sigmoid", "uncertainty-bce"):
        if y.shape[1] != 1:
            raise InputError("uncertainty losses expect a single logit per row")
        is_out = np.asarray(targets)
        if is_out.shape != (y.shape[0],) or is_out.dtype != np.bool_:
            raise InputError("uncertainty targets must be a boolean mask of shape (B,)")
        f = y[:, 0]
        n_out = int(is_out.sum())
        n_in = int((~is_out).sum())
        if n_out == 0 and n_in == 0:
            raise InputError("uncertainty loss needs at least one row")
        s = sigmoid(f)
        grad = np.zeros_like(f)
        loss = 0.0
        if loss_kind == "uncertainty-sigmoid":
            # outlier term -sigma(f), inlier term -(1 - sigma(f))
            if n_out:
                loss += float(-s[is_out].mean())
                grad[is_out] = -(s[is_out] * (1.0 - s[is_out])) / n_out
            if n_in:
                loss += float(-(1.0 - s[~is_out]).mean())
                grad[~is_out] = (s[~is_out] * (1.0 - s[~is_out])) / n_in
        else:
            # outlier term -log sigma(f) = softplus(-f), inlier -log(1 - sigma(f))
            if n_out:
                loss += float(softplus(-f[is_out]).mean())
                grad[is_out] = -(1.0 - s[is_out]) / n_out
            if n_in:
                loss += float(softplus(f[~is_out]).mean())
                grad[~is_out] = s[~is_out] / n_in
        return loss, grad[:, None]

    raise InputError(f"unknown loss kind {loss_kind!r}")


def gradients(
    net: DenseNet, x: np.ndarray, loss_kind: str, targets: np.ndarray
) -> tuple[float, list[np.ndarray]]:
    """Loss and parameter gradients for one batch.

    The gradient list lines up with parameters(net).
    """
    out, caches = forward_cached(net, x)
    loss, d_out = loss_and_grad(out, loss_kind, targets)
    if not np.isfinite(loss):
        raise NumericalFailure(f"non-finite {loss_kind} loss")
    grads, _ = backward(net, caches, d_out)
    return loss, grads


@dataclass
class AdamState:
    """First/second moment accumulators, one pair per parameter array."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0


def init_adam(params: list[np.ndarray]) -> AdamState:
    return AdamState(
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
        step=0,
    )


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[list[np.ndarray], AdamState]:
    """One Adam update.  Pure: returns fresh arrays and a fresh state.

    m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
    p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps).
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise InputError("params, grads and Adam state must have equal length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise InputError(f"gradient shape {g.shape} != parameter shape {p.shape}")
    t = state.step + 1
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m1 = beta1 * m + (1.0 - beta1) * g
        v1 = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m1 / (1.0 - beta1**t)
        v_hat = v1 / (1.0 - beta2**t)
        p1 = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        if not np.all(np.isfinite(p1)):
            raise NumericalFailure("non-finite parameter after Adam step")
        new_params.append(p1)
        new_m.append(m1)
        new_v.append(v1)
    return new_params, AdamState(new_m, new_v, t)


# --- checkpoint serialization ------------------------------------------------
#
# Binary layout, little-endian throughout:
#   magic   4 bytes  b"VOSC"
#   version u32      currently 1
#   count   u32      number of named nets
#   per net:
#     name_len u16, name utf-8 bytes
#     n_layers u32
#     per layer:
#       fan_in u32, fan_out u32, activation u8 (0=identity, 1=relu)
#       weights float64 row-major (fan_in * fan_out values), bias float64

_ACT_CODE = {"identity": 0, "relu": 1}
_ACT_NAME = {v: k for k, v in _ACT_CODE.items()}


def save_checkpoint(path, nets: dict[str, DenseNet]) -> None:
    """Write named nets to a versioned binary file."""
    parts = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(nets))]
    for name, net in nets.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", len(net.layers)))
        for layer in net.layers:
            parts.append(
                struct.pack(
                    "<IIB", layer.fan_in, layer.fan_out, _ACT_CODE[layer.activation]
                )
            )
            parts.append(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
            parts.append(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise InputError("checkpoint file truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path) -> dict[str, DenseNet]:
    """Read nets written by save_checkpoint."""
    with open(path, "rb") as fh:
        reader = _Reader(fh.read())
    if reader.take(4) != CHECKPOINT_MAGIC:
        raise InputError("not a lsvos checkpoint (bad magic)")
    (version, count) = reader.unpack("<II")
    if version != CHECKPOINT_VERSION:
        raise InputError(f"unsupported checkpoint version {version}")
    nets: dict[str, DenseNet] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (n_layers,) = reader.unpack("<I")
        layers = []
        for _ in range(n_layers):
            fan_in, fan_out, act_code = reader.unpack("<IIB")
            if act_code not in _ACT_NAME:
                raise InputError(f"unknown activation code {act_code}")
            w = np.frombuffer(reader.take(8 * fan_in * fan_out), dtype="<f8")
            b = np.frombuffer(reader.take(8 * fan_out), dtype="<f8")
            layers.append(
                Layer(
                    w.reshape(fan_in, fan_out).astype(np.float64),
                    b.astype(np.float64),
                    _ACT_NAME[act_code],
                )
            )
        nets[name] = DenseNet(layers)
    if reader.pos != len(reader.data):
        raise InputError("trailing bytes after checkpoint payload")
    return nets
