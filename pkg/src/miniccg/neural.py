"""Dense value network, written out by hand: forward, backprop, Adam, file IO.

Architecture: three tanh hidden layers (256, 128, 64 by default) into a
2-way softmax read as win probabilities.  Parameters are float32; the test
suite instantiates float64 twins for finite-difference oracles.  Training
minimizes cross-entropy against final game scores (draws are soft 0.5/0.5
targets) with mean-over-batch gradients.

Model file format (little-endian): magic ``CFNN``, format version u32,
layer count u32, then per layer: in_dim u32, out_dim u32, activation u8,
row-major float32 weights (out*in), float32 biases (out); finally a 64-bit
checksum of all preceding bytes (splitmix chain over the zero-padded int64
view, mixed with the byte length).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels as K

ACT_NONE = 0
ACT_TANH = 1
ACT_SOFTMAX = 2

MAGIC = b"CFNN"
FORMAT_VERSION = 1

DEFAULT_HIDDEN = (256, 128, 64)


class ModelFormatError(ValueError):
    """Corrupt or incompatible model file."""


def _checksum(payload: bytes) -> int:
    pad = (-len(payload)) % 8
    arr = np.frombuffer(payload + b"\0" * pad, dtype=np.int64)
    h = int(K.hash_bytes64(arr, len(arr)))
    return (h ^ len(payload)) & 0xFFFFFFFFFFFFFFFF


class DenseLayer:
    """weights: (out_dim, in_dim); uniform Xavier init in
    [-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]."""

    __slots__ = ("weights", "biases", "activation")

    def __init__(self, in_dim: int, out_dim: int, activation: int,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        if rng is None:
            self.weights = np.zeros((out_dim, in_dim), dtype=dtype)
        else:
            limit = np.sqrt(6.0 / (in_dim + out_dim))
            self.weights = rng.uniform(-limit, limit, (out_dim, in_dim)).astype(dtype)
        self.biases = np.zeros(out_dim, dtype=dtype)
        self.activation = activation

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        z = x @ self.weights.T + self.biases
        if self.activation == ACT_TANH:
            return np.tanh(z)
        if self.activation == ACT_SOFTMAX:
            z = z - z.max(axis=-1, keepdims=True)
            e = np.exp(z)
            return e / e.sum(axis=-1, keepdims=True)
        return z


class ValueNetwork:
    """Win-probability classifier over feature vectors."""

    def __init__(self, input_dim: int, hidden: Sequence[int] = DEFAULT_HIDDEN,
                 seed: int = 0, dtype=np.float32, init: bool = True):
        self.input_dim = input_dim
        self.hidden = tuple(hidden)
        self.dtype = dtype
        rng = np.random.Generator(np.random.PCG64(seed)) if init else None
        dims = [input_dim, *hidden, 2]
        self.layers = [
            DenseLayer(dims[i], dims[i + 1],
                       ACT_SOFTMAX if i == len(dims) - 2 else ACT_TANH,
                       rng=rng, dtype=dtype)
            for i in range(len(dims) - 1)
        ]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.biases)
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Probabilities (2,) for one feature vector, or (n, 2) for a batch."""
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"input dim {x.shape[-1]} != network dim {self.input_dim}")
        a = x
        for layer in self.layers:
            a = layer(a)
        return a

    __call__ = forward

    def clone_architecture(self, seed: int = 0) -> "ValueNetwork":
        return ValueNetwork(self.input_dim, self.hidden, seed=seed, dtype=self.dtype)


def forward(net: ValueNetwork, x: np.ndarray) -> np.ndarray:
    return net.forward(x)


def loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Cross-entropy -sum(target * ln(pred)), predictions clamped to
    [1e-12, 1] before the log."""
    p = np.clip(pred, 1e-12, 1.0)
    return float(-(np.asarray(target) * np.log(p)).sum(axis=-1).mean())


def backward(net: ValueNetwork, x: np.ndarray, target: np.ndarray) -> list[np.ndarray]:
    """Exact gradients of the mean cross-entropy over the batch, ordered like
    net.parameters(). Accepts a single sample or a batch."""
    squeeze = x.ndim == 1
    X = np.atleast_2d(x)
    T = np.atleast_2d(target)
    acts = [X.astype(net.dtype, copy=False)]
    for layer in net.layers:
        acts.append(layer(acts[-1]))
    n = X.shape[0]
    grads: list[np.ndarray] = []
    # softmax + cross-entropy head collapses to (p - t) / n
    delta = (acts[-1] - T.astype(acts[-1].dtype)) / n
    for li in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[li]
        a_in = acts[li]
        grads.append(delta.sum(axis=0).astype(net.dtype))          # biases
        grads.append((delta.T @ a_in).astype(net.dtype))           # weights
        if li > 0:
            delta = (delta @ layer.weights) * (1.0 - acts[li] ** 2)
    grads.reverse()
    del squeeze
    return grads


@dataclass
class AdamState:
    """Standard Adam with bias correction."""

    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def init_like(self, params: list[np.ndarray]) -> None:
        self.m = [np.zeros_like(p, dtype=np.float64) for p in params]
        self.v = [np.zeros_like(p, dtype=np.float64) for p in params]
        self.t = 0


def adam_step(state: AdamState, params: list[np.ndarray],
              grads: list[np.ndarray]) -> list[np.ndarray]:
    """One Adam update, in place on the parameter arrays."""
    if not state.m:
        state.init_like(params)
    state.t += 1
    b1t = 1.0 - state.beta1 ** state.t
    b2t = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (np.asarray(g, dtype=np.float64) ** 2)
        step = state.lr * (m / b1t) / (np.sqrt(v / b2t) + state.eps)
        p -= step.astype(p.dtype)
    return params


@dataclass
class TrainResult:
    net: ValueNetwork
    val_accuracy: float
    train_losses: list[float]
    n_train: int
    n_val: int


def argmax_accuracy(pred: np.ndarray, target: np.ndarray) -> float:
    """Fraction of decisive samples (target not a draw) whose argmax
    matches; returns 0.0 when every sample is a draw."""
    decisive = target[:, 0] != target[:, 1]
    if not decisive.any():
        return 0.0
    return float((pred[decisive].argmax(axis=1) == target[decisive].argmax(axis=1)).mean())


def train_epochs(net: ValueNetwork, dataset: tuple[np.ndarray, np.ndarray],
                 split: float = 0.8, batch: int = 256, epochs: int = 20,
                 seed: int = 0, lr: float = 0.001) -> TrainResult:
    """Train a fresh copy of ``net``'s architecture on a shuffled
    ``split`` fraction of the dataset; report argmax accuracy on the rest.
    Initialization, shuffling and batching all derive from ``seed``."""
    X, Y = dataset
    if len(X) == 0:
        raise ValueError("empty training dataset")
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(len(X))
    n_train = max(1, int(round(len(X) * split)))
    tr, va = order[:n_train], order[n_train:]
    Xt, Yt = X[tr], Y[tr]

    model = net.clone_architecture(seed=seed + 1)
    opt = AdamState(lr=lr)
    losses: list[float] = []
    for _ in range(epochs):
        perm = rng.permutation(len(Xt))
        total = 0.0
        for lo in range(0, len(Xt), batch):
            idx = perm[lo:lo + batch]
            xb, yb = Xt[idx], Yt[idx]
            pred = model.forward(xb)
            total += loss(pred, yb) * len(idx)
            adam_step(opt, model.parameters(), backward(model, xb, yb))
        losses.append(total / len(Xt))

    if len(va):
        acc = argmax_accuracy(model.forward(X[va]), Y[va])
    else:
        acc = float("nan")
    return TrainResult(model, acc, losses, len(tr), len(va))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def model_bytes(net: ValueNetwork) -> bytes:
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(net.layers))]
    for layer in net.layers:
        parts.append(struct.pack("<IIB", layer.in_dim, layer.out_dim, layer.activation))
        parts.append(np.ascontiguousarray(layer.weights, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(layer.biases, dtype="<f4").tobytes())
    payload = b"".join(parts)
    return payload + struct.pack("<Q", _checksum(payload))


def save_model(net: ValueNetwork, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(model_bytes(net))


def model_from_bytes(blob: bytes, expect_input_dim: int | None = None) -> ValueNetwork:
    if len(blob) < 4 + 8 + 8 or blob[:4] != MAGIC:
        raise ModelFormatError("not a model file (bad magic or truncated)")
    payload, stored = blob[:-8], struct.unpack("<Q", blob[-8:])[0]
    if _checksum(payload) != stored:
        raise ModelFormatError("checksum mismatch (file corrupt or truncated)")
    version, n_layers = struct.unpack_from("<II", payload, 4)
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format version {version}")
    off = 12
    layers = []
    for _ in range(n_layers):
        if off + 9 > len(payload):
            raise ModelFormatError("truncated layer header")
        in_dim, out_dim, act = struct.unpack_from("<IIB", payload, off)
        off += 9
        wn, bn = in_dim * out_dim * 4, out_dim * 4
        if off + wn + bn > len(payload):
            raise ModelFormatError("truncated layer data")
        w = np.frombuffer(payload, dtype="<f4", count=in_dim * out_dim, offset=off)
        off += wn
        b = np.frombuffer(payload, dtype="<f4", count=out_dim, offset=off)
        off += bn
        layers.append((in_dim, out_dim, act, w.reshape(out_dim, in_dim).copy(), b.copy()))
    if off != len(payload):
        raise ModelFormatError("trailing bytes after last layer")
    if not layers:
        raise ModelFormatError("model has no layers")
    input_dim = layers[0][0]
    if expect_input_dim is not None and input_dim != expect_input_dim:
        raise ModelFormatError(
            f"model input dim {input_dim} does not match expected {expect_input_dim}")
    net = ValueNetwork(input_dim, hidden=[l[1] for l in layers[:-1]], init=False)
    for layer, (_, _, act, w, b) in zip(net.layers, layers):
        layer.weights = w
        layer.biases = b
        layer.activation = act
    return net


def load_model(path: str, expect_input_dim: int | None = None) -> ValueNetwork:
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read(), expect_input_dim)
