"""Fully connected feature extractor with a cosine classifier head.

Parameters are plain numpy arrays; the forward pass keeps whatever the
backward pass needs in a :class:`ForwardCache`. Weights are stored
``(fan_in, fan_out)`` so a layer is ``h @ W + b``.
"""
import copy
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArchitectureMismatch, DuplicateClass, FormatError, ShapeMismatch, StaleCache
from .geometry import NORM_EPS, normalize_rows

NONLINEARITIES = ("relu", "tanh", "identity")


@dataclass(frozen=True)
class EncoderArchitecture:
    input_dim: int
    hidden_dims: tuple = (64, 64)
    output_dim: int = 16
    nonlinearity: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if min((self.input_dim, self.output_dim) + self.hidden_dims) < 1:
            raise ArchitectureMismatch("all layer widths must be >= 1")
        if self.nonlinearity not in NONLINEARITIES:
            raise ArchitectureMismatch(f"unknown nonlinearity {self.nonlinearity!r}")

    @property
    def layer_dims(self):
        return (self.input_dim,) + self.hidden_dims + (self.output_dim,)


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 0.01
    lr_old: float = 0.001
    decay: float = 0.1
    decay_every: int = 20
    momentum: float = 0.0

    def __post_init__(self):
        if self.lr < 0 or self.lr_old < 0:
            raise ValueError("learning rates must be nonnegative")
        if self.lr_old > self.lr:
            raise ValueError("old-class rate must not exceed the main rate")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")

    def rates(self, epoch):
        """(lr, lr_old) after step decay, ``epoch`` counted from 0."""
        scale = self.decay ** (epoch // self.decay_every) if self.decay_every > 0 else 1.0
        return self.lr * scale, self.lr_old * scale


@dataclass
class ModelState:
    arch: EncoderArchitecture
    weights: list
    biases: list
    classifier: np.ndarray
    registry: dict = field(default_factory=dict)
    version: int = 0

    @property
    def theta(self):
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    @property
    def class_ids(self):
        return sorted(self.registry, key=self.registry.get)

    @property
    def n_params(self):
        return sum(a.size for a in self.theta) + self.classifier.size

    def rows_for(self, class_ids):
        return np.array([self.registry[int(k)] for k in class_ids], dtype=np.int64)


@dataclass
class Gradients:
    weights: list
    biases: list
    classifier: np.ndarray | None = None

    @property
    def theta(self):
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out


@dataclass
class ForwardCache:
    inputs: list  # input to every layer
    pre: list  # pre-activation of every hidden layer
    version: int
    batch: int


def init_state(arch, rng):
    """Gaussian weights with std 1/sqrt(fan_in), zero biases, empty head."""
    dims = arch.layer_dims
    weights = [rng.normal(0.0, 1.0 / np.sqrt(a), size=(a, b)) for a, b in zip(dims[:-1], dims[1:])]
    biases = [np.zeros(b) for b in dims[1:]]
    return ModelState(arch, weights, biases, np.zeros((0, arch.output_dim)), {})


def _act(name, x):
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "tanh":
        return np.tanh(x)
    return x


def _act_grad(name, pre, g):
    if name == "relu":
        return g * (pre > 0)
    if name == "tanh":
        t = np.tanh(pre)
        return g * (1.0 - t * t)
    return g


def forward(state, x):
    """Embeddings ``F(x; theta)`` (unnormalized) plus the backward cache."""
    h = np.asarray(x, dtype=np.float64)
    if h.ndim != 2 or h.shape[1] != state.arch.input_dim:
        raise ShapeMismatch(f"expected (n, {state.arch.input_dim}) inputs, got {h.shape}")
    inputs, pre = [], []
    last = len(state.weights) - 1
    for i, (W, b) in enumerate(zip(state.weights, state.biases)):
        inputs.append(h)
        a = h @ W + b
        if i < last:
            pre.append(a)
            h = _act(state.arch.nonlinearity, a)
        else:
            h = a
    return h, ForwardCache(inputs, pre, state.version, h.shape[0])


def embed(state, x):
    return forward(state, x)[0]


def backward(state, cache, grad_z):
    """Reverse-mode pass from ``dL/dz`` to parameter gradients."""
    if cache.version != state.version:
        raise StaleCache("parameters changed since the forward pass")
    grad_z = np.asarray(grad_z, dtype=np.float64)
    if grad_z.shape != (cache.batch, state.arch.output_dim):
        raise StaleCache(f"gradient shape {grad_z.shape} does not match cached batch {cache.batch}")
    n_layers = len(state.weights)
    gW = [None] * n_layers
    gb = [None] * n_layers
    g = grad_z
    for i in range(n_layers - 1, -1, -1):
        gW[i] = cache.inputs[i].T @ g
        gb[i] = g.sum(axis=0)
        if i > 0:
            g = _act_grad(state.arch.nonlinearity, cache.pre[i - 1], g @ state.weights[i].T)
    return Gradients(gW, gb)


def sgd_step(state, grads, cfg, current_classes=(), epoch=0, buffers=None):
    """In-place SGD update with partial freezing of the classifier.

    Rows registered for ``current_classes`` (and theta) move with the main
    rate; every other classifier row moves with ``cfg.lr_old``. ``buffers``
    is a caller-owned dict holding momentum velocities when
    ``cfg.momentum > 0``.
    """
    lr, lr_old = cfg.rates(epoch)
    theta, g_theta = state.theta, grads.theta
    if len(theta) != len(g_theta) or any(a.shape != b.shape for a, b in zip(theta, g_theta)):
        raise ShapeMismatch("gradient shapes do not match parameters")
    g_cls = grads.classifier
    if g_cls is None:
        g_cls = np.zeros_like(state.classifier)
    if g_cls.shape != state.classifier.shape:
        raise ShapeMismatch(f"classifier gradient {g_cls.shape} vs {state.classifier.shape}")

    row_lr = np.full(state.classifier.shape[0], lr_old)
    current = [state.registry[int(k)] for k in current_classes if int(k) in state.registry]
    row_lr[current] = lr

    if cfg.momentum > 0:
        if buffers is None:
            raise ValueError("momentum needs a buffers dict")
        vel = buffers.setdefault("theta", [np.zeros_like(a) for a in theta])
        vc = buffers.get("classifier")
        if vc is None or vc.shape != g_cls.shape:
            grown = np.zeros_like(g_cls)
            if vc is not None:
                grown[: vc.shape[0]] = vc
            vc = grown
        for v, g in zip(vel, g_theta):
            v *= cfg.momentum
            v += g
        vc = cfg.momentum * vc + g_cls
        buffers["classifier"] = vc
        g_theta, g_cls = vel, vc

    for p, g in zip(theta, g_theta):
        p -= lr * g
    state.classifier -= row_lr[:, None] * g_cls
    state.version += 1
    return state


def interpolate_arrays(prev, curr, beta):
    if len(prev) != len(curr) or any(a.shape != b.shape for a, b in zip(prev, curr)):
        raise ShapeMismatch("cannot interpolate parameter lists of different shapes")
    return [(1.0 - beta) * a + beta * b for a, b in zip(prev, curr)]


def interpolate(prev, curr, beta):
    """New state whose theta is ``(1-beta)*prev + beta*curr``; head from ``curr``."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    if prev.arch != curr.arch:
        raise ShapeMismatch("architectures differ")
    mixed = interpolate_arrays(prev.theta, curr.theta, beta)
    out = snapshot(curr)
    out.weights = mixed[0::2]
    out.biases = mixed[1::2]
    out.version += 1
    return out


def expand_classifier(state, new_classes, rng):
    """Append one N(0, 1/m) row per new class, in the order given."""
    new_classes = [int(k) for k in new_classes]
    clash = [k for k in new_classes if k in state.registry]
    if clash or len(set(new_classes)) != len(new_classes):
        raise DuplicateClass(f"classes already registered or repeated: {clash or new_classes}")
    m = state.arch.output_dim
    rows = rng.normal(0.0, 1.0 / np.sqrt(m), size=(len(new_classes), m))
    base = state.classifier.shape[0]
    state.classifier = np.concatenate([state.classifier, rows])
    for i, k in enumerate(new_classes):
        state.registry[k] = base + i
    state.version += 1
    return state


def snapshot(state):
    return copy.deepcopy(state)


def states_equal(a, b):
    return (
        a.arch == b.arch
        and a.registry == b.registry
        and np.array_equal(a.classifier, b.classifier)
        and all(np.array_equal(x, y) for x, y in zip(a.theta, b.theta))
    )


def predict(state, x):
    """Class ids by cosine argmax over every classifier row."""
    z = embed(state, x)
    z = z / np.maximum(np.linalg.norm(z, axis=1, keepdims=True), NORM_EPS)  # zero rows score 0 everywhere
    w = normalize_rows(state.classifier)
    ids = np.array(state.class_ids, dtype=np.int64)
    return ids[np.argmax(z @ w.T, axis=1)]


# --------------------------------------------------------------------------
# checkpoint
# --------------------------------------------------------------------------

_MAGIC = b"YONOCKPT"
_VERSION = 1


def checkpoint_bytes(state):
    arch = state.arch
    name = arch.nonlinearity.encode()
    out = [
        _MAGIC,
        struct.pack("<IIII", _VERSION, arch.input_dim, arch.output_dim, len(arch.hidden_dims)),
        struct.pack(f"<{len(arch.hidden_dims)}I", *arch.hidden_dims),
        struct.pack("<I", len(name)),
        name,
    ]
    for p in state.theta:
        out.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
    out.append(struct.pack("<I", state.classifier.shape[0]))
    out.append(np.ascontiguousarray(state.classifier, dtype="<f8").tobytes())
    for k in state.class_ids:
        out.append(struct.pack("<iI", k, state.registry[k]))
    return b"".join(out)


def state_from_bytes(data):
    view = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise FormatError("truncated checkpoint")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(8)) != _MAGIC:
        raise FormatError("not a checkpoint file (bad magic)")
    version, d_in, d_out, n_hidden = struct.unpack("<IIII", take(16))
    if version != _VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    hidden = struct.unpack(f"<{n_hidden}I", take(4 * n_hidden))
    (name_len,) = struct.unpack("<I", take(4))
    name = bytes(take(name_len)).decode()
    arch = EncoderArchitecture(d_in, hidden, d_out, name)

    def arr(shape):
        n = int(np.prod(shape))
        return np.frombuffer(take(8 * n), dtype="<f8").astype(np.float64).reshape(shape)

    dims = arch.layer_dims
    weights, biases = [], []
    for a, b in zip(dims[:-1], dims[1:]):
        weights.append(arr((a, b)))
        biases.append(arr((b,)))
    (n_cls,) = struct.unpack("<I", take(4))
    classifier = arr((n_cls, d_out))
    registry = {}
    for _ in range(n_cls):
        k, row = struct.unpack("<iI", take(8))
        registry[k] = row
    if pos != len(view):
        raise FormatError("trailing bytes after checkpoint payload")
    return ModelState(arch, weights, biases, classifier, registry)


def save_checkpoint(state, path):
    Path(path).write_bytes(checkpoint_bytes(state))


def load_checkpoint(path, arch=None):
    state = state_from_bytes(Path(path).read_bytes())
    if arch is not None and state.arch != arch:
        raise ArchitectureMismatch(f"checkpoint architecture {state.arch} differs from {arch}")
    return state
