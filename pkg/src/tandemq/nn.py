"""Small fully connected networks with hand-written backprop and Adam."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO

import numpy as np

ACTIVATIONS = ("linear", "tanh")


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple[int, ...]
    output_activation: str = "linear"

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 3:
            raise ValueError("an MLP needs input, at least one hidden and an output layer")
        if min(self.layer_sizes) < 1:
            raise ValueError(f"layer sizes must be >= 1: {self.layer_sizes}")
        if self.output_activation not in ACTIVATIONS:
            raise ValueError(f"output_activation must be one of {ACTIVATIONS}")

    @property
    def shapes(self) -> list[tuple[tuple[int, int], tuple[int]]]:
        s = self.layer_sizes
        return [((a, b), (b,)) for a, b in zip(s[:-1], s[1:])]

    @property
    def n_params(self) -> int:
        return sum(a * b + b for (a, b), _ in self.shapes)


class Mlp:
    """ReLU hidden layers, linear or tanh output.

    All parameters live in one flat float64 vector ``params``; ``weights``
    and ``biases`` are views into it, with ``W`` shaped (fan_in, fan_out).
    """

    def __init__(self, spec: MlpSpec, params: np.ndarray | None = None):
        self.spec = spec
        if params is None:
            params = np.zeros(spec.n_params)
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (spec.n_params,):
            raise ValueError(f"expected {spec.n_params} parameters, got {params.shape}")
        self.params = params
        self.weights, self.biases = _views(spec, self.params)

    @classmethod
    def init(cls, spec: MlpSpec, rng: np.random.Generator, final_scale: float = 3e-3) -> "Mlp":
        net = cls(spec)
        last = len(net.weights) - 1
        for i, (W, b) in enumerate(zip(net.weights, net.biases)):
            bound = final_scale if i == last else 1.0 / np.sqrt(W.shape[0])
            W[...] = rng.uniform(-bound, bound, W.shape)
            b[...] = rng.uniform(-bound, bound, b.shape)
        return net

    def copy(self) -> "Mlp":
        return Mlp(self.spec, self.params.copy())

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[1] != self.spec.layer_sizes[0]:
            raise ValueError(f"input width {h.shape[1]} != {self.spec.layer_sizes[0]}")
        inputs = []
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = h @ W + b
            if i < last:
                h = np.maximum(z, 0.0)
            elif self.spec.output_activation == "tanh":
                h = np.tanh(z)
            else:
                h = z
        cache = (inputs, h, single)
        return (h[0] if single else h), cache

    def backward(self, cache, output_gradient):
        """Gradients of ``<output_gradient, output>`` w.r.t. params and input."""
        inputs, out, single = cache
        g = np.asarray(output_gradient, dtype=np.float64)
        if single:
            g = g[None, :]
        if g.shape != out.shape:
            raise ValueError(f"output gradient shape {g.shape} != output shape {out.shape}")
        if self.spec.output_activation == "tanh":
            g = g * (1.0 - out * out)
        grad = np.empty_like(self.params)
        gW, gb = _views(self.spec, grad)
        for i in range(len(self.weights) - 1, -1, -1):
            h = inputs[i]
            gW[i][...] = h.T @ g
            gb[i][...] = g.sum(axis=0)
            g = g @ self.weights[i].T
            if i > 0:
                # inputs[i] is the ReLU output of the previous layer
                g = g * (h > 0.0)
        return grad, (g[0] if single else g)

    def __call__(self, x):
        return self.forward(x)[0]


def _views(spec: MlpSpec, flat: np.ndarray):
    weights, biases = [], []
    pos = 0
    for (a, b), _ in spec.shapes:
        weights.append(flat[pos:pos + a * b].reshape(a, b))
        pos += a * b
        biases.append(flat[pos:pos + b])
        pos += b
    return weights, biases


class Adam:
    def __init__(self, size: int, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def update(self, params: np.ndarray, gradient: np.ndarray, ascend: bool = False) -> None:
        """One bias-corrected step on ``params`` in place."""
        g = -gradient if ascend else gradient
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * g
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * g * g
        mhat = self.m / (1.0 - self.beta1 ** self.t)
        vhat = self.v / (1.0 - self.beta2 ** self.t)
        params -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def soft_update(target: Mlp, online: Mlp, tau: float) -> None:
    """Move ``target`` a fraction ``tau`` of the way toward ``online``."""
    if target.spec != online.spec:
        raise ValueError("soft_update needs networks of identical shape")
    if not 0 < tau <= 1:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    if tau == 1.0:
        target.params[...] = online.params
    else:
        target.params *= 1.0 - tau
        target.params += tau * online.params


# -- checkpoints --------------------------------------------------------------
#
# little-endian layout:
#   b"TANDEMQ-NN\0" | u32 version | u32 n_entries
#   per entry: u16 name_len | name utf-8 | u32 n_layers | u32[n_layers] sizes
#              | u8 output_activation | u64 n_params | f64[n_params]
#              | u8 has_adam [| u64 t | f64 lr, beta1, beta2, eps | f64[n] m | f64[n] v]

MAGIC = b"TANDEMQ-NN\0"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, entries: dict[str, tuple[Mlp, Adam | None]]) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(entries)))
        for name, (net, opt) in entries.items():
            raw = name.encode()
            sizes = net.spec.layer_sizes
            f.write(struct.pack("<H", len(raw)) + raw)
            f.write(struct.pack(f"<I{len(sizes)}I", len(sizes), *sizes))
            f.write(struct.pack("<BQ", ACTIVATIONS.index(net.spec.output_activation), net.spec.n_params))
            f.write(net.params.astype("<f8").tobytes())
            if opt is None:
                f.write(b"\0")
            else:
                f.write(b"\1" + struct.pack("<Q4d", opt.t, opt.lr, opt.beta1, opt.beta2, opt.eps))
                f.write(opt.m.astype("<f8").tobytes())
                f.write(opt.v.astype("<f8").tobytes())


def _read(f: BinaryIO, fmt: str):
    size = struct.calcsize(fmt)
    buf = f.read(size)
    if len(buf) != size:
        raise CheckpointError("truncated checkpoint")
    return struct.unpack(fmt, buf)


def _read_floats(f: BinaryIO, n: int) -> np.ndarray:
    buf = f.read(8 * n)
    if len(buf) != 8 * n:
        raise CheckpointError("truncated checkpoint")
    return np.frombuffer(buf, dtype="<f8").astype(np.float64)


def load_checkpoint(path, entries: dict[str, tuple[Mlp, Adam | None]]) -> None:
    """Fill the given networks (and optimizers) in place from ``path``.

    Every expected entry must be present with exactly matching layer sizes
    and output activation.
    """
    found = {}
    with open(path, "rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path}: not a network checkpoint")
        version, n = _read(f, "<II")
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        for _ in range(n):
            (name_len,) = _read(f, "<H")
            name = f.read(name_len).decode()
            (n_layers,) = _read(f, "<I")
            sizes = _read(f, f"<{n_layers}I")
            act, n_params = _read(f, "<BQ")
            spec = MlpSpec(sizes, ACTIVATIONS[act])
            if spec.n_params != n_params:
                raise CheckpointError(f"{path}: entry {name!r} is inconsistent")
            params = _read_floats(f, n_params)
            (has_adam,) = _read(f, "<B")
            adam = None
            if has_adam:
                t, lr, b1, b2, eps = _read(f, "<Q4d")
                adam = (t, lr, b1, b2, eps, _read_floats(f, n_params), _read_floats(f, n_params))
            found[name] = (spec, params, adam)

    for name, (net, opt) in entries.items():
        if name not in found:
            raise CheckpointError(f"{path}: missing entry {name!r}")
        spec, params, adam = found[name]
        if spec != net.spec:
            raise CheckpointError(
                f"{path}: entry {name!r} has shape {spec.layer_sizes}/{spec.output_activation}, "
                f"expected {net.spec.layer_sizes}/{net.spec.output_activation}"
            )
        net.params[...] = params
        if opt is not None:
            if adam is None:
                raise CheckpointError(f"{path}: entry {name!r} has no optimizer state")
            opt.t, opt.lr, opt.beta1, opt.beta2, opt.eps, opt.m[...], opt.v[...] = adam
