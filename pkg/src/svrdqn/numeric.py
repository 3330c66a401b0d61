"""Dense MLP with hand-derived backprop, flat parameter vectors, and a
central-difference gradient oracle.

Parameters of a network live in one flat float64 vector. The layout is
layer-major: for each layer the weight matrix (shape ``(out, in)``, row-major)
followed by its bias vector. ``unflatten`` returns views into the flat vector,
so optimizers can treat the network as a single point in R^P.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

ACTIVATIONS = ("relu", "tanh", "identity")

_WEIGHTS_MAGIC = b"MLPW"
_WEIGHTS_VERSION = 1


class DimensionError(ValueError):
    """Input or upstream vector does not match the network shape."""


class NonFiniteError(FloatingPointError):
    """A loss, gradient or parameter vector contains NaN or Inf."""


def layout(layer_sizes: Sequence[int]) -> list[tuple[int, int]]:
    """Per-layer weight shapes ``(out, in)``; each layer also has ``out`` biases."""
    return [(layer_sizes[k + 1], layer_sizes[k]) for k in range(len(layer_sizes) - 1)]


def num_params(layer_sizes: Sequence[int]) -> int:
    return sum(r * c + r for r, c in layout(layer_sizes))


def unflatten(flat: np.ndarray, layer_sizes: Sequence[int]) -> list[tuple[np.ndarray, np.ndarray]]:
    if flat.ndim != 1 or flat.shape[0] != num_params(layer_sizes):
        raise DimensionError(
            f"flat vector of length {flat.shape} does not match layout {list(layer_sizes)}"
        )
    layers = []
    pos = 0
    for rows, cols in layout(layer_sizes):
        W = flat[pos:pos + rows * cols].reshape(rows, cols)
        pos += rows * cols
        b = flat[pos:pos + rows]
        pos += rows
        layers.append((W, b))
    return layers


def flatten(layers: Sequence[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    parts = []
    for W, b in layers:
        parts.append(np.asarray(W, dtype=np.float64).ravel())
        parts.append(np.asarray(b, dtype=np.float64).ravel())
    return np.concatenate(parts) if parts else np.zeros(0)


def glorot_uniform(layer_sizes: Sequence[int], rng: np.random.Generator) -> np.ndarray:
    """Uniform(-sqrt(6/(fan_in+fan_out)), +...) weights, zero biases."""
    layers = []
    for rows, cols in layout(layer_sizes):
        limit = np.sqrt(6.0 / (rows + cols))
        layers.append((rng.uniform(-limit, limit, size=(rows, cols)), np.zeros(rows)))
    return flatten(layers)


def check_finite(x: np.ndarray, what: str = "vector") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"{what} contains non-finite entries")
    return x


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return z


def _activation_slope(z: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    if kind == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


@dataclass
class MlpNetwork:
    """Fully-connected network: hidden layers use ``activation``, output is linear."""

    layer_sizes: list[int]
    weights: np.ndarray = field(repr=False)
    activation: str = "relu"

    def __post_init__(self):
        self.layer_sizes = [int(n) for n in self.layer_sizes]
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ValueError(f"invalid layer sizes {self.layer_sizes}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (num_params(self.layer_sizes),):
            raise DimensionError(
                f"weights of shape {self.weights.shape} do not match {self.layer_sizes}"
            )

    @classmethod
    def initialize(cls, layer_sizes: Sequence[int], rng: np.random.Generator,
                   activation: str = "relu") -> "MlpNetwork":
        return cls(list(layer_sizes), glorot_uniform(layer_sizes, rng), activation)

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_params(self) -> int:
        return self.weights.shape[0]

    def with_weights(self, weights: np.ndarray) -> "MlpNetwork":
        return MlpNetwork(self.layer_sizes, weights, self.activation)

    def copy(self) -> "MlpNetwork":
        return self.with_weights(self.weights.copy())

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return unflatten(self.weights, self.layer_sizes)

    def _check_inputs(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim not in (1, 2) or X.shape[-1] != self.n_inputs:
            raise DimensionError(f"expected inputs of width {self.n_inputs}, got shape {X.shape}")
        return X

    def forward_cached(self, X: np.ndarray) -> tuple[np.ndarray, list]:
        """Batched forward pass for ``X`` of shape ``(k, in)``.

        Returns the outputs and the ``(pre_activation, activation)`` pairs
        needed by :meth:`per_sample_gradients`.
        """
        a = self._check_inputs(X)
        cache = [(None, a)]
        layers = self.layers()
        for idx, (W, b) in enumerate(layers):
            z = a @ W.T + b
            kind = self.activation if idx < len(layers) - 1 else "identity"
            a = _activate(z, kind)
            cache.append((z, a))
        return a, cache

    def forward(self, X: np.ndarray) -> np.ndarray:
        X = self._check_inputs(X)
        out, _ = self.forward_cached(np.atleast_2d(X))
        return out[0] if X.ndim == 1 else out

    def per_sample_gradients(self, X: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        """Row ``i`` is the gradient of ``<upstream[i], forward(X[i])>`` w.r.t. the weights."""
        X = np.atleast_2d(self._check_inputs(X))
        upstream = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
        if upstream.shape != (X.shape[0], self.n_outputs):
            raise DimensionError(
                f"upstream of shape {upstream.shape}, expected {(X.shape[0], self.n_outputs)}"
            )
        _, cache = self.forward_cached(X)
        layers = self.layers()
        k = X.shape[0]
        blocks = []
        delta = upstream
        for idx in range(len(layers) - 1, -1, -1):
            W, _ = layers[idx]
            a_in = cache[idx][1]
            blocks.append((delta[:, :, None] * a_in[:, None, :]).reshape(k, -1))
            blocks.append(delta)
            if idx > 0:
                z, a = cache[idx]
                delta = (delta @ W) * _activation_slope(z, a, self.activation)
        # blocks were built output-first; the flat layout is input-first with W before b
        ordered = []
        for j in range(len(layers) - 1, -1, -1):
            ordered.append(blocks[2 * j])
            ordered.append(blocks[2 * j + 1])
        return np.concatenate(ordered, axis=1)


def mlp_forward(net: MlpNetwork, x: np.ndarray) -> np.ndarray:
    return net.forward(x)


def mlp_backward(net: MlpNetwork, x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Exact gradient of ``<upstream, forward(x)>`` for a single input."""
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError("mlp_backward takes a single input vector")
    if upstream.shape != (net.n_outputs,):
        raise DimensionError(f"upstream of shape {upstream.shape}, expected ({net.n_outputs},)")
    return net.per_sample_gradients(x[None, :], upstream[None, :])[0]


def finite_difference_gradient(loss: Callable[[np.ndarray], float], w: np.ndarray,
                               h: float = 1e-5) -> np.ndarray:
    """Central differences ``(loss(w + h e_j) - loss(w - h e_j)) / 2h`` per coordinate."""
    if not h > 0:
        raise ValueError("step h must be positive")
    w = np.array(w, dtype=np.float64)
    grad = np.empty_like(w)
    for j in range(w.shape[0]):
        orig = w[j]
        w[j] = orig + h
        f_plus = float(loss(w))
        w[j] = orig - h
        f_minus = float(loss(w))
        w[j] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NonFiniteError(f"loss is non-finite around coordinate {j}")
        grad[j] = (f_plus - f_minus) / (2.0 * h)
    return grad


def save_weights(path: str | Path, net: MlpNetwork) -> None:
    """Binary checkpoint: magic, version, JSON layout header, raw little-endian float64."""
    header = json.dumps({"layer_sizes": net.layer_sizes, "activation": net.activation}).encode()
    payload = net.weights.astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(_WEIGHTS_MAGIC)
        fh.write(struct.pack("<II", _WEIGHTS_VERSION, len(header)))
        fh.write(header)
        fh.write(payload)


def load_weights(path: str | Path) -> MlpNetwork:
    raw = Path(path).read_bytes()
    if raw[:4] != _WEIGHTS_MAGIC or len(raw) < 12:
        raise ValueError(f"{path}: not a weight file")
    version, header_len = struct.unpack("<II", raw[4:12])
    if version != _WEIGHTS_VERSION:
        raise ValueError(f"{path}: unsupported weight file version {version}")
    header = json.loads(raw[12:12 + header_len])
    payload = raw[12 + header_len:]
    expected = 8 * num_params(header["layer_sizes"])
    if len(payload) != expected:
        raise ValueError(f"{path}: truncated payload ({len(payload)} of {expected} bytes)")
    weights = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return MlpNetwork(header["layer_sizes"], weights, header["activation"])
