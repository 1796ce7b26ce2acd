"""Multilayer perceptrons over the autodiff tape.

Parameters live as plain numpy arrays in `MlpParams`; every forward pass
rebuilds tape nodes from them, so the tape never outlives one loss
evaluation. Flat-vector views (`flatten`/`unflatten`) are the interface
to the Adam optimizer and to serialization.

Binary parameter format (`save_params`/`load_params`), little-endian:

    bytes 0..4   magic b"MLP1"
    uint32       header length L
    L bytes      UTF-8 JSON: {"layer_sizes": [...], "activation": "tanh"|"relu",
                  "extra": {name: length, ...}}
    float64[n]   flattened weights/biases layer by layer (W row-major, then b),
                 followed by any extra named vectors in header order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import NumericError, Tensor
from .errors import FormatError

_ACTIVATIONS = {"tanh": ad.tanh, "relu": ad.relu}
_MAGIC = b"MLP1"


@dataclass
class MlpParams:
    """Weights of a fully connected net; identity activation on the output."""

    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "tanh"
    extra: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            expect = (self.layer_sizes[i], self.layer_sizes[i + 1])
            if w.shape != expect or b.shape != (expect[1],):
                raise ValueError(f"layer {i} shape mismatch: {w.shape} vs {expect}")

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "MlpParams":
        return MlpParams(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
            {k: v.copy() for k, v in self.extra.items()},
        )


def init_mlp(
    layer_sizes: list[int],
    rng: np.random.Generator,
    activation: str = "tanh",
    out_scale: float = 1.0,
    extra: dict[str, np.ndarray] | None = None,
) -> MlpParams:
    """Scaled-uniform init; the output layer is additionally scaled by
    `out_scale` (policy means use 0.01 so the initial policy is near-uniform)."""
    weights, biases = [], []
    n_layers = len(layer_sizes) - 1
    for i in range(n_layers):
        fan_in, fan_out = layer_sizes[i], layer_sizes[i + 1]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        if i == n_layers - 1:
            w *= out_scale
        weights.append(w)
        biases.append(np.zeros(fan_out))
    return MlpParams(list(layer_sizes), weights, biases, activation, dict(extra or {}))


def mlp_forward(params: MlpParams, x) -> np.ndarray:
    """Plain forward pass (no tape). Accepts (in_dim,) or (batch, in_dim)."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.shape[1] != params.in_dim:
        raise ValueError(f"input dim {x.shape[1]} != {params.in_dim}")
    act = np.tanh if params.activation == "tanh" else lambda v: np.maximum(v, 0.0)
    h = x
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < len(params.weights) - 1:
            h = act(h)
    return h[0] if squeeze else h


def mlp_forward_tape(params: MlpParams, x, param_tensors: list[Tensor]) -> Tensor:
    """Forward pass through tape nodes (for gradient computation).

    `param_tensors` is the list produced by `param_nodes(params)`.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    act = _ACTIVATIONS[params.activation]
    n = len(params.weights)
    h = ad.as_tensor(x)
    for i in range(n):
        w, b = param_tensors[2 * i], param_tensors[2 * i + 1]
        h = h @ w + b
        if i < n - 1:
            h = act(h)
    return h


def param_nodes(params: MlpParams) -> list[Tensor]:
    """Fresh tape leaves for every array: W0, b0, W1, b1, ..., extras."""
    nodes = []
    for w, b in zip(params.weights, params.biases):
        nodes.append(Tensor(w))
        nodes.append(Tensor(b))
    for name in params.extra:
        nodes.append(Tensor(params.extra[name]))
    return nodes


def flatten(params: MlpParams) -> np.ndarray:
    parts = []
    for w, b in zip(params.weights, params.biases):
        parts.append(w.ravel())
        parts.append(b.ravel())
    for name in params.extra:
        parts.append(params.extra[name].ravel())
    return np.concatenate(parts)


def unflatten(params: MlpParams, flat: np.ndarray) -> MlpParams:
    """New MlpParams with the same shapes, values taken from `flat`."""
    out = params.copy()
    i = 0
    for k in range(len(out.weights)):
        n = out.weights[k].size
        out.weights[k] = flat[i : i + n].reshape(out.weights[k].shape).copy()
        i += n
        n = out.biases[k].size
        out.biases[k] = flat[i : i + n].copy()
        i += n
    for name in out.extra:
        n = out.extra[name].size
        out.extra[name] = flat[i : i + n].copy()
        i += n
    if i != flat.size:
        raise ValueError(f"flat vector length {flat.size}, expected {i}")
    return out


def value_and_grad(loss_fn, params: MlpParams) -> tuple[float, np.ndarray]:
    """Evaluate `loss_fn(params, param_tensors) -> scalar Tensor` and return
    (loss, gradient w.r.t. flatten(params))."""
    nodes = param_nodes(params)
    loss = loss_fn(params, nodes)
    if not np.isfinite(loss.value):
        raise NumericError(f"non-finite loss: {float(loss.value)!r}")
    loss.backward()
    grad = np.concatenate([n.grad.ravel() for n in nodes])
    return float(loss.value), grad


# -- serialization ---------------------------------------------------------


def save_params(params: MlpParams, path) -> None:
    header = json.dumps(
        {
            "layer_sizes": params.layer_sizes,
            "activation": params.activation,
            "extra": {k: int(v.size) for k, v in params.extra.items()},
        }
    ).encode()
    flat = flatten(params)
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(flat.astype("<f8").tobytes())


def load_params(path) -> MlpParams:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != _MAGIC:
        raise FormatError(f"bad magic at byte 0: {data[:4]!r}")
    (hlen,) = struct.unpack("<I", data[4:8])
    try:
        header = json.loads(data[8 : 8 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"bad header at byte 8: {e}") from e
    sizes = header["layer_sizes"]
    extra = {
        name: np.zeros(int(n), dtype=np.float64)
        for name, n in header.get("extra", {}).items()
    }
    skeleton = MlpParams(
        sizes,
        [np.zeros((sizes[i], sizes[i + 1])) for i in range(len(sizes) - 1)],
        [np.zeros(sizes[i + 1]) for i in range(len(sizes) - 1)],
        header["activation"],
        extra,
    )
    n_expected = flatten(skeleton).size
    payload = data[8 + hlen :]
    if len(payload) != 8 * n_expected:
        raise FormatError(
            f"payload at byte {8 + hlen}: got {len(payload)} bytes, "
            f"expected {8 * n_expected}"
        )
    flat = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return unflatten(skeleton, flat)
