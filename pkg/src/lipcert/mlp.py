"""Small dense feedforward networks with exact derivative recursions.

Row-vector convention: an input batch X has one sample per row, each layer
computes z = o W + b and o = phi(z), weights have shape (fan_in, fan_out).
Networks are scalar-valued: the last layer must have one output column.

The Jacobian of the output with respect to the input follows the chain rule
J_l = (J_{l-1} W_l) * phi'(z_l).  Writing A_l = J_{l-1} W_l, the input
Hessian of the scalar output collapses to a sum of congruences,

    H = sum_l A_l diag(phi''(z_l) * gamma_l) A_l^T,

where gamma_l is the gradient of the output with respect to o_l, accumulated
backwards via gamma_{l-1} = (W_l diag(phi'(z_l))) gamma_l.  Both recursions
are exact; tests cross-check them against finite differences and against the
unrolled three-index recursion.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np

from .errors import DimensionMismatch, IndexOutOfRange, UnsupportedActivation

# sup |phi''| over the real line, used by the Lipschitz bound.
TANH_D2_SUP = 4.0 / (3.0 * math.sqrt(3.0))
SIGMOID_D2_SUP = 1.0 / (6.0 * math.sqrt(3.0))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class ActivationKind(Enum):
    TANH = "tanh"
    SIGMOID = "sigmoid"
    IDENTITY = "identity"

    def apply(self, z):
        z = np.asarray(z, dtype=float)
        if self is ActivationKind.TANH:
            return np.tanh(z)
        if self is ActivationKind.SIGMOID:
            return _sigmoid(z)
        return z

    def derivative(self, z):
        z = np.asarray(z, dtype=float)
        if self is ActivationKind.TANH:
            return 1.0 - np.tanh(z) ** 2
        if self is ActivationKind.SIGMOID:
            s = _sigmoid(z)
            return s * (1.0 - s)
        return np.ones_like(z)

    def second_derivative(self, z):
        z = np.asarray(z, dtype=float)
        if self is ActivationKind.TANH:
            t = np.tanh(z)
            return -2.0 * t * (1.0 - t**2)
        if self is ActivationKind.SIGMOID:
            s = _sigmoid(z)
            return s * (1.0 - s) * (1.0 - 2.0 * s)
        return np.zeros_like(z)

    @property
    def sup_abs_second_derivative(self) -> float:
        if self is ActivationKind.TANH:
            return TANH_D2_SUP
        if self is ActivationKind.SIGMOID:
            return SIGMOID_D2_SUP
        return 0.0


def activation_from_name(name: str) -> ActivationKind:
    try:
        return ActivationKind(name)
    except ValueError:
        raise UnsupportedActivation(f"unknown activation {name!r}") from None


@dataclass
class LayerSpec:
    """One dense layer: weights (fan_in, fan_out), bias (fan_out,)."""

    weights: np.ndarray
    bias: np.ndarray
    activation: ActivationKind

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.weights.ndim != 2:
            raise DimensionMismatch("layer weights must be a matrix")
        if self.bias.shape != (self.weights.shape[1],):
            raise DimensionMismatch("bias length must equal the weight column count")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise ValueError("layer parameters must be finite")
        if not isinstance(self.activation, ActivationKind):
            raise UnsupportedActivation(f"not an activation: {self.activation!r}")

    @property
    def fan_in(self) -> int:
        return self.weights.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[1]


@dataclass
class Network:
    """Scalar-valued dense network; layer shapes must chain."""

    input_dim: int
    layers: list[LayerSpec]

    def __post_init__(self) -> None:
        if self.input_dim < 1:
            raise DimensionMismatch("input_dim must be at least 1")
        if not self.layers:
            raise DimensionMismatch("a network needs at least one layer")
        fan = self.input_dim
        for i, layer in enumerate(self.layers):
            if layer.fan_in != fan:
                raise DimensionMismatch(f"layer {i} expects fan-in {layer.fan_in}, got {fan}")
            fan = layer.fan_out
        if fan != 1:
            raise DimensionMismatch("the last layer must produce a single output")

    @property
    def n_parameters(self) -> int:
        return sum(l.weights.size + l.bias.size for l in self.layers)

    def copy(self) -> "Network":
        return Network(
            self.input_dim,
            [LayerSpec(l.weights.copy(), l.bias.copy(), l.activation) for l in self.layers],
        )


def _as_batch(net: Network, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    batch = np.atleast_2d(x)
    if batch.shape[1] != net.input_dim:
        raise DimensionMismatch("input dimension does not match the network")
    return batch, single


def forward_pass(net: Network, x) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Pre-activations z_l and post-activations o_l for a batch (o_0 = X)."""
    batch, _ = _as_batch(net, x)
    zs: list[np.ndarray] = []
    os: list[np.ndarray] = [batch]
    a = batch
    for layer in net.layers:
        z = a @ layer.weights + layer.bias
        a = layer.activation.apply(z)
        zs.append(z)
        os.append(a)
    return zs, os


def forward(net: Network, x) -> float:
    """Scalar output at one point."""
    batch, single = _as_batch(net, x)
    if not single:
        raise DimensionMismatch("forward takes a single point; use forward_batch")
    _, os = forward_pass(net, batch)
    return float(os[-1][0, 0])


def forward_batch(net: Network, x) -> np.ndarray:
    batch, _ = _as_batch(net, x)
    _, os = forward_pass(net, batch)
    return os[-1][:, 0]


def jacobian_batch(net: Network, x) -> np.ndarray:
    """d output / d input for each sample, shape (batch, input_dim)."""
    batch, _ = _as_batch(net, x)
    zs, _ = forward_pass(net, batch)
    jac: np.ndarray | None = None
    for layer, z in zip(net.layers, zs):
        if jac is None:
            a = np.broadcast_to(layer.weights, (len(batch),) + layer.weights.shape)
        else:
            a = jac @ layer.weights
        jac = a * layer.activation.derivative(z)[:, None, :]
    assert jac is not None
    return jac[:, :, 0]


def jacobian(net: Network, x) -> np.ndarray:
    batch, single = _as_batch(net, x)
    if not single:
        raise DimensionMismatch("jacobian takes a single point; use jacobian_batch")
    return jacobian_batch(net, batch)[0]


def hessian_batch(net: Network, x) -> np.ndarray:
    """Input Hessian of the scalar output per sample, shape (batch, n, n)."""
    batch, _ = _as_batch(net, x)
    zs, _ = forward_pass(net, batch)
    b, n = batch.shape

    a_list: list[np.ndarray] = []
    jac: np.ndarray | None = None
    for layer, z in zip(net.layers, zs):
        if jac is None:
            a = np.broadcast_to(layer.weights, (b,) + layer.weights.shape)
        else:
            a = jac @ layer.weights
        a_list.append(a)
        jac = a * layer.activation.derivative(z)[:, None, :]

    hess = np.zeros((b, n, n))
    gamma = np.ones((b, 1))
    for idx in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[idx]
        z = zs[idx]
        if layer.activation is not ActivationKind.IDENTITY:
            weight = layer.activation.second_derivative(z) * gamma
            hess += np.einsum("bik,bk,bjk->bij", a_list[idx], weight, a_list[idx])
        if idx > 0:
            local = layer.weights[None, :, :] * layer.activation.derivative(z)[:, None, :]
            gamma = np.einsum("bst,bt->bs", local, gamma)
    return hess


def hessian(net: Network, x) -> np.ndarray:
    batch, single = _as_batch(net, x)
    if not single:
        raise DimensionMismatch("hessian takes a single point; use hessian_batch")
    return hessian_batch(net, batch)[0]


def partial_derivative(net: Network, x, feature: int) -> float:
    """d output / d x_feature at one point; bitwise a Jacobian entry."""
    if not 0 <= feature < net.input_dim:
        raise IndexOutOfRange(f"feature {feature} outside 0..{net.input_dim - 1}")
    return float(jacobian(net, x)[feature])


def partials_batch(net: Network, x, feature: int) -> np.ndarray:
    if not 0 <= feature < net.input_dim:
        raise IndexOutOfRange(f"feature {feature} outside 0..{net.input_dim - 1}")
    return jacobian_batch(net, x)[:, feature]


def network_to_dict(net: Network) -> dict[str, Any]:
    return {
        "input_dim": net.input_dim,
        "layers": [
            {
                "rows": layer.fan_in,
                "cols": layer.fan_out,
                "weights": [float(w) for w in layer.weights.ravel(order="C")],
                "bias": [float(b) for b in layer.bias],
                "activation": layer.activation.value,
            }
            for layer in net.layers
        ],
    }


def network_from_dict(data: dict[str, Any]) -> Network:
    try:
        input_dim = int(data["input_dim"])
        raw_layers = data["layers"]
    except (KeyError, TypeError) as exc:
        raise DimensionMismatch("model dict needs input_dim and layers") from exc
    layers = []
    for raw in raw_layers:
        try:
            rows, cols = int(raw["rows"]), int(raw["cols"])
            flat = np.asarray(raw["weights"], dtype=float)
            bias = np.asarray(raw["bias"], dtype=float)
            name = raw["activation"]
        except (KeyError, TypeError, ValueError) as exc:
            raise DimensionMismatch("malformed layer entry") from exc
        if flat.size != rows * cols:
            raise DimensionMismatch("weight count does not match rows * cols")
        layers.append(
            LayerSpec(flat.reshape(rows, cols), bias, activation_from_name(name))
        )
    return Network(input_dim, layers)


def save_network(net: Network, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(network_to_dict(net), fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_network(path) -> Network:
    with open(path, "r", encoding="utf-8") as fh:
        return network_from_dict(json.load(fh))


def init_network(
    input_dim: int,
    hidden: tuple[int, ...] | list[int],
    activation: ActivationKind = ActivationKind.TANH,
    output_activation: ActivationKind = ActivationKind.IDENTITY,
    seed: int = 0,
) -> Network:
    """Glorot-uniform weights, zero biases, scalar output layer."""
    rng = np.random.default_rng(seed)
    sizes = [input_dim, *hidden, 1]
    acts = [activation] * len(hidden) + [output_activation]
    layers = []
    for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], acts):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        layers.append(LayerSpec(weights, np.zeros(fan_out), act))
    return Network(input_dim, layers)
