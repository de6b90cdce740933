"""Multilayer perceptrons: point evaluation, sound interval extension,
and the Lipschitz width bound used to reason about over-approximation cost.

The interval extension propagates a box through each layer with the
weight-sign split (a nonnegative weight takes the lower input endpoint for
the lower bound, a negative weight the upper, and symmetrically above), then
applies the monotone activation to both endpoints.  Per-layer this is the
exact range hull; composition over layers is inclusion monotone, so the final
box contains the network image of the input box.

All float operations on bounds are ordered identically to point evaluation
and rounded outward, which makes containment of evaluated points hold in
floating point, not just in exact arithmetic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .interval import Box, DimensionMismatch


class ParseError(ValueError):
    """Network file is not structurally well-formed."""


class ValidationError(ValueError):
    """Network file parses but violates a consistency rule."""


_NEG = -np.inf
_POS = np.inf


def _widen(lo: np.ndarray, hi: np.ndarray):
    return np.nextafter(lo, _NEG), np.nextafter(hi, _POS)


@dataclass(frozen=True)
class Activation:
    """Monotone scalar activation with its Lipschitz constant."""

    tag: str
    fn: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    exact: bool  # float evaluation introduces no rounding error

    def apply_point(self, v: np.ndarray) -> np.ndarray:
        return self.fn(v)

    def apply_bounds(self, lo: np.ndarray, hi: np.ndarray):
        lo, hi = self.fn(lo), self.fn(hi)
        if self.exact:
            return lo, hi
        return _widen(lo, hi)


ACTIVATIONS = {
    "tanh": Activation("tanh", np.tanh, 1.0, exact=False),
    "logistic": Activation("logistic", expit, 0.25, exact=False),
    "relu": Activation("relu", lambda v: np.maximum(v, 0.0), 1.0, exact=True),
    "identity": Activation("identity", lambda v: v, 1.0, exact=True),
}


@dataclass(frozen=True)
class Layer:
    """One affine map plus activation: act(W x + b)."""

    weights: np.ndarray  # (n_out, n_in)
    bias: np.ndarray  # (n_out,)
    activation: str

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        b = np.asarray(self.bias, dtype=float)
        if w.ndim != 2 or w.size == 0:
            raise ValidationError(f"weights must be a non-empty matrix, got shape {w.shape}")
        if b.shape != (w.shape[0],):
            raise ValidationError(
                f"bias length {b.shape} does not match weight rows {w.shape[0]}"
            )
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValidationError("weights and biases must be finite")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unsupported activation {self.activation!r}")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]


class MlpNetwork:
    """Feedforward network as an ordered chain of layers."""

    def __init__(self, layers: Sequence[Layer]):
        layers = tuple(layers)
        if not layers:
            raise ValidationError("network needs at least one layer")
        for prev, cur in zip(layers, layers[1:]):
            if cur.n_in != prev.n_out:
                raise ValidationError(
                    f"layer expects {cur.n_in} inputs but previous layer emits {prev.n_out}"
                )
        self.layers = layers

    @property
    def input_dim(self) -> int:
        return self.layers[0].n_in

    @property
    def output_dim(self) -> int:
        return self.layers[-1].n_out

    def __repr__(self) -> str:
        dims = [self.input_dim] + [l.n_out for l in self.layers]
        acts = ",".join(l.activation for l in self.layers)
        return f"MlpNetwork({'-'.join(map(str, dims))}; {acts})"


# ---------------------------------------------------------------------------
# evaluation

def _affine_point(w: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    # sequential accumulation in a fixed column order; the bound computation
    # below uses the same order, which is what makes float containment exact
    acc = np.broadcast_to(b, (x.shape[0], b.size)).copy()
    for j in range(w.shape[1]):
        acc = acc + x[:, j, None] * w[None, :, j]
    return acc


def _affine_bounds(w: np.ndarray, b: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    rows = lo.shape[0]
    acc_lo = np.broadcast_to(b, (rows, b.size)).copy()
    acc_hi = acc_lo.copy()
    nonneg = w >= 0.0
    for j in range(w.shape[1]):
        wj = w[None, :, j]
        l, h = lo[:, j, None], hi[:, j, None]
        p_lo = np.where(nonneg[None, :, j], wj * l, wj * h)
        p_hi = np.where(nonneg[None, :, j], wj * h, wj * l)
        acc_lo = np.nextafter(acc_lo + np.nextafter(p_lo, _NEG), _NEG)
        acc_hi = np.nextafter(acc_hi + np.nextafter(p_hi, _POS), _POS)
    return acc_lo, acc_hi


def mlp_eval(net: MlpNetwork, x) -> np.ndarray:
    """Evaluate the network at a point (1-d input) or a batch (2-d input)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise DimensionMismatch(
            f"input has {x.shape[-1]} components, network expects {net.input_dim}"
        )
    for layer in net.layers:
        x = ACTIVATIONS[layer.activation].apply_point(
            _affine_point(layer.weights, layer.bias, x)
        )
    return x[0] if single else x


def _layer_bounds(layer: Layer, lo: np.ndarray, hi: np.ndarray):
    pre_lo, pre_hi = _affine_bounds(layer.weights, layer.bias, lo, hi)
    return ACTIVATIONS[layer.activation].apply_bounds(pre_lo, pre_hi)


def _mlp_bounds(net: MlpNetwork, lo: np.ndarray, hi: np.ndarray):
    """Batched extension: lo/hi are (N, n_in) arrays of box endpoints."""
    for layer in net.layers:
        lo, hi = _layer_bounds(layer, lo, hi)
    return lo, hi


def layer_interval_ext(layer: Layer, box: Box) -> Box:
    """Exact per-layer range hull of act(W x + b) over the input box."""
    if len(box) != layer.n_in:
        raise DimensionMismatch(f"box has {len(box)} dims, layer expects {layer.n_in}")
    lo, hi = _layer_bounds(layer, box.lo[None, :], box.hi[None, :])
    return Box(lo[0], hi[0])


def mlp_interval_ext(net: MlpNetwork, box: Box) -> Box:
    """Layer-by-layer interval extension; contains the network image of box."""
    if len(box) != net.input_dim:
        raise DimensionMismatch(f"box has {len(box)} dims, network expects {net.input_dim}")
    lo, hi = _mlp_bounds(net, box.lo[None, :], box.hi[None, :])
    return Box(lo[0], hi[0])


def lipschitz_bound(net: MlpNetwork) -> float:
    """Product over layers of activation constant times max-row-sum norm.

    Bounds the width amplification of the interval extension: the output box
    is at most this factor wider than the input box (max-norm widths).  Each
    layer contributes its own activation constant, which is tighter than a
    single network-wide constant when activations are mixed.
    """
    gamma = 1.0
    for layer in net.layers:
        norm = float(np.max(np.sum(np.abs(layer.weights), axis=1)))
        gamma *= ACTIVATIONS[layer.activation].lipschitz * norm
    return gamma


# ---------------------------------------------------------------------------
# persistence

def network_from_dict(data) -> MlpNetwork:
    if not isinstance(data, dict) or "layers" not in data:
        raise ParseError("expected a top-level object with a 'layers' key")
    raw_layers = data["layers"]
    if not isinstance(raw_layers, list) or not raw_layers:
        raise ParseError("'layers' must be a non-empty array")
    layers = []
    for i, entry in enumerate(raw_layers):
        if not isinstance(entry, dict):
            raise ParseError(f"layer {i} is not an object")
        missing = {"weights", "bias", "activation"} - set(entry)
        if missing:
            raise ParseError(f"layer {i} is missing {sorted(missing)}")
        try:
            w = np.asarray(entry["weights"], dtype=float)
            b = np.asarray(entry["bias"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise ParseError(f"layer {i} has non-numeric weights or bias: {exc}") from None
        if w.ndim != 2:
            raise ValidationError(f"layer {i} weights must be a matrix, got shape {w.shape}")
        layers.append(Layer(w, b, entry["activation"]))
    return MlpNetwork(layers)


def network_to_dict(net: MlpNetwork) -> dict:
    return {
        "layers": [
            {
                "weights": layer.weights.tolist(),
                "bias": layer.bias.tolist(),
                "activation": layer.activation,
            }
            for layer in net.layers
        ]
    }


def load_network(path) -> MlpNetwork:
    """Load and validate a network from a JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from None
    return network_from_dict(data)


def save_network(net: MlpNetwork, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(network_to_dict(net), fh, indent=1)
        fh.write("\n")
