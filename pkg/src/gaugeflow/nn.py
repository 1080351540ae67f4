"""Dense MLP substrate: SiLU forward, manual reverse mode, Adam, checkpoints.

Networks here are small enough that everything runs in f64, which keeps
finite-difference gradient checks tight. The compute graph is fixed (affine
layers with SiLU on hidden layers, identity on the output layer), so the
backward pass is written out by hand instead of pulling in an autodiff
framework.
"""

import json
from dataclasses import dataclass

import numpy as np

from .rng import Prng


class CheckpointError(ValueError):
    """Malformed, truncated, or dimensionally inconsistent checkpoint."""


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # branch on sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(x):
    """SiLU(x) = x * sigmoid(x); accepts scalars or arrays."""
    a = np.asarray(x, dtype=np.float64)
    out = a * _sigmoid(a)
    return float(out) if out.ndim == 0 else out


def silu_grad(x):
    """d/dx SiLU(x) = sigmoid(x) * (1 + x * (1 - sigmoid(x)))."""
    a = np.asarray(x, dtype=np.float64)
    s = _sigmoid(a)
    out = s * (1.0 + a * (1.0 - s))
    return float(out) if out.ndim == 0 else out


@dataclass
class Mlp:
    """Dense network; weights[i] has shape (layer_dims[i+1], layer_dims[i])."""

    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def param_count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def parameters(self) -> list[np.ndarray]:
        # interleaved [W0, b0, W1, b1, ...]; mutated in place by the optimizer
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self) -> "Mlp":
        return Mlp(list(self.layer_dims), [w.copy() for w in self.weights],
                   [b.copy() for b in self.biases])


@dataclass
class MlpCache:
    """Forward-pass record consumed by mlp_backward."""

    net: Mlp
    inputs: list[np.ndarray]    # input to each affine layer, batch-major
    preacts: list[np.ndarray]   # pre-activation of each hidden layer
    single: bool                # True when the forward input was a bare vector


def mlp_init(layer_dims: list[int], rng: Prng) -> Mlp:
    """Initialize weights uniform on +-sqrt(1/fan_in), biases zero.

    Consumes exactly sum(layer_dims[i] * layer_dims[i+1]) uniform draws, one
    per weight in layer order, row-major within a layer.
    """
    if len(layer_dims) < 2:
        raise ValueError(f"need at least input and output dims, got {layer_dims}")
    if any(d < 1 for d in layer_dims):
        raise ValueError(f"layer dims must be positive, got {layer_dims}")
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        bound = np.sqrt(1.0 / fan_in)
        u = rng.uniforms(fan_out * fan_in).reshape(fan_out, fan_in)
        weights.append((2.0 * u - 1.0) * bound)
        biases.append(np.zeros(fan_out))
    return Mlp(list(layer_dims), weights, biases)


def mlp_forward(net: Mlp, x: np.ndarray) -> tuple[np.ndarray, MlpCache]:
    """Evaluate the network; SiLU on hidden layers, affine output layer.

    Accepts a vector (in_dim,) or a batch (batch, in_dim).
    """
    a = np.asarray(x, dtype=np.float64)
    single = a.ndim == 1
    if single:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != net.layer_dims[0]:
        raise ValueError(f"input shape {np.shape(x)} does not match input dim {net.layer_dims[0]}")
    inputs, preacts = [a], []
    for i in range(net.n_layers - 1):
        z = a @ net.weights[i].T + net.biases[i]
        preacts.append(z)
        a = silu(z)
        inputs.append(a)
    y = a @ net.weights[-1].T + net.biases[-1]
    cache = MlpCache(net, inputs, preacts, single)
    return (y[0] if single else y), cache


def mlp_backward(net: Mlp, cache: MlpCache, grad_output: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Exact reverse-mode gradients of <grad_output, forward(x)>.

    Returns (param_grads interleaved like Mlp.parameters(), grad_input).
    """
    if cache.net is not net:
        raise ValueError("cache does not belong to this network")
    g = np.asarray(grad_output, dtype=np.float64)
    if cache.single:
        g = g[None, :]
    batch = cache.inputs[0].shape[0]
    if g.shape != (batch, net.layer_dims[-1]):
        raise ValueError(f"grad_output shape {np.shape(grad_output)} does not match "
                         f"output dim {net.layer_dims[-1]} and batch {batch}")
    grads: list[np.ndarray] = [None] * (2 * net.n_layers)
    h = g
    for i in range(net.n_layers - 1, -1, -1):
        grads[2 * i] = h.T @ cache.inputs[i]
        grads[2 * i + 1] = h.sum(axis=0)
        h = h @ net.weights[i]
        if i > 0:
            h = h * silu_grad(cache.preacts[i - 1])
    return grads, (h[0] if cache.single else h)


# -- Adam ---------------------------------------------------------------------


@dataclass
class AdamState:
    """Adam accumulators; moment arrays mirror the parameter arrays."""

    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    learning_rate: float = 1e-3

    @classmethod
    def for_params(cls, params: list[np.ndarray], learning_rate: float = 1e-3,
                   beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls([np.zeros_like(p) for p in params],
                   [np.zeros_like(p) for p in params],
                   0, beta1, beta2, eps, learning_rate)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray],
              state: AdamState) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update, applied to the arrays in place."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ValueError("params, grads, and state must have the same layout")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter shape {p.shape}")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


# -- checkpoints ---------------------------------------------------------------

CHECKPOINT_VERSION = 1


def checkpoint_save(path, model_kind: str, n_dim: int, seed: int,
                    networks: list[tuple[str, Mlp]]) -> None:
    """Write a self-describing JSON checkpoint.

    f64 parameters survive the round trip exactly: json emits shortest
    round-trip decimal strings.
    """
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "model_kind": model_kind,
        "n_dim": n_dim,
        "seed": seed,
        "networks": [
            {
                "name": name,
                "layer_dims": list(net.layer_dims),
                "weights": [w.ravel().tolist() for w in net.weights],  # row-major
                "biases": [b.tolist() for b in net.biases],
            }
            for name, net in networks
        ],
    }
    with open(path, "w") as f:
        json.dump(doc, f, allow_nan=False)
        f.write("\n")


def _reject_nonfinite(token):
    raise CheckpointError(f"non-finite value {token!r} in checkpoint")


def checkpoint_load(path) -> tuple[str, int, int, list[tuple[str, Mlp]]]:
    """Read a checkpoint; returns (model_kind, n_dim, seed, named networks)."""
    with open(path, "rb") as f:
        try:
            doc = json.loads(f.read().decode("utf-8"), parse_constant=_reject_nonfinite)
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            raise CheckpointError(f"not a checkpoint file: {e}") from e
    if not isinstance(doc, dict) or doc.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format: {doc.get('format_version') if isinstance(doc, dict) else type(doc).__name__}")
    for key in ("model_kind", "n_dim", "seed", "networks"):
        if key not in doc:
            raise CheckpointError(f"checkpoint missing field {key!r}")
    networks = []
    for entry in doc["networks"]:
        dims = [int(d) for d in entry["layer_dims"]]
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise CheckpointError(f"invalid layer dims {dims} in network {entry.get('name')!r}")
        weights, biases = [], []
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            w = np.asarray(entry["weights"][i], dtype=np.float64)
            b = np.asarray(entry["biases"][i], dtype=np.float64)
            if w.size != fan_out * fan_in or b.size != fan_out:
                raise CheckpointError(
                    f"network {entry.get('name')!r} layer {i}: got {w.size} weights / "
                    f"{b.size} biases, expected {fan_out * fan_in} / {fan_out}")
            weights.append(w.reshape(fan_out, fan_in))
            biases.append(b)
        networks.append((entry["name"], Mlp(dims, weights, biases)))
    return doc["model_kind"], int(doc["n_dim"]), int(doc["seed"]), networks
