"""Minimal dense neural network engine on numpy.

Implements exactly what the rest of the package needs: fully connected
layers with tanh/relu/softmax/linear activations, inverted dropout,
mean squared error and cross-entropy losses, reverse-mode gradients,
ADAM updates, a central-difference gradient checker and a versioned
on-disk model format.  All math is float64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

FORMAT_TAG = "deepwifi-nn/1"
CROSS_ENTROPY_FLOOR = 1e-12

ACTIVATIONS = ("linear", "relu", "tanh", "softmax")
LOSSES = ("mse", "cross_entropy")


@dataclass
class LayerSpec:
    """Shape and behaviour of one dense layer."""

    input_dim: int
    output_dim: int
    activation: str = "linear"
    dropout_prob: float = 0.0

    def validate(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("layer dimensions must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout_prob < 1.0:
            raise ValueError("dropout_prob must lie in [0, 1)")


@dataclass
class Network:
    """A stack of dense layers with their parameters."""

    layers: list[LayerSpec]
    weights: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)

    @property
    def input_dim(self):
        return self.layers[0].input_dim

    @property
    def output_dim(self):
        return self.layers[-1].output_dim


def init_network(layer_specs, seed=0):
    """Build a network with uniform(+-sqrt(6/(fan_in+fan_out))) weights.

    Consecutive layer dimensions must chain; biases start at zero.
    """
    specs = [s if isinstance(s, LayerSpec) else LayerSpec(*s) for s in layer_specs]
    if not specs:
        raise ValueError("need at least one layer")
    for spec in specs:
        spec.validate()
    for prev, nxt in zip(specs, specs[1:]):
        if prev.output_dim != nxt.input_dim:
            raise ValueError(
                f"layer dims do not chain: {prev.output_dim} -> {nxt.input_dim}"
            )
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for spec in specs:
        limit = np.sqrt(6.0 / (spec.input_dim + spec.output_dim))
        weights.append(rng.uniform(-limit, limit, size=(spec.input_dim, spec.output_dim)))
        biases.append(np.zeros(spec.output_dim))
    return Network(layers=specs, weights=weights, biases=biases)


def _act_forward(kind, z):
    if kind == "linear":
        return z
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "softmax":
        shifted = z - np.max(z, axis=-1, keepdims=True)
        e = np.exp(shifted)
        return e / np.sum(e, axis=-1, keepdims=True)
    raise ValueError(f"unknown activation {kind!r}")


def _act_backward(kind, a, grad_a):
    """Map dL/da to dL/dz given the activation output a."""
    if kind == "linear":
        return grad_a
    if kind == "relu":
        return grad_a * (a > 0.0)
    if kind == "tanh":
        return grad_a * (1.0 - a * a)
    if kind == "softmax":
        # Full Jacobian product, rowwise: dz = a * (g - <g, a>).
        dot = np.sum(grad_a * a, axis=-1, keepdims=True)
        return a * (grad_a - dot)
    raise ValueError(f"unknown activation {kind!r}")


def _as_batch(x, dim, name="input"):
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ValueError(f"{name} must have {dim} features, got shape {x.shape}")
    return x, squeeze


def _forward_cached(net, x, train=False, rng=None):
    """Run the network, caching per-layer activations and dropout masks.

    Returns (acts, raw, masks): acts[i] is the input to layer i (after
    any dropout), raw[i] is layer i's activation before dropout.
    """
    acts = [x]
    raw = []
    masks = []
    a = x
    for spec, w, b in zip(net.layers, net.weights, net.biases):
        z = a @ w + b
        a = _act_forward(spec.activation, z)
        raw.append(a)
        mask = None
        if train and spec.dropout_prob > 0.0:
            if rng is None:
                raise ValueError("train-mode forward with dropout needs an rng")
            keep = 1.0 - spec.dropout_prob
            mask = (rng.random(a.shape) < keep) / keep
            a = a * mask
        masks.append(mask)
        acts.append(a)
    return acts, raw, masks


def forward(net, x, train=False, rng=None):
    """Network output for a single vector or a batch of rows."""
    xb, squeeze = _as_batch(x, net.input_dim)
    acts, _, _ = _forward_cached(net, xb, train=train, rng=rng)
    out = acts[-1]
    return out[0] if squeeze else out


def mse(pred, target):
    """Mean squared error over every element."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError("pred and target shapes differ")
    diff = pred - target
    return float(np.mean(diff * diff))


def cross_entropy(pred, target):
    """Mean categorical cross-entropy, natural log, probabilities floored."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError("pred and target shapes differ")
    if pred.ndim == 1:
        pred, target = pred[None, :], target[None, :]
    clipped = np.maximum(pred, CROSS_ENTROPY_FLOOR)
    return float(-np.sum(target * np.log(clipped)) / pred.shape[0])


def loss_value(kind, pred, target):
    if kind == "mse":
        return mse(pred, target)
    if kind == "cross_entropy":
        return cross_entropy(pred, target)
    raise ValueError(f"unknown loss {kind!r}")


def _loss_grad(kind, pred, target):
    if kind == "mse":
        return 2.0 * (pred - target) / pred.size
    if kind == "cross_entropy":
        grad = np.zeros_like(pred)
        ok = pred > CROSS_ENTROPY_FLOOR
        grad[ok] = -target[ok] / pred[ok]
        return grad / pred.shape[0]
    raise ValueError(f"unknown loss {kind!r}")


def backward(net, x, target, loss_kind, train=False, rng=None):
    """Loss and its gradients for every weight and bias.

    Returns (loss, grads) where grads is a list of (dW, db) pairs in
    layer order.  Dropout masks drawn in train mode are shared between
    the forward and backward passes.
    """
    xb, _ = _as_batch(x, net.input_dim)
    tb, _ = _as_batch(target, net.output_dim, name="target")
    if xb.shape[0] != tb.shape[0]:
        raise ValueError("input and target batch sizes differ")
    acts, raw, masks = _forward_cached(net, xb, train=train, rng=rng)
    loss = loss_value(loss_kind, acts[-1], tb)
    grad_a = _loss_grad(loss_kind, acts[-1], tb)
    grads = [None] * len(net.layers)
    for idx in range(len(net.layers) - 1, -1, -1):
        spec = net.layers[idx]
        if masks[idx] is not None:
            grad_a = grad_a * masks[idx]
        grad_z = _act_backward(spec.activation, raw[idx], grad_a)
        grads[idx] = (acts[idx].T @ grad_z, np.sum(grad_z, axis=0))
        if idx > 0:
            grad_a = grad_z @ net.weights[idx].T
    return loss, grads


def parameters(net):
    """Flat list of parameter arrays: W0, b0, W1, b1, ..."""
    out = []
    for w, b in zip(net.weights, net.biases):
        out.extend((w, b))
    return out


def grads_flat(grads):
    out = []
    for dw, db in grads:
        out.extend((dw, db))
    return out


def init_adam_state(params):
    return {
        "t": 0,
        "m": [np.zeros_like(p) for p in params],
        "v": [np.zeros_like(p) for p in params],
    }


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One ADAM update, in place, with bias correction."""
    state["t"] += 1
    t = state["t"]
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return state


def gradient_check(net, x, target, loss_kind, eps=1e-5):
    """Max relative error between analytic and central-difference grads."""
    _, grads = backward(net, x, target, loss_kind, train=False)
    analytic = grads_flat(grads)
    params = parameters(net)
    worst = 0.0
    for p, g in zip(params, analytic):
        flat_p = p.ravel()
        flat_g = g.ravel()
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + eps
            up = loss_value(loss_kind, forward(net, x), target)
            flat_p[i] = orig - eps
            down = loss_value(loss_kind, forward(net, x), target)
            flat_p[i] = orig
            numeric = (up - down) / (2.0 * eps)
            denom = max(abs(numeric) + abs(flat_g[i]), 1e-8)
            worst = max(worst, abs(numeric - flat_g[i]) / denom)
    return worst


def save_network(net, path, extras=None):
    """Write the model to an npz file with a format tag.

    extras is an optional dict of additional float arrays (for example
    input scaling constants) stored alongside the parameters.
    """
    spec_json = json.dumps(
        {
            "format": FORMAT_TAG,
            "layers": [
                {
                    "input_dim": s.input_dim,
                    "output_dim": s.output_dim,
                    "activation": s.activation,
                    "dropout_prob": s.dropout_prob,
                }
                for s in net.layers
            ],
            "extras": sorted(extras) if extras else [],
        }
    )
    arrays = {"spec": np.array(spec_json)}
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"W{i}"] = w
        arrays[f"b{i}"] = b
    for key, value in (extras or {}).items():
        arrays[f"extra_{key}"] = np.asarray(value, dtype=np.float64)
    np.savez(path, **arrays)


def load_network(path):
    """Read a model written by save_network.  Returns (net, extras)."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["spec"]))
        if meta.get("format") != FORMAT_TAG:
            raise ValueError(f"unsupported model format {meta.get('format')!r}")
        specs = [LayerSpec(**entry) for entry in meta["layers"]]
        weights = [np.array(data[f"W{i}"]) for i in range(len(specs))]
        biases = [np.array(data[f"b{i}"]) for i in range(len(specs))]
        extras = {name: np.array(data[f"extra_{name}"]) for name in meta["extras"]}
    net = Network(layers=specs, weights=weights, biases=biases)
    for spec, w in zip(net.layers, net.weights):
        if w.shape != (spec.input_dim, spec.output_dim):
            raise ValueError("parameter shapes do not match layer specs")
    return net, extras
