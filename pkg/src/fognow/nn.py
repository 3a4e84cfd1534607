"""Small dense feed-forward networks in double precision.

Weights are stored ``out x in`` and inputs are row batches, so a layer
computes ``a @ W.T + b``. Gradients returned by :func:`backward` are sums
over the batch of the contraction ``sum(output * output_grad)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError

ACTIVATIONS = ("elu", "identity", "sigmoid")
PARAMS_FORMAT = "fognow.mlp"
PARAMS_VERSION = 1


class DimensionMismatch(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class EmptyArchitecture(ConfigError):
    pass


def elu(v, alpha: float = 1.0):
    v = np.asarray(v, dtype=np.float64)
    return np.where(v > 0, v, alpha * np.expm1(np.minimum(v, 0.0)))


def elu_grad(v, alpha: float = 1.0):
    v = np.asarray(v, dtype=np.float64)
    return np.where(v > 0, 1.0, alpha * np.exp(np.minimum(v, 0.0)))


def sigmoid(v):
    v = np.asarray(v, dtype=np.float64)
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


@dataclass(eq=False)
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: tuple[str, ...]

    def __post_init__(self):
        self.activations = tuple(self.activations)
        if not self.weights:
            raise EmptyArchitecture("network needs at least one layer")
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ShapeMismatch("weights, biases and activations differ in length")
        for i, (w, b, act) in enumerate(zip(self.weights, self.biases, self.activations)):
            if act not in ACTIVATIONS:
                raise ConfigError(f"layer {i}: unknown activation {act!r}")
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ShapeMismatch(f"layer {i}: weight {w.shape} / bias {b.shape}")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ShapeMismatch(f"layer {i} input {w.shape[1]} != previous output {self.weights[i - 1].shape[0]}")

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.activations)

    def zeros_like(self) -> "MlpParams":
        return MlpParams([np.zeros_like(w) for w in self.weights], [np.zeros_like(b) for b in self.biases],
                         self.activations)

    def arrays(self) -> list[np.ndarray]:
        return [a for pair in zip(self.weights, self.biases) for a in pair]

    def equals(self, other: "MlpParams") -> bool:
        return self.activations == other.activations and all(
            a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays())
        )

    def to_dict(self) -> dict:
        return {
            "format": PARAMS_FORMAT,
            "version": PARAMS_VERSION,
            "dims": self.dims,
            "layers": [
                {"activation": act, "weight": w.tolist(), "bias": b.tolist()}
                for w, b, act in zip(self.weights, self.biases, self.activations)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpParams":
        if d.get("format") != PARAMS_FORMAT or d.get("version") != PARAMS_VERSION:
            raise DataError("unsupported network parameter document")
        layers = d["layers"]
        params = cls(
            [np.asarray(l["weight"], dtype=np.float64).reshape(d["dims"][i + 1], d["dims"][i])
             for i, l in enumerate(layers)],
            [np.asarray(l["bias"], dtype=np.float64) for l in layers],
            tuple(l["activation"] for l in layers),
        )
        return params

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "MlpParams":
        return cls.from_dict(json.loads(text))


@dataclass
class Tape:
    inputs: list[np.ndarray] = field(default_factory=list)
    pre: list[np.ndarray] = field(default_factory=list)
    out: list[np.ndarray] = field(default_factory=list)
    squeeze: bool = False


def _activate(act: str, z):
    if act == "elu":
        return elu(z)
    if act == "sigmoid":
        return sigmoid(z)
    return z


def forward(params: MlpParams, x) -> tuple[np.ndarray, Tape]:
    """Evaluate the network on a vector or a batch of row vectors."""
    a = np.asarray(x, dtype=np.float64)
    squeeze = a.ndim == 1
    if squeeze:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != params.weights[0].shape[1]:
        raise DimensionMismatch(f"input shape {np.shape(x)} does not match in-dimension {params.weights[0].shape[1]}")
    tape = Tape(squeeze=squeeze)
    for w, b, act in zip(params.weights, params.biases, params.activations):
        tape.inputs.append(a)
        z = a @ w.T + b
        a = _activate(act, z)
        tape.pre.append(z)
        tape.out.append(a)
    return (a[0] if squeeze else a), tape


def backward(params: MlpParams, tape: Tape, output_grad,
             wrt_preactivation: bool = False) -> tuple[MlpParams, np.ndarray]:
    """Reverse-mode gradients of ``sum(output * output_grad)``.

    Returns parameter gradients (as an :class:`MlpParams`) and the gradient
    with respect to the input, shaped like the forward input. With
    ``wrt_preactivation`` the incoming gradient is taken with respect to the
    last layer's pre-activation, skipping its activation derivative (useful
    for losses written directly in terms of logits).
    """
    g = np.asarray(output_grad, dtype=np.float64)
    if tape.squeeze:
        g = g[None, :] if g.ndim == 1 else g
    if g.shape != tape.out[-1].shape:
        raise DimensionMismatch(f"output_grad shape {np.shape(output_grad)} does not match output {tape.out[-1].shape}")
    n_layers = len(params.weights)
    dws: list[np.ndarray] = [None] * n_layers
    dbs: list[np.ndarray] = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        act = "identity" if (wrt_preactivation and i == n_layers - 1) else params.activations[i]
        if act == "elu":
            g = g * elu_grad(tape.pre[i])
        elif act == "sigmoid":
            s = tape.out[i]
            g = g * (s * (1.0 - s))
        dws[i] = g.T @ tape.inputs[i]
        dbs[i] = g.sum(axis=0)
        g = g @ params.weights[i]
    grads = MlpParams(dws, dbs, params.activations)
    return grads, (g[0] if tape.squeeze else g)


def init_params(layer_dims, activations, seed) -> MlpParams:
    """He-normal weights (variance ``2 / fan_in``) and zero biases."""
    layer_dims = list(layer_dims)
    if len(layer_dims) < 2:
        raise EmptyArchitecture("need input and at least one output dimension")
    if isinstance(activations, str):
        activations = [activations] * (len(layer_dims) - 1)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        weights.append(rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases, tuple(activations))


def mlp_architecture(n_in: int, hidden, n_out: int, hidden_act: str, out_act: str):
    dims = [n_in, *hidden, n_out]
    acts = [hidden_act] * len(hidden) + [out_act]
    return dims, acts


@dataclass(eq=False)
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0

    @classmethod
    def fresh(cls, params: MlpParams, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> "AdamState":
        if not lr > 0:
            raise ConfigError("learning rate must be positive")
        arrays = params.arrays()
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], lr, beta1, beta2, eps)


def adam_step(params: MlpParams, grads: MlpParams, state: AdamState) -> tuple[MlpParams, AdamState]:
    p_arrays, g_arrays = params.arrays(), grads.arrays()
    if len(p_arrays) != len(g_arrays) or len(p_arrays) != len(state.m) or any(
        p.shape != g.shape or p.shape != m.shape for p, g, m in zip(p_arrays, g_arrays, state.m)
    ):
        raise ShapeMismatch("parameter, gradient and moment shapes differ")
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(p_arrays, g_arrays, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        m_hat = m / c1
        v_hat = v / c2
        new_p.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    params = MlpParams(new_p[0::2], new_p[1::2], params.activations)
    return params, replace(state, m=new_m, v=new_v, t=t)


def _reference_forward(weights, biases, activations, x):
    """Plain forward pass in whatever float dtype the arrays carry."""
    a = x
    for w, b, act in zip(weights, biases, activations):
        z = a @ w.T + b
        if act == "elu":
            a = np.where(z > 0, z, np.expm1(np.minimum(z, 0)))
        elif act == "sigmoid":
            a = 1 / (1 + np.exp(-z))
        else:
            a = z
    return a


def finite_difference_grads(params: MlpParams, x, output_grad, step: float = 1e-6,
                            dtype=np.longdouble) -> MlpParams:
    """Central-difference gradients of ``sum(forward(x) * output_grad)``.

    The perturbed objectives are evaluated by an independent forward pass in
    ``dtype`` (extended precision by default) so that roundoff in the
    difference quotient stays far below the tolerance used to compare against
    backprop, even for gradient entries near 1e-6.
    """
    x = np.atleast_2d(np.asarray(x, dtype=dtype))
    og = np.asarray(output_grad, dtype=dtype).reshape(x.shape[0], -1)
    ws = [w.astype(dtype) for w in params.weights]
    bs = [b.astype(dtype) for b in params.biases]
    h = dtype(step)

    def objective():
        return np.sum(_reference_forward(ws, bs, params.activations, x) * og)

    out = params.zeros_like()
    probes = [a for pair in zip(ws, bs) for a in pair]
    for arr, garr in zip(probes, out.arrays()):
        flat, gflat = arr.reshape(-1), garr.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            fp = objective()
            flat[k] = orig - h
            fm = objective()
            flat[k] = orig
            gflat[k] = float((fp - fm) / (2 * h))
    return out


def max_relative_error(analytic: MlpParams, numeric: MlpParams, floor: float = 1e-8) -> float:
    worst = 0.0
    for a, n in zip(analytic.arrays(), numeric.arrays()):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        if a.size:
            worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def gradient_check(params: MlpParams, x, output_grad, step: float = 1e-6) -> float:
    """Max relative error between backprop and central differences."""
    _, tape = forward(params, x)
    analytic, _ = backward(params, tape, output_grad)
    return max_relative_error(analytic, finite_difference_grads(params, x, output_grad, step))
