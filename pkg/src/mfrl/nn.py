"""Small dense networks with hand-written backprop and an Adam optimizer.

Inputs may be a single vector of shape ``(n_in,)`` or a batch ``(B, n_in)``.
For batched calls ``mlp_backward`` returns gradients summed over the batch.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "tanh", "linear")
_ACT_CODES = {name: i for i, name in enumerate(ACTIVATIONS)}


@dataclass
class MlpParams:
    layer_sizes: tuple[int, ...]
    activations: tuple[str, ...]
    weights: list[np.ndarray]  # each (n_out, n_in)
    biases: list[np.ndarray]

    def __post_init__(self):
        self.layer_sizes = tuple(int(n) for n in self.layer_sizes)
        self.activations = tuple(self.activations)
        if len(self.activations) != len(self.layer_sizes) - 1:
            raise ValueError("need one activation per layer")
        for act in self.activations:
            if act not in _ACT_CODES:
                raise ValueError(f"unknown activation {act!r}")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            n_in, n_out = self.layer_sizes[k], self.layer_sizes[k + 1]
            if w.shape != (n_out, n_in) or b.shape != (n_out,):
                raise ValueError(f"layer {k}: shape mismatch with sizes {self.layer_sizes}")

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "MlpParams":
        return MlpParams(
            self.layer_sizes,
            self.activations,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.extend((w.ravel(), b))
        return np.concatenate(parts)

    def with_flat(self, theta: np.ndarray) -> "MlpParams":
        ws, bs, i = [], [], 0
        for w, b in zip(self.weights, self.biases):
            ws.append(theta[i:i + w.size].reshape(w.shape).copy())
            i += w.size
            bs.append(theta[i:i + b.size].copy())
            i += b.size
        return MlpParams(self.layer_sizes, self.activations, ws, bs)


@dataclass
class Gradient:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.extend((w.ravel(), b))
        return np.concatenate(parts)


def init_mlp(layer_sizes, activations, rng: np.random.Generator) -> MlpParams:
    """Glorot-uniform weights, zero biases."""
    ws, bs = [], []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / (n_in + n_out))
        ws.append(rng.uniform(-limit, limit, size=(n_out, n_in)))
        bs.append(np.zeros(n_out))
    return MlpParams(tuple(layer_sizes), tuple(activations), ws, bs)


def zeros_like_params(params: MlpParams) -> MlpParams:
    return MlpParams(
        params.layer_sizes,
        params.activations,
        [np.zeros_like(w) for w in params.weights],
        [np.zeros_like(b) for b in params.biases],
    )


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _act_grad(name: str, z: np.ndarray, out: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0.0).astype(z.dtype)
    if name == "tanh":
        return 1.0 - out * out
    return np.ones_like(z)


def _check_input(params: MlpParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != params.layer_sizes[0]:
        raise ValueError(
            f"input shape {x.shape} incompatible with input size {params.layer_sizes[0]}"
        )
    return x


def _forward_trace(params: MlpParams, x: np.ndarray):
    h = x
    pre, post = [], [x]
    for w, b, act in zip(params.weights, params.biases, params.activations):
        z = h @ w.T + b
        h = _act(act, z)
        pre.append(z)
        post.append(h)
    return pre, post


def mlp_forward(params: MlpParams, x) -> np.ndarray:
    x = _check_input(params, x)
    h = x
    for w, b, act in zip(params.weights, params.biases, params.activations):
        h = _act(act, h @ w.T + b)
    return h


def mlp_backward(params: MlpParams, x, upstream) -> Gradient:
    """Gradient of ``sum(mlp_forward(params, x) * upstream)`` w.r.t. every parameter."""
    x = _check_input(params, x)
    upstream = np.asarray(upstream, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
        upstream = upstream[None, :]
    if upstream.shape != (x.shape[0], params.layer_sizes[-1]):
        raise ValueError(f"upstream shape {upstream.shape} does not match output")
    pre, post = _forward_trace(params, x)
    n_layers = len(params.weights)
    gw: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    delta = upstream
    for k in reversed(range(n_layers)):
        delta = delta * _act_grad(params.activations[k], pre[k], post[k + 1])
        gw[k] = delta.T @ post[k]
        gb[k] = delta.sum(axis=0)
        if k > 0:
            delta = delta @ params.weights[k]
    return Gradient(gw, gb)


def mlp_input_grad(params: MlpParams, x, upstream) -> np.ndarray:
    """Gradient of ``sum(output * upstream)`` w.r.t. the input."""
    x = _check_input(params, x)
    pre, post = _forward_trace(params, x)
    delta = np.asarray(upstream, dtype=np.float64)
    for k in reversed(range(len(params.weights))):
        delta = delta * _act_grad(params.activations[k], pre[k], post[k + 1])
        delta = delta @ params.weights[k]
    return delta


@dataclass
class AdamState:
    m: MlpParams
    v: MlpParams
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0

    @classmethod
    def for_params(cls, params: MlpParams, lr: float = 3e-4, **kw) -> "AdamState":
        return cls(zeros_like_params(params), zeros_like_params(params), lr=lr, **kw)


def _adam_arrays(p, g, m, v, lr, beta1, beta2, eps, t):
    m_new = beta1 * m + (1.0 - beta1) * g
    v_new = beta2 * v + (1.0 - beta2) * g * g
    m_hat = m_new / (1.0 - beta1 ** t)
    v_hat = v_new / (1.0 - beta2 ** t)
    return p - lr * m_hat / (np.sqrt(v_hat) + eps), m_new, v_new


def adam_step(params: MlpParams, grad: Gradient, state: AdamState) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam descent step; returns new params and state."""
    t = state.step + 1
    hyper = (state.lr, state.beta1, state.beta2, state.eps, t)
    new_w, new_b, mw, mb, vw, vb = [], [], [], [], [], []
    for k in range(len(params.weights)):
        w, m1, v1 = _adam_arrays(params.weights[k], grad.weights[k], state.m.weights[k], state.v.weights[k], *hyper)
        b, m2, v2 = _adam_arrays(params.biases[k], grad.biases[k], state.m.biases[k], state.v.biases[k], *hyper)
        new_w.append(w); new_b.append(b)
        mw.append(m1); mb.append(m2)
        vw.append(v1); vb.append(v2)
    sizes, acts = params.layer_sizes, params.activations
    new_state = AdamState(
        MlpParams(sizes, acts, mw, mb),
        MlpParams(sizes, acts, vw, vb),
        state.lr, state.beta1, state.beta2, state.eps, t,
    )
    return MlpParams(sizes, acts, new_w, new_b), new_state


@dataclass
class VectorAdam:
    """Adam for a plain parameter vector (used for the policy log-std)."""

    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray | None = field(default=None, repr=False)
    v: np.ndarray | None = field(default=None, repr=False)

    def update(self, p: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, "VectorAdam"]:
        m = np.zeros_like(p) if self.m is None else self.m
        v = np.zeros_like(p) if self.v is None else self.v
        t = self.step + 1
        p_new, m_new, v_new = _adam_arrays(p, g, m, v, self.lr, self.beta1, self.beta2, self.eps, t)
        return p_new, VectorAdam(self.lr, self.beta1, self.beta2, self.eps, t, m_new, v_new)


# Snapshot format (little-endian):
#   b"MLP1" | uint32 n_sizes | uint32[n_sizes] layer sizes
#   | uint8[n_sizes - 1] activation codes (0 relu, 1 tanh, 2 linear)
#   | float64[n_params] flat params, per layer W (row-major, out x in) then b
_MAGIC = b"MLP1"


def params_to_bytes(params: MlpParams) -> bytes:
    n = len(params.layer_sizes)
    head = _MAGIC + struct.pack(f"<I{n}I", n, *params.layer_sizes)
    head += bytes(_ACT_CODES[a] for a in params.activations)
    return head + params.flat().astype("<f8").tobytes()


def params_from_bytes(blob: bytes) -> MlpParams:
    if blob[:4] != _MAGIC:
        raise ValueError("not an MLP snapshot")
    (n,) = struct.unpack_from("<I", blob, 4)
    sizes = struct.unpack_from(f"<{n}I", blob, 8)
    off = 8 + 4 * n
    acts = tuple(ACTIVATIONS[c] for c in blob[off:off + n - 1])
    off += n - 1
    theta = np.frombuffer(blob[off:], dtype="<f8").astype(np.float64)
    skeleton = MlpParams(
        sizes, acts,
        [np.zeros((o, i)) for i, o in zip(sizes[:-1], sizes[1:])],
        [np.zeros(o) for o in sizes[1:]],
    )
    if theta.size != skeleton.n_params:
        raise ValueError(f"snapshot holds {theta.size} floats, expected {skeleton.n_params}")
    return skeleton.with_flat(theta)
