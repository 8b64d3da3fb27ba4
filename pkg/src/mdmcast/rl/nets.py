"""Small MLPs with hand-written backprop for the actor and critic.

The policy head emits a softmax over the action list; the value head a
single scalar. Hidden layers use tanh; hidden weights draw uniformly
scaled by fan-in and output layers start at zero, so a fresh actor is
the uniform policy and a fresh critic the zero function.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg.blas import dger, sger

try:
    # single-sample matvec/rank-1 updates are memory bound; a threaded
    # BLAS pool only adds per-call sync cost (measured ~30x slower)
    from threadpoolctl import threadpool_limits
    threadpool_limits(limits=1, user_api="blas")
except ImportError:  # pragma: no cover
    pass


class NetError(RuntimeError):
    pass


def _ger(dtype):
    return dger if dtype == np.float64 else sger


class MLPParams:
    """Layer list of (W, b) arrays; W has shape (fan_in, fan_out)."""

    def __init__(self, layers):
        self.layers = [(np.asarray(W), np.asarray(b)) for W, b in layers]

    @property
    def dtype(self):
        return self.layers[0][0].dtype

    @property
    def sizes(self):
        dims = [self.layers[0][0].shape[0]]
        dims += [W.shape[1] for W, _ in self.layers]
        return tuple(dims)

    def copy(self):
        return MLPParams([(W.copy(), b.copy()) for W, b in self.layers])

    def is_finite(self):
        return all(np.isfinite(W).all() and np.isfinite(b).all()
                   for W, b in self.layers)

    def add_scaled(self, grads, scale):
        """In-place params += scale * grads (grads from a backward pass)."""
        for (W, b), (dW, db) in zip(self.layers, grads):
            W += scale * dW
            b += scale * db

    def flat_values(self):
        """Row-major parameter vector (checkpoint order)."""
        parts = []
        for W, b in self.layers:
            parts.append(W.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    @classmethod
    def from_flat(cls, sizes, values, dtype=np.float64):
        layers = []
        pos = 0
        values = np.asarray(values, dtype=dtype)
        for a, b in zip(sizes[:-1], sizes[1:]):
            W = values[pos:pos + a * b].reshape(a, b).copy()
            pos += a * b
            bias = values[pos:pos + b].copy()
            pos += b
            layers.append((W, bias))
        if pos != values.size:
            raise NetError("parameter vector length does not match sizes")
        return cls(layers)


def init_mlp(sizes, rng, dtype=np.float64, zero_output=True):
    """Uniform fan-in init for hidden layers, zeros for the output layer."""
    layers = []
    last = len(sizes) - 2
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        if i == last and zero_output:
            W = np.zeros((a, b), dtype=dtype)
        else:
            bound = 1.0 / np.sqrt(a)
            W = rng.uniform(-bound, bound, size=(a, b)).astype(dtype)
        layers.append((W, np.zeros(b, dtype=dtype)))
    return MLPParams(layers)


def mlp_forward(params, x):
    """Raw network output plus per-layer inputs for backprop."""
    h = np.asarray(x, dtype=params.dtype)
    inputs = [h]
    n = len(params.layers)
    for i, (W, b) in enumerate(params.layers):
        z = h @ W + b
        h = z if i == n - 1 else np.tanh(z)
        if i < n - 1:
            inputs.append(h)
    return h, inputs


def mlp_backward(params, inputs, dout):
    """Gradients of sum(dout * output) w.r.t. every layer's (W, b)."""
    grads = [None] * len(params.layers)
    delta = np.asarray(dout, dtype=params.dtype)
    for i in range(len(params.layers) - 1, -1, -1):
        W, _ = params.layers[i]
        h_in = inputs[i]
        grads[i] = (np.outer(h_in, delta), delta)
        if i > 0:
            delta = (W @ delta) * (1.0 - h_in * h_in)
    return grads


def mlp_backward_update(params, inputs, dout, scale):
    """Fused backward pass and in-place update: params += scale * grad.

    Equivalent to mlp_backward followed by add_scaled, but applies each
    layer's rank-1 weight update through BLAS without materializing the
    gradient. The backpropagated delta is computed before the layer's
    weights change.
    """
    ger = _ger(params.dtype)
    delta = np.ascontiguousarray(dout, dtype=params.dtype)
    for i in range(len(params.layers) - 1, -1, -1):
        W, b = params.layers[i]
        h_in = inputs[i]
        if i > 0:
            next_delta = (W @ delta) * (1.0 - h_in * h_in)
        # W is C-ordered (fan_in, fan_out): its transpose is the
        # F-ordered view BLAS updates in place
        ger(scale, delta, h_in, a=W.T, overwrite_x=0, overwrite_y=0,
            overwrite_a=1)
        b += scale * delta
        if i > 0:
            delta = next_delta


def softmax(logits):
    z = logits - np.max(logits)
    e = np.exp(z)
    return e / e.sum()


def actor_forward(params, x):
    """Action probabilities; strictly positive and summing to one."""
    logits, _ = mlp_forward(params, x)
    probs = softmax(logits)
    if not np.isfinite(probs).all():
        raise NetError("actor produced non-finite probabilities")
    return probs


def actor_log_prob_grad(params, x, action):
    """(log pi(a|x), gradient of log pi(a|x) w.r.t. params)."""
    logits, inputs = mlp_forward(params, x)
    probs = softmax(logits)
    if not np.isfinite(probs).all():
        raise NetError("actor produced non-finite probabilities")
    dlogits = -probs
    dlogits[action] += 1.0
    grads = mlp_backward(params, inputs, dlogits)
    return float(np.log(probs[action])), grads


def critic_forward(params, x):
    """Scalar state value."""
    out, _ = mlp_forward(params, x)
    v = float(out[0])
    if not np.isfinite(v):
        raise NetError("critic produced a non-finite value")
    return v


def critic_value_grad(params, x):
    """(V(x), gradient of V w.r.t. params)."""
    out, inputs = mlp_forward(params, x)
    v = float(out[0])
    if not np.isfinite(v):
        raise NetError("critic produced a non-finite value")
    grads = mlp_backward(params, inputs, np.ones(1, dtype=params.dtype))
    return v, grads
