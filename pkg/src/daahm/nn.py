"""Dense MLPs with hand-written backprop, Adam, soft target updates and a
finite-difference gradient checker. Everything is float64 numpy.

Weights are stored ``(fan_in, fan_out)`` so a batch ``x`` of shape
``(B, fan_in)`` maps through ``x @ W + b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

ACTIVATIONS = ("relu", "sigmoid", "identity")


class PoisonedUpdateError(FloatingPointError):
    """A gradient or loss went non-finite; the update was not applied."""


class Mlp:
    """Dense network whose parameters live in one flat float64 buffer.

    ``weights[i]`` and ``biases[i]`` are views into ``flat``, so optimizers
    and target blending can touch every parameter with a single vector op.
    """

    def __init__(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray],
                 activations: Sequence[str]):
        if not (len(weights) == len(biases) == len(activations)):
            raise ValueError("weights, biases and activations must have equal length")
        for i, (w, b, act) in enumerate(zip(weights, biases, activations)):
            w, b = np.asarray(w), np.asarray(b)
            if act not in ACTIVATIONS:
                raise ValueError(f"layer {i}: unknown activation {act!r}")
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: bias shape {b.shape} does not match weight {w.shape}")
            if i and np.shape(weights[i - 1])[1] != w.shape[0]:
                raise ValueError(f"layer {i}: input size {w.shape[0]} != previous output "
                                 f"{np.shape(weights[i - 1])[1]}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i}: non-finite parameters")
        self.activations = list(activations)
        total = sum(np.size(w) + np.size(b) for w, b in zip(weights, biases))
        self.flat = np.empty(total)
        self.weights, self.biases = [], []
        pos = 0
        for w, b in zip(weights, biases):
            w, b = np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64)
            wv = self.flat[pos:pos + w.size].reshape(w.shape)
            pos += w.size
            bv = self.flat[pos:pos + b.size]
            pos += b.size
            wv[...] = w
            bv[...] = b
            self.weights.append(wv)
            self.biases.append(bv)

    @property
    def sizes(self) -> list[int]:
        if not self.weights:
            return []
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def params(self) -> list[np.ndarray]:
        """``[W0, b0, W1, b1, ...]`` as views into ``flat``."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def flatten_grads(self, grads: Sequence[np.ndarray]) -> np.ndarray:
        """Pack gradients ordered like ``params()`` into the layout of ``flat``."""
        if not grads:
            return np.zeros(0)
        return np.concatenate([np.ravel(g) for g in grads])

    def copy(self) -> "Mlp":
        return Mlp(self.weights, self.biases, self.activations)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)[0]

    def __eq__(self, other):
        return (isinstance(other, Mlp) and self.activations == other.activations
                and self.sizes == other.sizes and np.array_equal(self.flat, other.flat))

    def __repr__(self):
        return f"Mlp(sizes={self.sizes}, activations={self.activations})"


@dataclass
class Cache:
    net_id: int
    inputs: list[np.ndarray]   # input to each layer
    pre: list[np.ndarray]      # pre-activation of each layer
    outputs: list[np.ndarray]  # post-activation output of each layer


def mlp_init(sizes: Sequence[int], activations: Sequence[str], seed=None) -> Mlp:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    if len(sizes) < 2:
        raise ValueError("need at least an input and an output size")
    if len(activations) != len(sizes) - 1:
        raise ValueError(f"expected {len(sizes) - 1} activations, got {len(activations)}")
    if any(int(s) < 1 for s in sizes):
        raise ValueError(f"layer sizes must be positive: {list(sizes)}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(weights, biases, list(activations))


def _activate(z, act):
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "sigmoid":
        # tanh form never overflows
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    return z


def forward(net: Mlp, x) -> tuple[np.ndarray, Cache]:
    """Forward pass over a single vector or a ``(B, in)`` batch."""
    x = np.asarray(x, dtype=np.float64)
    if net.weights and x.shape[-1] != net.weights[0].shape[0]:
        raise ValueError(f"input size {x.shape[-1]} != network input {net.weights[0].shape[0]}")
    inputs, pre, outputs = [], [], []
    h = x
    for w, b, act in zip(net.weights, net.biases, net.activations):
        inputs.append(h)
        z = h @ w + b
        pre.append(z)
        h = _activate(z, act)
        outputs.append(h)
    return h, Cache(id(net), inputs, pre, outputs)


def backward(net: Mlp, cache: Cache, dl_dy, dl_dz=None) -> tuple[list[np.ndarray], np.ndarray]:
    """Gradients of a scalar loss given ``dL/dy``.

    ``dl_dz`` optionally adds a loss term on the output layer's
    pre-activation. Returns ``(grads, dL/dx)`` with ``grads`` ordered like
    ``net.params()``; for batched input they are summed over the batch.
    """
    if cache.net_id != id(net) or len(cache.inputs) != len(net.weights):
        raise ValueError("cache does not belong to this network")
    g = np.asarray(dl_dy, dtype=np.float64)
    grads: list[np.ndarray] = [None] * (2 * len(net.weights))
    for i in range(len(net.weights) - 1, -1, -1):
        act, y = net.activations[i], cache.outputs[i]
        if g.shape != y.shape:
            raise ValueError(f"layer {i}: gradient shape {g.shape} != output shape {y.shape}")
        if act == "relu":
            g = g * (y > 0)
        elif act == "sigmoid":
            g = g * y * (1.0 - y)
        if dl_dz is not None and i == len(net.weights) - 1:
            g = g + dl_dz
        x = cache.inputs[i]
        if x.ndim == 1:
            grads[2 * i] = np.outer(x, g)
            grads[2 * i + 1] = g.copy()
        else:
            grads[2 * i] = x.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
        g = g @ net.weights[i].T
    return grads, g


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def apply(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """One bias-corrected Adam step, in place on ``params``."""
        if len(params) != len(grads):
            raise ValueError("params and grads differ in length")
        for p, g in zip(params, grads):
            if p.shape != g.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            if not np.all(np.isfinite(g)):
                raise PoisonedUpdateError("non-finite gradient; update aborted")
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.step += 1
        c1 = 1.0 - self.beta1 ** self.step
        c2 = 1.0 - self.beta2 ** self.step
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(net: Mlp, grads, opt: Adam) -> tuple[Mlp, Adam]:
    """Adam update of ``net`` in place; ``grads`` ordered like ``net.params()``."""
    for p, g in zip(net.params(), grads):
        if p.shape != np.shape(g):
            raise ValueError(f"gradient shape {np.shape(g)} != parameter shape {p.shape}")
    opt.apply([net.flat], [net.flatten_grads(grads)])
    return net, opt


def soft_update(target: Mlp, main: Mlp, tau: float) -> Mlp:
    """target <- tau * main + (1 - tau) * target, in place."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    if target.sizes != main.sizes:
        raise ValueError(f"target sizes {target.sizes} != main sizes {main.sizes}")
    if tau == 1.0:
        target.flat[...] = main.flat
    else:
        target.flat += tau * (main.flat - target.flat)
    return target


def finite_diff_check(net: Mlp, x, loss: Callable[[np.ndarray], tuple[float, np.ndarray]],
                      eps: float = 1e-5, grads=None) -> float:
    """Worst relative error between ``backward`` and central differences.

    ``loss(y)`` returns ``(L, dL/dy)``. ``grads`` overrides the analytic
    gradients (useful to check that a corrupted gradient is caught).
    Per-entry error is ``|analytic - numeric| / max(|numeric|, 1e-7)``, so a
    gradient doubled by mistake scores about 1.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    params = net.params()
    if not params:
        return 0.0
    if grads is None:
        y, cache = forward(net, x)
        grads, _ = backward(net, cache, loss(y)[1])
    worst = 0.0
    for p, g in zip(params, grads):
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + eps
            lp = loss(forward(net, x)[0])[0]
            p[idx] = orig - eps
            lm = loss(forward(net, x)[0])[0]
            p[idx] = orig
            num = (lp - lm) / (2.0 * eps)
            a = g[idx]
            worst = max(worst, abs(a - num) / max(abs(num), 1e-7))
    return worst


def squared_error_loss(target: np.ndarray):
    """``L(y) = 0.5 * ||y - target||^2`` in the ``(L, dL/dy)`` form used above."""
    def loss(y):
        d = y - target
        return 0.5 * float(np.dot(d, d)), d
    return loss


def gradcheck_suite(n_nets: int = 100, seed: int = 0, eps: float = 1e-5,
                    max_sizes: tuple[int, int, int] = (10, 64, 10)) -> list[float]:
    """Finite-difference check of random two-layer networks.

    Sizes are drawn up to ``max_sizes``, activations at random, biases
    non-zero so no unit sits exactly on a ReLU kink. Returns the worst
    relative error of each network.
    """
    rng = np.random.default_rng(seed)
    errors = []
    for _ in range(n_nets):
        sizes = [int(rng.integers(1, m + 1)) for m in max_sizes]
        acts = [ACTIVATIONS[i] for i in rng.integers(0, len(ACTIVATIONS), size=2)]
        net = mlp_init(sizes, acts, rng)
        for b in net.biases:
            b[...] = rng.normal(0.0, 0.5, size=b.shape)
        x = rng.normal(size=sizes[0])
        errors.append(finite_diff_check(net, x, squared_error_loss(rng.normal(size=sizes[-1])),
                                        eps))
    return errors
