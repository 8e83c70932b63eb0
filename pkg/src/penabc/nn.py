"""A small dense feed-forward network engine in numpy.

Networks are described by an :class:`MlpSpec` and their weights are a plain
list of ``(W, b)`` pairs with ``W`` of shape (out, in).  Everything works on
batches: inputs are (n, in_dim) and outputs (n, out_dim).  All arithmetic is
float64.
"""

import copy
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

log = logging.getLogger(__name__)

RELU = "relu"
LINEAR = "linear"
ACTIVATIONS = (RELU, LINEAR)


@dataclass(frozen=True)
class Layer:
    in_dim: int
    out_dim: int
    activation: str = RELU

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError("layer dimensions must be positive")


@dataclass(frozen=True)
class MlpSpec:
    layers: tuple

    def __post_init__(self):
        layers = tuple(l if isinstance(l, Layer) else Layer(*l) for l in self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise ValueError("an MLP needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ValueError(
                    f"layer dims do not chain: out {prev.out_dim} -> in {nxt.in_dim}"
                )

    @classmethod
    def from_dims(cls, dims, hidden=RELU, output=LINEAR):
        """``from_dims([100, 55, 55, 25, 2])`` builds relu hidden layers and a linear head."""
        n = len(dims) - 1
        return cls(
            tuple(
                Layer(dims[i], dims[i + 1], output if i == n - 1 else hidden)
                for i in range(n)
            )
        )

    @property
    def in_dim(self):
        return self.layers[0].in_dim

    @property
    def out_dim(self):
        return self.layers[-1].out_dim


def count_weights(spec):
    """Number of trainable scalars (weights plus biases) of an MLP or PEN spec."""
    if hasattr(spec, "inner") and hasattr(spec, "outer"):
        return count_weights(spec.inner) + count_weights(spec.outer)
    return sum(l.in_dim * l.out_dim + l.out_dim for l in spec.layers)


def init_weights(spec, rng):
    """Glorot-uniform weights and zero biases."""
    weights = []
    for l in spec.layers:
        bound = math.sqrt(6.0 / (l.in_dim + l.out_dim))
        W = rng.uniform(-bound, bound, size=(l.out_dim, l.in_dim))
        weights.append((W, np.zeros(l.out_dim)))
    return weights


def _check_input(spec, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != spec.in_dim:
        raise ValueError(f"input has {x.shape[1]} features, network expects {spec.in_dim}")
    return x, single


def forward(spec, weights, x):
    """Forward pass.  Returns ``(output, cache)``.

    The cache holds each layer's input and post-activation output, which is
    all the backward pass needs (ReLU derivatives are read off the output).
    """
    h, single = _check_input(spec, x)
    inputs = []
    outputs = []
    for layer, (W, b) in zip(spec.layers, weights):
        inputs.append(h)
        if W.shape[1] == 1:
            # rank-1 product; broadcasting beats BLAS here
            z = h * W[:, 0]
        else:
            z = h @ W.T
        z += b
        if layer.activation == RELU:
            np.maximum(z, 0.0, out=z)
        outputs.append(z)
        h = z
    cache = {"inputs": inputs, "outputs": outputs, "single": single}
    return (h[0] if single else h), cache


def predict(spec, weights, x, chunk=None):
    """Forward pass without keeping a cache; optionally in row chunks."""
    x = np.asarray(x, dtype=float)
    if chunk is None or x.ndim == 1 or x.shape[0] <= chunk:
        return forward(spec, weights, x)[0]
    return np.concatenate(
        [forward(spec, weights, x[i : i + chunk])[0] for i in range(0, x.shape[0], chunk)]
    )


def backward(spec, weights, cache, grad_out, input_grad=True):
    """Backpropagate ``grad_out`` (dL/d output).

    Returns ``(grads, grad_input)`` with ``grads`` shaped like ``weights``;
    ``grad_input`` is ``None`` when ``input_grad=False``.
    """
    g = np.atleast_2d(np.asarray(grad_out, dtype=float))
    outputs = cache["outputs"]
    inputs = cache["inputs"]
    if g.shape != outputs[-1].shape:
        raise ValueError(f"grad_out shape {g.shape} != output shape {outputs[-1].shape}")
    grads = [None] * len(weights)
    owned = False
    for i in range(len(weights) - 1, -1, -1):
        if spec.layers[i].activation == RELU:
            if owned:
                np.multiply(g, outputs[i] > 0.0, out=g)
            else:
                g = g * (outputs[i] > 0.0)
        W = weights[i][0]
        grads[i] = (g.T @ inputs[i], g.sum(axis=0))
        if i == 0 and not input_grad:
            return grads, None
        g = g @ W
        owned = True
    if cache["single"]:
        g = g[0]
    return grads, g


def mse_loss(pred, target):
    """Mean over rows of the squared Euclidean error, and its gradient."""
    pred = np.atleast_2d(np.asarray(pred, dtype=float))
    target = np.atleast_2d(np.asarray(target, dtype=float))
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {target.shape}")
    diff = pred - target
    n = pred.shape[0]
    loss = float((diff**2).sum() / n)
    return loss, 2.0 * diff / n


# --------------------------------------------------------------------------
# parameter trees
# --------------------------------------------------------------------------


def leaves(params):
    """Flatten nested lists/tuples of arrays into a list of arrays (no copies)."""
    if isinstance(params, np.ndarray):
        return [params]
    if hasattr(params, "_fields") or isinstance(params, (list, tuple)):
        out = []
        for p in params:
            out.extend(leaves(p))
        return out
    raise TypeError(f"cannot flatten {type(params).__name__}")


# --------------------------------------------------------------------------
# Adam
# --------------------------------------------------------------------------

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        ls = leaves(params)
        return cls([np.zeros_like(p) for p in ls], [np.zeros_like(p) for p in ls], 0)


def clip_by_global_norm(grads, max_norm):
    """Rescale ``grads`` in place so their joint Euclidean norm is at most ``max_norm``."""
    gs = leaves(grads)
    norm = math.sqrt(math.fsum(float((g * g).sum()) for g in gs))
    if norm > max_norm:
        for g in gs:
            g *= max_norm / norm
    return norm


def adam_step(params, grads, state, lr):
    """One Adam update, applied in place to the arrays of ``params``.

    Returns ``(params, state)`` for convenience.
    """
    ps = leaves(params)
    gs = leaves(grads)
    if len(ps) != len(gs) or len(ps) != len(state.m):
        raise ValueError("params, grads and optimiser state do not line up")
    state.t += 1
    c1 = 1.0 - ADAM_BETA1**state.t
    c2 = 1.0 - ADAM_BETA2**state.t
    for p, g, m, v in zip(ps, gs, state.m, state.v):
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
    return params, state


# --------------------------------------------------------------------------
# training with snapshot early stopping
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 200
    learning_rate: float = 1e-3
    seed: int = 0
    clip_norm: Optional[float] = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ValueError("clip_norm must be positive")


@dataclass
class TrainResult:
    weights: object
    best_epoch: int
    history: list = field(default_factory=list)  # (epoch, train_mse, eval_mse)

    @property
    def best_eval(self):
        return self.history[self.best_epoch - 1][2]


class TrainingDiverged(RuntimeError):
    pass


class MlpNetwork:
    """Adapter giving an MLP the interface :func:`train` expects."""

    def __init__(self, spec):
        self.spec = spec

    def init(self, rng):
        return init_weights(self.spec, rng)

    def predict(self, params, inputs, chunk=4096):
        return predict(self.spec, params, inputs, chunk=chunk)

    def loss_and_grad(self, params, inputs, targets):
        pred, cache = forward(self.spec, params, inputs)
        loss, g = mse_loss(pred, targets)
        grads, _ = backward(self.spec, params, cache, g)
        return loss, grads


def _take(inputs, idx):
    if isinstance(inputs, tuple):
        return tuple(None if a is None else a[idx] for a in inputs)
    return inputs[idx]


def _n_rows(inputs):
    return (inputs[0] if isinstance(inputs, tuple) else inputs).shape[0]


def evaluate(network, params, inputs, targets):
    pred = network.predict(params, inputs)
    return mse_loss(pred, targets)[0]


def train(network, train_inputs, train_targets, eval_inputs, eval_targets, cfg, params=None):
    """Minimise the mean squared error with Adam.

    Trains for ``cfg.epochs`` epochs, evaluates after each, and returns the
    weight snapshot with the lowest evaluation error.  ``network`` needs
    ``init(rng)``, ``predict(params, inputs)`` and
    ``loss_and_grad(params, inputs, targets)``; inputs may be an array or a
    tuple of arrays sharing the leading dimension.
    """
    n = _n_rows(train_inputs)
    if n == 0 or _n_rows(eval_inputs) == 0:
        raise ValueError("training and evaluation sets must be nonempty")
    train_targets = np.asarray(train_targets, dtype=float)
    eval_targets = np.asarray(eval_targets, dtype=float)
    rng = np.random.default_rng(cfg.seed)
    if params is None:
        params = network.init(rng)
    state = AdamState.zeros_like(params)
    best = None
    best_err = np.inf
    best_epoch = 0
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = network.loss_and_grad(
                params, _take(train_inputs, idx), train_targets[idx]
            )
            if not math.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite training loss at epoch {epoch}, batch starting {start}"
                )
            if cfg.clip_norm is not None:
                clip_by_global_norm(grads, cfg.clip_norm)
            adam_step(params, grads, state, cfg.learning_rate)
            total += loss * len(idx)
        eval_err = evaluate(network, params, eval_inputs, eval_targets)
        if not math.isfinite(eval_err):
            raise TrainingDiverged(f"non-finite evaluation error at epoch {epoch}")
        history.append((epoch, total / n, eval_err))
        log.debug("epoch %d train %.6g eval %.6g", epoch, total / n, eval_err)
        if eval_err < best_err:
            best_err = eval_err
            best_epoch = epoch
            best = copy.deepcopy(params)
    return TrainResult(best, best_epoch, history)
