"""Dense feed-forward networks in plain numpy.

Everything here runs in float64. A network is a chain of affine layers, each
followed by ELU or identity. ``forward`` records a tape that ``backward``
consumes to produce exact reverse-mode gradients.

Weight initialisation is fan-in scaled uniform:

    W[i, j] ~ U(-bound, bound),  bound = sqrt(6 / fan_in)

with biases set to zero. Draws come from ``numpy.random.default_rng([seed,
stream])`` (PCG64), one stream per parameter store, layers drawn in order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

ACTIVATIONS = ("elu", "identity")


class ShapeError(ValueError):
    """Incompatible layer or input dimensions."""


class NumericError(FloatingPointError):
    """Non-finite values where finite ones are required."""


class TapeError(RuntimeError):
    """Backward pass requested without a matching forward pass."""


@dataclass(frozen=True)
class LayerSpec:
    input_dim: int
    output_dim: int
    activation: str = "elu"

    def __post_init__(self):
        if self.input_dim <= 0 or self.output_dim <= 0:
            raise ShapeError(f"layer dims must be positive, got {self.input_dim}->{self.output_dim}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


def init_bound(fan_in: int) -> float:
    """Half-width of the uniform initialisation interval for a layer."""
    return math.sqrt(6.0 / fan_in)


@dataclass
class ParamStore:
    """Weights and biases of one layer chain.

    ``weights[k]`` has shape (output_dim, input_dim); ``biases[k]`` has shape
    (output_dim,).
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]
    seed: int = 0
    stream: int = 0

    @property
    def specs(self) -> list[LayerSpec]:
        return [LayerSpec(W.shape[1], W.shape[0], a) for W, a in zip(self.weights, self.activations)]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    def weight_flags(self) -> list[bool]:
        return [True, False] * len(self.weights)

    def copy(self) -> "ParamStore":
        return ParamStore(
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
            list(self.activations),
            self.seed,
            self.stream,
        )


@dataclass
class GradStore:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out


@dataclass
class Tape:
    """Activations cached by ``forward`` for one batch."""

    params: ParamStore
    inputs: list[np.ndarray] = field(default_factory=list)
    preacts: list[np.ndarray] = field(default_factory=list)


def check_chain(specs: Sequence[LayerSpec]) -> None:
    if not specs:
        raise ShapeError("at least one layer is required")
    for k in range(1, len(specs)):
        if specs[k - 1].output_dim != specs[k].input_dim:
            raise ShapeError(
                f"layer {k - 1} emits {specs[k - 1].output_dim} features "
                f"but layer {k} expects {specs[k].input_dim}"
            )


def init_params(specs: Sequence[LayerSpec], seed: int, stream: int = 0) -> ParamStore:
    """Initialise a layer chain reproducibly from ``(seed, stream)``."""
    specs = [s if isinstance(s, LayerSpec) else LayerSpec(*s) for s in specs]
    check_chain(specs)
    rng = np.random.default_rng([int(seed), int(stream)])
    weights, biases = [], []
    for s in specs:
        bound = init_bound(s.input_dim)
        weights.append(rng.uniform(-bound, bound, size=(s.output_dim, s.input_dim)))
        biases.append(np.zeros(s.output_dim))
    return ParamStore(weights, biases, [s.activation for s in specs], int(seed), int(stream))


def _elu(z):
    return np.where(z > 0, z, np.expm1(np.minimum(z, 0.0)))


def _elu_grad(z):
    return np.where(z > 0, 1.0, np.exp(np.minimum(z, 0.0)))


def forward(params: ParamStore, X: np.ndarray, record: bool = True) -> tuple[np.ndarray, Tape | None]:
    """Evaluate the chain on the rows of ``X``.

    Returns the (n, output_dim) output and, when ``record`` is set, the tape
    needed by :func:`backward`.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.input_dim:
        raise ShapeError(f"expected input of shape (n, {params.input_dim}), got {X.shape}")
    tape = Tape(params) if record else None
    h = X
    for W, b, act in zip(params.weights, params.biases, params.activations):
        z = h @ W.T + b
        if tape is not None:
            tape.inputs.append(h)
            tape.preacts.append(z)
        h = _elu(z) if act == "elu" else z
    return h, tape


def backward(tape: Tape | None, upstream: np.ndarray) -> tuple[GradStore, np.ndarray]:
    """Back-propagate ``upstream`` (dL/d output, shape (n, k)) through the tape.

    Returns parameter gradients and dL/d input.
    """
    if tape is None or not tape.inputs:
        raise TapeError("backward() needs the tape of a recorded forward pass")
    params = tape.params
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != tape.preacts[-1].shape:
        raise ShapeError(f"upstream gradient shape {g.shape} != output shape {tape.preacts[-1].shape}")
    n_layers = len(params.weights)
    dW = [None] * n_layers
    db = [None] * n_layers
    for k in reversed(range(n_layers)):
        if params.activations[k] == "elu":
            g = g * _elu_grad(tape.preacts[k])
        dW[k] = g.T @ tape.inputs[k]
        db[k] = g.sum(axis=0)
        g = g @ params.weights[k]
    return GradStore(dW, db), g


def log_sigmoid(z):
    """log(sigmoid(z)) without overflow; works on scalars and arrays."""
    z = np.asarray(z, dtype=np.float64)
    # log1p keeps full relative precision in the saturated tail
    return np.where(z >= 0, -np.log1p(np.exp(-np.abs(z))), z - np.log1p(np.exp(-np.abs(z))))


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    # exp(-|z|) never overflows
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def bce_with_logits(logit, label):
    """Binary cross-entropy of ``sigmoid(logit)`` against a 0/1 label."""
    logit = np.asarray(logit, dtype=np.float64)
    label = np.asarray(label, dtype=np.float64)
    return -(label * log_sigmoid(logit) + (1.0 - label) * log_sigmoid(-logit))


@dataclass
class OptimizerState:
    """Adaptive-moment (Adam) state with coupled L2 on weight matrices.

    Update for each array ``p`` with gradient ``g``:

        g <- g + l2 * p                      (weights only)
        m <- beta1 * m + (1 - beta1) * g
        v <- beta2 * v + (1 - beta2) * g**2
        p <- p - lr * m_hat / (sqrt(v_hat) + eps)

    with bias-corrected ``m_hat = m / (1 - beta1**t)`` and
    ``v_hat = v / (1 - beta2**t)``. ``end_epoch`` multiplies ``lr`` by ``decay``.
    """

    lr: float = 1e-3
    decay: float = 1.0
    l2: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] | None = None
    v: list[np.ndarray] | None = None

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must lie in (0, 1]")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")

    def end_epoch(self) -> None:
        self.lr *= self.decay


def optimizer_step(params, grads, state: OptimizerState):
    """Apply one Adam step in place. ``params``/``grads`` expose ``arrays()``."""
    p_arrays = params.arrays()
    g_arrays = grads.arrays() if hasattr(grads, "arrays") else list(grads)
    flags = params.weight_flags()
    if len(p_arrays) != len(g_arrays):
        raise ShapeError("parameter and gradient stores differ in length")
    for p, g in zip(p_arrays, g_arrays):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient; parameters left unchanged")
    if state.m is None:
        state.m = [np.zeros_like(p) for p in p_arrays]
        state.v = [np.zeros_like(p) for p in p_arrays]
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for p, g, is_w, m, v in zip(p_arrays, g_arrays, flags, state.m, state.v):
        if is_w and state.l2:
            g = g + state.l2 * p
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


def finite_diff_check(
    loss_fn: Callable,
    params,
    eps: float = 1e-4,
    floor: float = 1e-12,
) -> float:
    """Worst relative gap between analytic and central-difference gradients.

    ``loss_fn(params)`` must return ``(value, grads)`` where ``grads`` matches
    ``params.arrays()`` element for element. Every scalar parameter is
    perturbed by ``+-eps``. For each parameter array the error is
    ``||analytic - numeric|| / max(||analytic|| + ||numeric||, floor)``
    (Euclidean norms); the maximum over arrays is returned.

    Array norms rather than single entries keep one ELU kink crossing (a
    pre-activation within ``eps`` of zero) from dominating the result.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    _, grads = loss_fn(params)
    g_arrays = grads.arrays() if hasattr(grads, "arrays") else list(grads)
    g_arrays = [np.array(g, copy=True) for g in g_arrays]
    worst = 0.0
    for p, g in zip(params.arrays(), g_arrays):
        flat = p.reshape(-1)
        numeric = np.empty(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            plus = loss_fn(params)[0]
            flat[i] = orig - eps
            minus = loss_fn(params)[0]
            flat[i] = orig
            numeric[i] = (plus - minus) / (2.0 * eps)
        analytic = g.reshape(-1)
        denom = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), floor)
        worst = max(worst, float(np.linalg.norm(analytic - numeric) / denom))
    return worst
