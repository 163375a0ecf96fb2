"""Minimal dense-network core: explicit forward/backward passes and Adam.

Layers hold plain numpy arrays and the backward pass is written out by hand,
so gradients are exact reverse-mode derivatives that can be checked against
finite differences. Weights may carry leading batch dimensions: a layer with
``weights`` of shape (K, out, in) and inputs of shape (K, n, in) evaluates K
independently-parameterized networks in one call, which is how a batch of
latent-generated networks is trained efficiently.

All training math is float64; inference may run on float32 arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, TapeReuseError


# ---------------------------------------------------------------------------
# activations


@dataclass(frozen=True)
class Activation:
    """Pointwise activation: one of sine(omega0), relu, leaky_relu(slope), linear."""

    kind: str
    param: float = 0.0

    def apply(self, z: np.ndarray) -> np.ndarray:
        if self.kind == "sine":
            return np.sin(self.param * z)
        if self.kind == "relu":
            return np.maximum(z, 0.0)
        if self.kind == "leaky_relu":
            return np.where(z > 0.0, z, self.param * z)
        if self.kind == "linear":
            return z
        raise ValueError(f"unknown activation {self.kind!r}")

    def deriv(self, z: np.ndarray) -> np.ndarray | float:
        """d(apply)/dz evaluated at the pre-activation z."""
        if self.kind == "sine":
            return self.param * np.cos(self.param * z)
        if self.kind == "relu":
            return (z > 0.0).astype(z.dtype)
        if self.kind == "leaky_relu":
            return np.where(z > 0.0, 1.0, self.param)
        if self.kind == "linear":
            return 1.0
        raise ValueError(f"unknown activation {self.kind!r}")


def sine(omega0: float = 30.0) -> Activation:
    if omega0 <= 0.0:
        raise ValueError("omega0 must be positive")
    return Activation("sine", omega0)


def relu() -> Activation:
    return Activation("relu")


def leaky_relu(slope: float = 0.1) -> Activation:
    return Activation("leaky_relu", slope)


def linear() -> Activation:
    return Activation("linear")


# ---------------------------------------------------------------------------
# layers


@dataclass
class DenseLayer:
    """Fully connected layer y = act(x @ W^T + b).

    ``weights`` has shape (..., out, in) and ``biases`` (..., out); leading
    dimensions, when present, index a stack of independent parameter sets.
    """

    weights: np.ndarray
    biases: np.ndarray
    activation: Activation

    def __post_init__(self):
        w, b = self.weights, self.biases
        if w.ndim < 2:
            raise ValueError("weights must have at least 2 dimensions")
        if b.shape != w.shape[:-1]:
            raise ValueError(f"bias shape {b.shape} does not match weights {w.shape}")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[-1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[-2]


def param_count(layers) -> int:
    """Total number of scalars across all layer weights and biases."""
    return int(sum(l.weights.size + l.biases.size for l in layers))


class Tape:
    """Per-call cache of layer inputs and pre-activations for one forward pass.

    A tape is filled by :func:`forward` and consumed exactly once by the
    matching :func:`backward`.
    """

    def __init__(self):
        self.inputs: list[np.ndarray] = []
        self.preacts: list[np.ndarray] = []
        self.consumed = False
        self.promoted_1d = False

    def record(self, x: np.ndarray, z: np.ndarray) -> None:
        self.inputs.append(x)
        self.preacts.append(z)


def _affine(x: np.ndarray, layer: DenseLayer) -> np.ndarray:
    w, b = layer.weights, layer.biases
    if w.ndim == 2:
        return x @ w.T + b
    if x.ndim != w.ndim:
        raise ValueError(
            f"stacked weights of ndim {w.ndim} need inputs of the same ndim, "
            f"got {x.ndim}"
        )
    return np.matmul(x, w.swapaxes(-1, -2)) + b[..., None, :]


def forward(layers, x, tape: Tape | None = None) -> np.ndarray:
    """Evaluate the layer stack on input x, optionally recording a tape.

    x has shape (..., n, in) matching the first layer; a bare (in,) vector is
    accepted and returns a bare output vector.
    """
    x = np.asarray(x)
    promoted = x.ndim == 1
    if promoted:
        x = x[None, :]
    if tape is not None:
        if tape.inputs:
            raise TapeReuseError("tape already holds a recorded forward pass")
        tape.promoted_1d = promoted
    for layer in layers:
        if x.shape[-1] != layer.in_dim:
            raise ValueError(
                f"input dim {x.shape[-1]} does not match layer in_dim {layer.in_dim}"
            )
        z = _affine(x, layer)
        if tape is not None:
            tape.record(x, z)
        x = layer.activation.apply(z)
    return x[0] if promoted else x


def backward(layers, tape: Tape, output_grad, with_param_grads: bool = True):
    """Exact reverse-mode gradients for a recorded forward pass.

    Returns ``(param_grads, input_grad)`` where ``param_grads`` is a list of
    (dW, db) pairs aligned with ``layers`` (or None entries when
    ``with_param_grads`` is false). The tape is consumed and cannot be
    reused.
    """
    if tape.consumed:
        raise TapeReuseError("tape was already consumed by a backward pass")
    if len(tape.inputs) != len(layers):
        raise ValueError("tape does not match the layer stack")
    tape.consumed = True

    grad = np.asarray(output_grad)
    if tape.promoted_1d and grad.ndim == 1:
        grad = grad[None, :]
    param_grads: list[tuple[np.ndarray, np.ndarray] | None] = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        layer = layers[i]
        x, z = tape.inputs[i], tape.preacts[i]
        dz = grad * layer.activation.deriv(z)
        if with_param_grads:
            if layer.weights.ndim == 2 and dz.ndim == 3:
                raise ValueError("shared weights with stacked inputs are unsupported")
            dw = np.matmul(dz.swapaxes(-1, -2), x)
            db = dz.sum(axis=-2)
            param_grads[i] = (dw, db)
        grad = np.matmul(dz, layer.weights)
    if tape.promoted_1d:
        grad = grad[0]
    return param_grads, grad


# ---------------------------------------------------------------------------
# initialization

SIREN_OMEGA0 = 30.0


def siren_layer_init(rng: np.random.Generator, out_dim: int, in_dim: int,
                     first: bool, omega0: float = SIREN_OMEGA0):
    """Standard sine-network initialization.

    First layer U(-1/in, 1/in); deeper layers U(-sqrt(6/in)/omega0, ...).
    Biases follow the usual U(-1/sqrt(in), 1/sqrt(in)) dense-layer default.
    """
    bound = (1.0 / in_dim) if first else (np.sqrt(6.0 / in_dim) / omega0)
    w = rng.uniform(-bound, bound, size=(out_dim, in_dim))
    b = rng.uniform(-1.0, 1.0, size=out_dim) / np.sqrt(in_dim)
    return w, b


def kaiming_uniform_init(rng: np.random.Generator, out_dim: int, in_dim: int,
                         slope: float = 0.0):
    """He-style uniform init for (leaky-)ReLU layers."""
    gain = np.sqrt(2.0 / (1.0 + slope * slope))
    bound = gain * np.sqrt(3.0 / in_dim)
    w = rng.uniform(-bound, bound, size=(out_dim, in_dim))
    b = rng.uniform(-1.0, 1.0, size=out_dim) / np.sqrt(in_dim)
    return w, b


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    """Bias-corrected Adam accumulators for a fixed list of parameter arrays."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params, lr: float = 1e-4, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
        return state


def adam_step(state: AdamState, params, grads):
    """One in-place Adam update over aligned parameter/gradient lists.

    Raises :class:`NumericalError` when any gradient contains NaN so a
    training loop can halt with diagnostics instead of corrupting the model.
    """
    if len(params) != len(state.m):
        raise ValueError("parameter list does not match optimizer state")
    for i, g in enumerate(grads):
        if np.isnan(g).any():
            raise NumericalError(
                f"NaN gradient in parameter {i} (shape {np.shape(g)})"
            )
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params
