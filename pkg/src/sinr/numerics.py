"""Dense MLP numerics: forward/backward passes, descent updates, gradient checking.

All arrays are float64 C-order numpy arrays. A weight matrix for layer l has
shape (width[l+1], width[l]): row index = destination neuron, column index =
source neuron. A batch of inputs has shape (n, width[0]); activations flow as
(n, width[l]) row batches, so each layer computes a @ W.T + b.

The loss used throughout is the mean over the batch of squared residual
norms, L = (1/n) * sum_i ||f(x_i) - y_i||^2, i.e. the summed squared error
rescaled by the batch size so learning rates are comparable across batch
sizes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, DivergenceError, StructuralError


class ActivationKind(enum.Enum):
    """Hidden-layer nonlinearity. The output layer is always identity."""

    RELU = "relu"
    SINE = "sine"
    IDENTITY = "identity"


def _apply(kind: ActivationKind, s: np.ndarray) -> np.ndarray:
    if kind is ActivationKind.RELU:
        return np.maximum(s, 0.0)
    if kind is ActivationKind.SINE:
        return np.sin(s)
    return s


def _derivative(kind: ActivationKind, s: np.ndarray) -> np.ndarray:
    # ReLU' at exactly 0 is 0 (subgradient convention).
    if kind is ActivationKind.RELU:
        return (s > 0.0).astype(np.float64)
    if kind is ActivationKind.SINE:
        return np.cos(s)
    return np.ones_like(s)


@dataclass
class ParameterSet:
    """Weights and biases of an MLP, one (W, b) pair per layer.

    weights[l] has shape (width[l+1], width[l]); biases[l] has shape
    (width[l+1],). Values are float64.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self) -> None:
        self.weights = [np.ascontiguousarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.ascontiguousarray(b, dtype=np.float64) for b in self.biases]
        if len(self.weights) != len(self.biases):
            raise StructuralError(
                f"{len(self.weights)} weight matrices but {len(self.biases)} bias vectors"
            )
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise StructuralError(
                    f"layer {l + 1}: weight shape {w.shape} incompatible with bias shape {b.shape}"
                )

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    def count(self) -> int:
        """Total number of scalar parameters."""
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def copy(self) -> "ParameterSet":
        return ParameterSet([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flat(self) -> np.ndarray:
        """Canonical flat order: for each layer, W row-major then b."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    @staticmethod
    def from_flat(flat: np.ndarray, shapes: list[tuple[int, int]]) -> "ParameterSet":
        """Inverse of flat() given per-layer weight shapes (rows, cols)."""
        weights, biases = [], []
        pos = 0
        for rows, cols in shapes:
            weights.append(flat[pos : pos + rows * cols].reshape(rows, cols).copy())
            pos += rows * cols
            biases.append(flat[pos : pos + rows].copy())
            pos += rows
        if pos != flat.size:
            raise StructuralError(f"flat vector has {flat.size} entries, shapes need {pos}")
        return ParameterSet(weights, biases)

    def congruent_with(self, other: "ParameterSet") -> bool:
        return len(self.weights) == len(other.weights) and all(
            a.shape == b.shape for a, b in zip(self.weights, other.weights)
        ) and all(a.shape == b.shape for a, b in zip(self.biases, other.biases))


@dataclass
class ForwardTrace:
    """Per-layer pre-activations and activations for one input batch.

    pre_acts[l] and acts[l] correspond to layer l+1 of the network; inputs
    play the role of activations of layer 0.
    """

    activation: ActivationKind
    params: ParameterSet
    inputs: np.ndarray
    pre_acts: list[np.ndarray] = field(default_factory=list)
    acts: list[np.ndarray] = field(default_factory=list)

    @property
    def outputs(self) -> np.ndarray:
        return self.acts[-1]

    @property
    def batch_size(self) -> int:
        return self.inputs.shape[0]


def forward(activation: ActivationKind, params: ParameterSet, inputs: np.ndarray) -> ForwardTrace:
    """Run a batch through the MLP, recording every layer.

    inputs must have shape (n, width[0]) where width[0] is the column count
    of the first weight matrix (the post-encoding width when a Fourier
    feature encoding is in use; encoding happens before this call).
    """
    inputs = np.ascontiguousarray(inputs, dtype=np.float64)
    if inputs.ndim != 2:
        raise StructuralError(f"inputs must be a 2-D batch, got shape {inputs.shape}")
    if inputs.shape[1] != params.weights[0].shape[1]:
        raise StructuralError(
            f"layer 1 expects input width {params.weights[0].shape[1]}, got {inputs.shape[1]}"
        )
    trace = ForwardTrace(activation=activation, params=params, inputs=inputs)
    a = inputs
    last = params.num_layers - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        if a.shape[1] != w.shape[1]:
            raise StructuralError(
                f"layer {l + 1} expects input width {w.shape[1]}, got {a.shape[1]}"
            )
        s = a @ w.T + b
        a = _apply(activation, s) if l != last else s
        trace.pre_acts.append(s)
        trace.acts.append(a)
    if not np.isfinite(a).all():
        raise DivergenceError("forward pass produced non-finite outputs")
    return trace


def loss(outputs: np.ndarray, targets: np.ndarray) -> float:
    """Mean over the batch of squared residual norms."""
    if outputs.shape != targets.shape:
        raise StructuralError(f"outputs {outputs.shape} vs targets {targets.shape}")
    d = outputs - targets
    # overflow here is how divergence shows up; callers test for finiteness
    with np.errstate(over="ignore"):
        return float(np.sum(d * d) / outputs.shape[0])


def backward(trace: ForwardTrace, targets: np.ndarray) -> ParameterSet:
    """Gradients of loss() with respect to every weight and bias.

    Returns a ParameterSet congruent with trace.params holding dL/dW and
    dL/db for the batch recorded in the trace.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != trace.outputs.shape:
        raise StructuralError(
            f"targets shape {targets.shape} does not match outputs {trace.outputs.shape}"
        )
    n = trace.batch_size
    params = trace.params
    num = params.num_layers
    w_grads: list[np.ndarray] = [None] * num  # type: ignore[list-item]
    b_grads: list[np.ndarray] = [None] * num  # type: ignore[list-item]

    # Output layer is identity, so dL/ds^L = dL/da^L.
    delta = (2.0 / n) * (trace.outputs - targets)
    for l in range(num - 1, -1, -1):
        a_prev = trace.inputs if l == 0 else trace.acts[l - 1]
        w_grads[l] = delta.T @ a_prev
        b_grads[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ params.weights[l]) * _derivative(
                trace.activation, trace.pre_acts[l - 1]
            )
    return ParameterSet(w_grads, b_grads)


def sgd_step(params: ParameterSet, grads: ParameterSet, eta: float) -> ParameterSet:
    """One plain gradient-descent update: params - eta * grads, elementwise."""
    if not params.congruent_with(grads):
        raise StructuralError("gradients are not congruent with parameters")
    for l, (gw, gb) in enumerate(zip(grads.weights, grads.biases)):
        if not (np.isfinite(gw).all() and np.isfinite(gb).all()):
            peak = max(
                np.abs(gw[np.isfinite(gw)]).max(initial=0.0),
                np.abs(gb[np.isfinite(gb)]).max(initial=0.0),
            )
            raise DivergenceError(
                f"non-finite gradient in layer {l + 1} (max finite |grad| = {peak:g})"
            )
    return ParameterSet(
        [w - eta * gw for w, gw in zip(params.weights, grads.weights)],
        [b - eta * gb for b, gb in zip(params.biases, grads.biases)],
    )


@dataclass
class GradCheckReport:
    max_rel_error: float
    param_count: int
    tolerance: float
    passed: bool

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"gradcheck {status}: max relative error {self.max_rel_error:.3e} "
            f"over {self.param_count} parameters (tolerance {self.tolerance:g})"
        )


def gradcheck(
    activation: ActivationKind,
    params: ParameterSet,
    inputs: np.ndarray,
    targets: np.ndarray,
    tolerance: float,
    step: float = 1e-5,
) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    Every parameter is perturbed by +/- step and the loss difference quotient
    is compared to backward()'s output. Relative error for one parameter is
    |analytic - numeric| / max(|analytic|, |numeric|, 1). Failures are
    reported in the result, never raised.

    Only feasible for small networks; refuses more than 2000 parameters.
    """
    total = params.count()
    if total > 2000:
        raise ArgumentError(f"gradcheck limited to 2000 parameters, network has {total}")

    analytic = backward(forward(activation, params, inputs), targets).flat()
    flat = params.flat()
    shapes = [w.shape for w in params.weights]

    def loss_at(vec: np.ndarray) -> float:
        p = ParameterSet.from_flat(vec, shapes)
        return loss(forward(activation, p, inputs).outputs, targets)

    numeric = np.empty_like(flat)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + step
        up = loss_at(flat)
        flat[i] = saved - step
        down = loss_at(flat)
        flat[i] = saved
        numeric[i] = (up - down) / (2.0 * step)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    max_rel = float(np.max(np.abs(analytic - numeric) / denom)) if flat.size else 0.0
    return GradCheckReport(
        max_rel_error=max_rel,
        param_count=total,
        tolerance=tolerance,
        passed=max_rel < tolerance,
    )
