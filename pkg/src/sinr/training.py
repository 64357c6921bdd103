"""Gradient-descent fitting, with optional parameter freezing.

Plain full-batch gradient descent in float64: params <- params - eta * grad.
No momentum, no adaptive scaling. The loss is the batch mean of squared
residual norms. A mask turns this into masked descent: frozen entries are
never touched arithmetically (updates go through boolean indexing), so they
stay bit-identical across any number of epochs, and the report's census
proves it after the fact.

Divergence policy: the first non-finite loss, activation, or gradient halts
training. The last finite parameter state is returned and the report carries
diverged=True plus a note; callers decide whether that is an error.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .codec import CoordinateDataset, RasterImage, ScalarGrid, grid_to_dataset, image_to_dataset
from .errors import ArgumentError, DivergenceError, StructuralError
from .model import (
    FunctionSpec,
    ModelFile,
    ParameterMask,
    Role,
    check_congruent,
    encode_coords,
    init_params,
    pinned_rng,
)
from .numerics import ParameterSet, backward, forward, loss, sgd_step


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for one training run.

    batch_size None means full batch. With a batch_size, the subset is drawn
    without replacement using the config seed: once up front, or per epoch
    when resample is set. The seed also initializes parameters in
    fit_secret. Losses are logged every log_every epochs (plus the last).
    """

    eta: float
    epochs: int
    batch_size: int | None = None
    resample: bool = False
    seed: int = 0
    log_every: int = 10

    def __post_init__(self) -> None:
        if not (self.eta > 0):
            raise ArgumentError(f"learning rate must be positive, got {self.eta}")
        if self.epochs < 1:
            raise ArgumentError(f"epoch count must be >= 1, got {self.epochs}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ArgumentError(f"batch size must be >= 1, got {self.batch_size}")
        if self.log_every < 1:
            raise ArgumentError(f"log cadence must be >= 1, got {self.log_every}")


@dataclass
class TrainReport:
    """Logged losses plus outcome flags for one run.

    curve holds (epoch, batch loss before that epoch's step) at the log
    cadence; final_loss is measured over the full dataset after the last
    step. frozen_changed is exactly 0 whenever a mask was supplied.
    """

    curve: list[tuple[int, float]] = field(default_factory=list)
    final_loss: float = math.nan
    epochs_run: int = 0
    wall_seconds: float = 0.0
    diverged: bool = False
    divergence_note: str = ""
    frozen_changed: int = 0
    trainable_changed: int = 0

    def summary(self) -> str:
        tag = "DIVERGED" if self.diverged else "ok"
        note = f" ({self.divergence_note})" if self.diverged else ""
        return (
            f"{tag}{note}: {self.epochs_run} epochs, final loss {self.final_loss:.6e}, "
            f"{self.wall_seconds:.1f}s, changed {self.trainable_changed} trainable / "
            f"{self.frozen_changed} frozen"
        )

    def curve_csv(self) -> str:
        lines = ["epoch,loss"]
        lines += [f"{epoch},{value!r}" for epoch, value in self.curve]
        return "\n".join(lines) + "\n"


def masked_step(
    params: ParameterSet, grads: ParameterSet, eta: float, mask: ParameterMask
) -> ParameterSet:
    """Descend only where the mask is True; frozen entries are copied untouched."""
    weights, biases = [], []
    for l in range(params.num_layers):
        mw, mb = mask.weights[l], mask.biases[l]
        gw, gb = grads.weights[l][mw], grads.biases[l][mb]
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
            raise DivergenceError(f"non-finite gradient in layer {l + 1}")
        w = params.weights[l].copy()
        b = params.biases[l].copy()
        w[mw] -= eta * gw
        b[mb] -= eta * gb
        weights.append(w)
        biases.append(b)
    return ParameterSet(weights, biases)


def _census(
    before: ParameterSet, after: ParameterSet, mask: ParameterMask | None
) -> tuple[int, int]:
    """(frozen_changed, trainable_changed) between two parameter states."""
    changed = before.flat() != after.flat()
    if mask is None:
        return 0, int(changed.sum())
    trainable = mask.flat()
    return int(changed[~trainable].sum()), int(changed[trainable].sum())


def _check_mask(mask: ParameterMask, params: ParameterSet) -> None:
    if len(mask.weights) != len(params.weights):
        raise StructuralError(
            f"mask has {len(mask.weights)} weight layers, parameters have "
            f"{len(params.weights)}"
        )
    for l, (mw, w) in enumerate(zip(mask.weights, params.weights)):
        if mw.shape != w.shape or mask.biases[l].shape != params.biases[l].shape:
            raise StructuralError(f"mask incongruent with parameters at layer {l + 1}")


def _descend(
    spec: FunctionSpec,
    params: ParameterSet,
    ds: CoordinateDataset,
    cfg: TrainConfig,
    mask: ParameterMask | None,
    verbose: bool,
) -> tuple[ParameterSet, TrainReport]:
    check_congruent(spec, params)
    if mask is not None:
        _check_mask(mask, params)
    encoded = encode_coords(spec, ds.coords)
    targets = ds.features
    if targets.shape[1] != spec.d_out:
        raise ArgumentError(
            f"dataset has {targets.shape[1]} feature channels, function outputs {spec.d_out}"
        )
    n = encoded.shape[0]
    k = cfg.batch_size
    if k is not None and k > n:
        raise ArgumentError(f"batch size {k} exceeds dataset size {n}")

    rng = pinned_rng(cfg.seed)
    fixed_idx = None
    if k is not None and k < n and not cfg.resample:
        fixed_idx = np.sort(rng.choice(n, size=k, replace=False))

    report = TrainReport()
    current = params
    started = time.perf_counter()
    try:
        for epoch in range(1, cfg.epochs + 1):
            if k is None or k >= n:
                bx, by = encoded, targets
            elif fixed_idx is not None:
                bx, by = encoded[fixed_idx], targets[fixed_idx]
            else:
                idx = np.sort(rng.choice(n, size=k, replace=False))
                bx, by = encoded[idx], targets[idx]

            trace = forward(spec.activation, current, bx)
            batch_loss = loss(trace.outputs, by)
            if not math.isfinite(batch_loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            if epoch % cfg.log_every == 0 or epoch == cfg.epochs:
                report.curve.append((epoch, batch_loss))
                if verbose:
                    print(f"epoch {epoch}/{cfg.epochs} loss {batch_loss:.6e}")
            grads = backward(trace, by)
            if mask is None:
                current = sgd_step(current, grads, cfg.eta)
            else:
                current = masked_step(current, grads, cfg.eta, mask)
            report.epochs_run = epoch
    except DivergenceError as exc:
        report.diverged = True
        report.divergence_note = str(exc)
        report.final_loss = report.curve[-1][1] if report.curve else math.nan
        if verbose:
            print(f"halted: {exc}")
    else:
        final_trace = forward(spec.activation, current, encoded)
        report.final_loss = loss(final_trace.outputs, targets)
    report.wall_seconds = time.perf_counter() - started
    report.frozen_changed, report.trainable_changed = _census(params, current, mask)
    return current, report


def fit(
    spec: FunctionSpec,
    params: ParameterSet,
    ds: CoordinateDataset,
    cfg: TrainConfig,
    verbose: bool = False,
) -> tuple[ParameterSet, TrainReport]:
    """Run unmasked gradient descent from the given parameters.

    The input encoding is applied once up front, so RFF projections cost
    nothing per epoch. Returns fresh parameters; the inputs are not mutated.
    """
    return _descend(spec, params, ds, cfg, mask=None, verbose=verbose)


def fit_masked(
    spec: FunctionSpec,
    params: ParameterSet,
    mask: ParameterMask,
    ds: CoordinateDataset,
    cfg: TrainConfig,
    verbose: bool = False,
) -> tuple[ParameterSet, TrainReport]:
    """Train a stego function while its embedded secret stays frozen."""
    return _descend(spec, params, ds, cfg, mask=mask, verbose=verbose)


def fit_secret(
    message: RasterImage | ScalarGrid,
    spec: FunctionSpec,
    cfg: TrainConfig,
    verbose: bool = False,
) -> tuple[ModelFile, TrainReport]:
    """Encode a message signal, fit a fresh function to it, tag it secret.

    cfg.seed drives both the parameter initialization and any batch
    subsampling.
    """
    if isinstance(message, RasterImage):
        ds = image_to_dataset(message)
    elif isinstance(message, ScalarGrid):
        ds = grid_to_dataset(message)
    else:
        raise ArgumentError(f"message must be an image or a grid, got {type(message).__name__}")
    params, report = _descend(
        spec, init_params(spec, cfg.seed), ds, cfg, mask=None, verbose=verbose
    )
    return ModelFile(spec=spec, role=Role.SECRET, params=params), report
