"""Signals in and out of coordinate space.

Images and scalar grids become supervised datasets by mapping sample centers
to [-1, 1] per axis and sample values to [0, 1]. Rendering runs the inverse:
evaluate the function on the full lattice, clamp to [0, 1], then quantize to
8-bit (images) or rescale to the stored value range (grids).

Coordinate convention, fixed for every h x w lattice:

    x = (2*col + 1) / w - 1      y = (2*row + 1) / h - 1

Dataset rows are lattice row-major: row 0 left to right, then row 1, etc.
Grid text files are a header line "rows cols min max" followed by the values
in the same row-major order, whitespace separated.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import ArgumentError, FormatError, IoError, StructuralError
from .model import FunctionSpec, evaluate, pinned_rng
from .numerics import ParameterSet


@dataclass
class CoordinateDataset:
    """Paired coordinates (n, d) in [-1, 1] and features (n, c) in [0, 1]."""

    coords: np.ndarray
    features: np.ndarray

    def __post_init__(self) -> None:
        self.coords = np.ascontiguousarray(self.coords, dtype=np.float64)
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        if self.coords.ndim != 2 or self.features.ndim != 2:
            raise StructuralError("coords and features must be 2-D arrays")
        if self.coords.shape[0] != self.features.shape[0]:
            raise StructuralError(
                f"{self.coords.shape[0]} coordinates vs {self.features.shape[0]} feature rows"
            )
        if self.coords.size and (self.coords.min() < -1.0 or self.coords.max() > 1.0):
            raise StructuralError("coordinates must lie in [-1, 1] per axis")
        if self.features.size and (self.features.min() < 0.0 or self.features.max() > 1.0):
            raise StructuralError("features must lie in [0, 1]")

    @property
    def size(self) -> int:
        return self.coords.shape[0]

    @property
    def d(self) -> int:
        return self.coords.shape[1]

    @property
    def c(self) -> int:
        return self.features.shape[1]


@dataclass
class RasterImage:
    """8-bit image samples, shape (h, w) grayscale or (h, w, 3) color."""

    samples: np.ndarray

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.uint8)
        if self.samples.ndim == 2:
            pass
        elif self.samples.ndim == 3 and self.samples.shape[2] == 3:
            pass
        else:
            raise StructuralError(f"unsupported image shape {self.samples.shape}")

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.samples.ndim == 2 else 3


@dataclass
class ScalarGrid:
    """A 2-D field of raw scalar values plus the range used to normalize it."""

    values: np.ndarray
    lo: float = field(default=math.nan)
    hi: float = field(default=math.nan)

    def __post_init__(self) -> None:
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise StructuralError(f"grid must be 2-D, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise StructuralError("grid values must be finite")
        if math.isnan(self.lo):
            self.lo = float(self.values.min())
        if math.isnan(self.hi):
            self.hi = float(self.values.max())
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.lo > self.hi:
            raise StructuralError(f"bad grid range [{self.lo}, {self.hi}]")
        # Range metadata must bracket the values; a hair of float slack is
        # tolerated and clipped away so the invariant holds exactly.
        slack = 1e-9 * max(1.0, abs(self.lo), abs(self.hi))
        if self.values.size and (
            self.values.min() < self.lo - slack or self.values.max() > self.hi + slack
        ):
            raise StructuralError(
                f"grid values [{self.values.min()}, {self.values.max()}] escape "
                f"declared range [{self.lo}, {self.hi}]"
            )
        np.clip(self.values, self.lo, self.hi, out=self.values)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


def lattice(height: int, width: int) -> np.ndarray:
    """Row-major (x, y) centers of an h x w lattice, mapped into [-1, 1]^2."""
    if height < 1 or width < 1:
        raise ArgumentError(f"lattice dimensions must be positive, got {height}x{width}")
    xs = (2.0 * np.arange(width) + 1.0) / width - 1.0
    ys = (2.0 * np.arange(height) + 1.0) / height - 1.0
    gx, gy = np.meshgrid(xs, ys)  # row-major: y varies over rows
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def image_to_dataset(img: RasterImage) -> CoordinateDataset:
    feats = img.samples.reshape(img.height * img.width, img.channels) / 255.0
    return CoordinateDataset(coords=lattice(img.height, img.width), features=feats)


def quantize_unit(features: np.ndarray) -> np.ndarray:
    """Clamp [0, 1] features and quantize to uint8 (round half to even)."""
    return np.rint(np.clip(features, 0.0, 1.0) * 255.0).astype(np.uint8)


def features_to_image(features: np.ndarray, height: int, width: int) -> RasterImage:
    feats = np.asarray(features)
    if feats.shape[0] != height * width:
        raise StructuralError(
            f"{feats.shape[0]} feature rows cannot fill a {height}x{width} image"
        )
    channels = feats.shape[1]
    if channels == 1:
        return RasterImage(quantize_unit(feats).reshape(height, width))
    if channels == 3:
        return RasterImage(quantize_unit(feats).reshape(height, width, 3))
    raise StructuralError(f"images need 1 or 3 channels, got {channels}")


def features_to_grid(
    features: np.ndarray, rows: int, cols: int, lo: float, hi: float
) -> ScalarGrid:
    """Rescale [0, 1] features to [lo, hi] and shape them into a grid."""
    feats = np.asarray(features)
    if feats.shape != (rows * cols, 1):
        raise StructuralError(
            f"feature block {feats.shape} cannot fill a {rows}x{cols} grid"
        )
    unit = np.clip(feats, 0.0, 1.0).reshape(rows, cols)
    return ScalarGrid(values=lo + unit * (hi - lo), lo=lo, hi=hi)


def grid_to_dataset(grid: ScalarGrid) -> CoordinateDataset:
    """Min-max normalize grid values into [0, 1] using the grid's stored range.

    A degenerate range (hi == lo) maps everything to 0.5 with a warning.
    """
    span = grid.hi - grid.lo
    if span == 0.0:
        warnings.warn("grid value range is degenerate; features set to 0.5")
        feats = np.full((grid.rows * grid.cols, 1), 0.5)
    else:
        feats = ((grid.values - grid.lo) / span).reshape(-1, 1)
        feats = np.clip(feats, 0.0, 1.0)
    return CoordinateDataset(coords=lattice(grid.rows, grid.cols), features=feats)


def subsample(ds: CoordinateDataset, k: int, seed: int) -> CoordinateDataset:
    """k distinct rows drawn without replacement, kept in dataset order."""
    if not (0 < k <= ds.size):
        raise ArgumentError(f"subsample size {k} out of range 1..{ds.size}")
    idx = np.sort(pinned_rng(seed).choice(ds.size, size=k, replace=False))
    return CoordinateDataset(coords=ds.coords[idx], features=ds.features[idx])


# ---------------------------------------------------------------------------
# Rendering


def render_image(
    spec: FunctionSpec, params: ParameterSet, height: int, width: int
) -> RasterImage:
    """Evaluate the function over the lattice and quantize to an 8-bit image."""
    if spec.d_in != 2:
        raise StructuralError(f"image rendering needs 2-D input, spec has {spec.d_in}")
    if spec.d_out not in (1, 3):
        raise StructuralError(f"image rendering needs 1 or 3 outputs, spec has {spec.d_out}")
    outputs = evaluate(spec, params, lattice(height, width))
    return features_to_image(outputs, height, width)


def render_grid(
    spec: FunctionSpec,
    params: ParameterSet,
    rows: int,
    cols: int,
    lo: float,
    hi: float,
) -> ScalarGrid:
    """Evaluate over the lattice and rescale [0, 1] outputs to [lo, hi]."""
    if spec.d_in != 2 or spec.d_out != 1:
        raise StructuralError(
            f"grid rendering needs a 2-in 1-out function, spec is "
            f"{spec.d_in}-in {spec.d_out}-out"
        )
    outputs = evaluate(spec, params, lattice(rows, cols))
    return features_to_grid(outputs, rows, cols, lo, hi)


def render(spec: FunctionSpec, params: ParameterSet, out_shape) -> RasterImage | ScalarGrid:
    """Sample a function into a signal, dispatching on the requested shape.

    out_shape (height, width) gives an 8-bit RasterImage; (rows, cols, lo,
    hi) gives a ScalarGrid de-normalized to [lo, hi].
    """
    shape = tuple(out_shape)
    if len(shape) == 2:
        return render_image(spec, params, int(shape[0]), int(shape[1]))
    if len(shape) == 4:
        return render_grid(
            spec, params, int(shape[0]), int(shape[1]), float(shape[2]), float(shape[3])
        )
    raise ArgumentError(
        f"out_shape must be (height, width) or (rows, cols, lo, hi), got {shape}"
    )


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio between two 8-bit sample arrays, in dB.

    Identical inputs return +inf.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ArgumentError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.dtype != np.uint8 or b.dtype != np.uint8:
        raise ArgumentError("psnr compares 8-bit renders; quantize first")
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * math.log10(255.0**2 / mse)


# ---------------------------------------------------------------------------
# File I/O


def load_png(path: str) -> RasterImage:
    try:
        with Image.open(path) as im:
            if im.mode == "L":
                return RasterImage(np.asarray(im))
            return RasterImage(np.asarray(im.convert("RGB")))
    except OSError as exc:
        raise IoError(f"cannot read image {path}: {exc}") from exc


def save_png(path: str, img: RasterImage) -> None:
    try:
        Image.fromarray(img.samples).save(path, format="PNG")
    except OSError as exc:
        raise IoError(f"cannot write image {path}: {exc}") from exc


def load_grid(path: str) -> ScalarGrid:
    """Read the text grid format: "rows cols min max" then row-major values."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read grid {path}: {exc}") from exc
    tokens = text.split()
    if len(tokens) < 4:
        raise FormatError(f"{path}: grid header needs rows cols min max")
    try:
        rows, cols = int(tokens[0]), int(tokens[1])
        lo, hi = float(tokens[2]), float(tokens[3])
        values = np.array([float(t) for t in tokens[4:]])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if rows < 1 or cols < 1:
        raise FormatError(f"{path}: bad grid dimensions {rows}x{cols}")
    if values.size != rows * cols:
        raise FormatError(
            f"{path}: header promises {rows * cols} values, found {values.size}"
        )
    return ScalarGrid(values=values.reshape(rows, cols), lo=lo, hi=hi)


def save_grid(path: str, grid: ScalarGrid) -> None:
    lines = [f"{grid.rows} {grid.cols} {grid.lo!r} {grid.hi!r}"]
    for row in grid.values:
        lines.append(" ".join(repr(float(v)) for v in row))
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write grid {path}: {exc}") from exc
