"""Shared fixtures: small deterministic signals and model builders."""

import numpy as np
import pytest

import sinr


def smooth_image(size: int = 64) -> sinr.RasterImage:
    """A smooth synthetic RGB test card: ramps, a lobe, and a low-frequency wave."""
    y, x = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    r = 0.35 + 0.3 * x + 0.15 * np.sin(2.0 * np.pi * (x + y) / 2.0)
    g = 0.45 + 0.25 * y + 0.15 * np.exp(-((x - 0.3) ** 2 + (y - 0.6) ** 2) / 0.08)
    b = 0.5 + 0.2 * np.cos(np.pi * x) * np.sin(np.pi * y)
    rgb = np.clip(np.stack([r, g, b], axis=2), 0.0, 1.0)
    return sinr.RasterImage((rgb * 255.0).astype(np.uint8))


def cover_image(size: int = 64) -> sinr.RasterImage:
    """A different smooth RGB card, used as the innocuous cover signal."""
    y, x = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    rgb = np.stack(
        [0.6 - 0.3 * x, 0.4 + 0.3 * y, 0.5 + 0.2 * np.sin(2.0 * np.pi * x)], axis=2
    )
    return sinr.RasterImage((np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8))


def noise_image(size: int, seed: int, channels: int = 3) -> sinr.RasterImage:
    rng = np.random.default_rng(seed)
    shape = (size, size) if channels == 1 else (size, size, 3)
    return sinr.RasterImage(rng.integers(0, 256, size=shape, dtype=np.uint8))


def random_params(spec: sinr.FunctionSpec, seed: int) -> sinr.ParameterSet:
    return sinr.init_params(spec, seed)


def tiny_secret(seed: int = 7, widths=(2, 6, 5, 3)) -> sinr.ModelFile:
    spec = sinr.FunctionSpec(widths)
    return sinr.ModelFile(spec, sinr.Role.SECRET, sinr.init_params(spec, seed))


@pytest.fixture
def secret_8(tmp_path):
    """A small trained-free secret model plus its path on disk."""
    mf = tiny_secret(seed=11, widths=(2, 8, 8, 3))
    path = tmp_path / "secret.sinr"
    sinr.save_model(str(path), mf)
    return mf, str(path)
