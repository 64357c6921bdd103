"""Pulling a secret function back out of a stego function with the key.

Recovery gathers rows and columns of the stego weight matrices at the
secret-neuron indices, in ascending index order, and the bias entries at the
same indices. Nothing outside the keyed positions is ever read, so whatever
training did to the cover-side parameters cannot perturb the result: the
secret comes back bit-for-bit.
"""

from __future__ import annotations

import numpy as np

from .codec import RasterImage, ScalarGrid, render
from .errors import ArgumentError
from .model import FunctionSpec, ModelFile, Role, StegoKey, secret_layout
from .numerics import ParameterSet


def recover(stego: ModelFile, key: StegoKey) -> ModelFile:
    """Extract the embedded secret function described by the key.

    The recovered structure comes from the key's popcounts plus the
    shared-I/O convention; parameters are gathered from the keyed rows and
    columns only.
    """
    layout = secret_layout(key, stego.spec)
    weights, biases = [], []
    for l in range(layout.num_weight_layers):
        rows = layout.indices[l + 1]
        cols = layout.indices[l]
        weights.append(stego.params.weights[l][np.ix_(rows, cols)])
        biases.append(stego.params.biases[l][rows])
    spec = FunctionSpec(
        layer_widths=layout.secret_widths,
        activation=stego.spec.activation,
        rff=stego.spec.rff,
    )
    return ModelFile(spec=spec, role=Role.SECRET, params=ParameterSet(weights, biases))


def _stored_bytes(mf: ModelFile) -> np.ndarray:
    return np.frombuffer(mf.params.flat().astype("<f4").tobytes(), dtype=np.uint8)


def ber(a: ModelFile, b: ModelFile) -> float:
    """Fraction of differing bits between two models' stored parameters.

    Bits are counted over the canonical little-endian float32 representation
    in flat parameter order, i.e. exactly the payload a model file stores.
    """
    if a.spec != b.spec:
        raise ArgumentError(
            f"cannot compare bits across structures {list(a.spec.layer_widths)} "
            f"vs {list(b.spec.layer_widths)} (or differing activation/encoding)"
        )
    bytes_a = _stored_bytes(a)
    bytes_b = _stored_bytes(b)
    differing = int(np.unpackbits(bytes_a ^ bytes_b).sum())
    return differing / (bytes_a.size * 8)


def extract_message(secret: ModelFile, out_shape) -> RasterImage | ScalarGrid:
    """Sample the recovered function back into a signal.

    out_shape (height, width) renders an image; (rows, cols, lo, hi) renders
    a scalar grid de-normalized to [lo, hi].
    """
    return render(secret.spec, secret.params, out_shape)
