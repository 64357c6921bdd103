"""Hide one coordinate-MLP inside another, losslessly recoverable by key.

The pipeline: fit a small function to the secret signal, expand it into a
larger scaffold (horizontal / vertical / mixed), train the scaffold on a
cover signal with the secret's parameters frozen, ship the stego function,
and recover the secret bit-exactly with the stego key.
"""

from .codec import (
    CoordinateDataset,
    RasterImage,
    ScalarGrid,
    grid_to_dataset,
    image_to_dataset,
    load_grid,
    load_png,
    psnr,
    render,
    render_grid,
    render_image,
    save_grid,
    save_png,
    subsample,
)
from .errors import (
    ArgumentError,
    ChecksumError,
    DivergenceError,
    FormatError,
    IoError,
    KeyFormatError,
    MagicError,
    SinrError,
    StructuralError,
    TruncationError,
    VersionError,
)
from .expansion import ExpansionPlan, StegoScaffold, embed, expansion_rate, keygen
from .model import (
    FunctionSpec,
    ModelFile,
    ParameterMask,
    RffConfig,
    Role,
    StegoKey,
    Strategy,
    evaluate,
    format_key,
    init_params,
    load_key,
    load_model,
    mask_from_key,
    param_count,
    parse_key,
    pinned_rng,
    rff_encode,
    rff_matrix,
    save_key,
    save_model,
    secret_layout,
)
from .numerics import ActivationKind, ParameterSet, gradcheck
from .pool import build_pool, export_features, load_manifest
from .recovery import ber, extract_message, recover
from .training import TrainConfig, TrainReport, fit, fit_masked, fit_secret

__version__ = "0.1.0"

__all__ = [
    "ActivationKind",
    "ArgumentError",
    "ChecksumError",
    "CoordinateDataset",
    "DivergenceError",
    "ExpansionPlan",
    "FormatError",
    "FunctionSpec",
    "IoError",
    "KeyFormatError",
    "MagicError",
    "ModelFile",
    "ParameterMask",
    "ParameterSet",
    "RasterImage",
    "RffConfig",
    "Role",
    "ScalarGrid",
    "SinrError",
    "StegoKey",
    "StegoScaffold",
    "Strategy",
    "StructuralError",
    "TrainConfig",
    "TrainReport",
    "TruncationError",
    "VersionError",
    "ber",
    "build_pool",
    "embed",
    "evaluate",
    "expansion_rate",
    "export_features",
    "extract_message",
    "fit",
    "fit_masked",
    "fit_secret",
    "format_key",
    "grid_to_dataset",
    "gradcheck",
    "image_to_dataset",
    "init_params",
    "keygen",
    "load_grid",
    "load_key",
    "load_manifest",
    "load_model",
    "load_png",
    "mask_from_key",
    "param_count",
    "parse_key",
    "pinned_rng",
    "psnr",
    "recover",
    "render",
    "render_grid",
    "render_image",
    "rff_encode",
    "rff_matrix",
    "save_grid",
    "save_key",
    "save_model",
    "save_png",
    "secret_layout",
    "subsample",
]
