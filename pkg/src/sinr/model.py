"""Function objects, stego keys, parameter masks, and the binary model file.

A "function" is a FunctionSpec (structure) plus a ParameterSet (values),
optionally preceded by a fixed random Fourier feature encoding. Everything
random is driven by the Philox counter-based 64-bit generator, so a stored
seed regenerates the same values on any platform with the same generator.

Model file format, version 1, little-endian throughout:

    offset  size  field
    0       4     magic "SINR"
    4       2     format version (u16) = 1
    6       1     role: 0 plain, 1 secret, 2 stego
    7       1     activation: 0 relu, 1 sine, 2 identity
    8       1     rff flag: 0 absent, 1 present
    9       1     reserved = 0
    10      2     layer count K (u16), number of widths
    12      4*K   layer widths (u32 each), raw coordinate dim first
    [if rff] 4    frequency count m (u32)
             8    sigma (f64)
             8    seed (u64)
    ...     8     payload element count (u64)
    ...     4*N   parameters as f32, canonical flat order
    ...     8     blake2b-64 checksum of all preceding bytes

Canonical flat parameter order: for each layer l = 1..L, the weight matrix
W^l in row-major order followed by the bias vector b^l. Parameters train in
float64 but are stored as float32; loading returns the stored float32 values
widened back to float64, so a load/save cycle is byte-stable.

Key file: UTF-8 text. Line 1 the expansion strategy, line 2 the per-layer
bitstrings in braces ("{00, 1010, 000}"), line 3 "shared_io=true|false".
"""

from __future__ import annotations

import enum
import hashlib
import re
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    ArgumentError,
    ChecksumError,
    FormatError,
    IoError,
    KeyFormatError,
    MagicError,
    StructuralError,
    TruncationError,
    VersionError,
)
from .numerics import ActivationKind, ParameterSet, forward

MAGIC = b"SINR"
FORMAT_VERSION = 1

_ACTIVATION_CODES = {ActivationKind.RELU: 0, ActivationKind.SINE: 1, ActivationKind.IDENTITY: 2}
_ACTIVATION_FROM_CODE = {v: k for k, v in _ACTIVATION_CODES.items()}


def pinned_rng(seed: int) -> np.random.Generator:
    """The toolkit's one PRNG: Philox, keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


class Role(enum.Enum):
    PLAIN = 0
    SECRET = 1
    STEGO = 2


class Strategy(enum.Enum):
    HORIZONTAL = "horizontal"
    VERTICAL = "vertical"
    MIXED = "mixed"


@dataclass(frozen=True)
class RffConfig:
    """Fourier feature encoding hyperparameters; B regenerates from the seed."""

    m: int
    sigma: float
    seed: int

    def __post_init__(self) -> None:
        if self.m < 1:
            raise StructuralError(f"frequency count must be >= 1, got {self.m}")
        if not (self.sigma > 0):
            raise StructuralError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class FunctionSpec:
    """MLP structure: layer widths, hidden activation, optional input encoding.

    layer_widths[0] is always the raw coordinate dimension; when rff is set
    the first weight matrix instead sees 2*m encoded inputs.
    """

    layer_widths: tuple[int, ...]
    activation: ActivationKind = ActivationKind.RELU
    rff: RffConfig | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if len(self.layer_widths) < 3:
            raise StructuralError(
                f"a function needs input, hidden, and output layers; got {list(self.layer_widths)}"
            )
        for i, w in enumerate(self.layer_widths):
            if w < 1:
                raise StructuralError(f"layer {i + 1} width must be >= 1, got {w}")

    @property
    def d_in(self) -> int:
        return self.layer_widths[0]

    @property
    def d_out(self) -> int:
        return self.layer_widths[-1]

    @property
    def hidden_widths(self) -> tuple[int, ...]:
        return self.layer_widths[1:-1]

    @property
    def effective_widths(self) -> tuple[int, ...]:
        """Widths as the weight matrices see them (input widened to 2m under RFF)."""
        if self.rff is None:
            return self.layer_widths
        return (2 * self.rff.m,) + self.layer_widths[1:]

    def weight_shapes(self) -> list[tuple[int, int]]:
        w = self.effective_widths
        return [(w[l + 1], w[l]) for l in range(len(w) - 1)]


def param_count(spec: FunctionSpec) -> int:
    """Closed-form parameter count: sum of w[l+1]*w[l] + w[l+1] over layers."""
    w = spec.effective_widths
    return sum(w[l + 1] * w[l] + w[l + 1] for l in range(len(w) - 1))


def init_params(spec: FunctionSpec, seed: int) -> ParameterSet:
    """Fresh parameters: weights uniform in +/- 1/sqrt(fan_in), biases zero."""
    rng = pinned_rng(seed)
    weights, biases = [], []
    for rows, cols in spec.weight_shapes():
        bound = 1.0 / np.sqrt(cols)
        weights.append(rng.uniform(-bound, bound, size=(rows, cols)))
        biases.append(np.zeros(rows))
    return ParameterSet(weights, biases)


def check_congruent(spec: FunctionSpec, params: ParameterSet) -> None:
    expected = spec.weight_shapes()
    if len(params.weights) != len(expected):
        raise StructuralError(
            f"spec has {len(expected)} weight layers, parameters have {len(params.weights)}"
        )
    for l, ((rows, cols), w) in enumerate(zip(expected, params.weights)):
        if w.shape != (rows, cols):
            raise StructuralError(
                f"layer {l + 1}: expected weight shape ({rows}, {cols}), got {w.shape}"
            )


# ---------------------------------------------------------------------------
# Random Fourier features


def rff_matrix(cfg: RffConfig, d: int) -> np.ndarray:
    """The (m x d) frequency matrix B with entries N(0, sigma^2), from the seed."""
    return pinned_rng(cfg.seed).normal(0.0, cfg.sigma, size=(cfg.m, d))


def rff_encode(b_matrix: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Map coordinates x to (cos(2 pi B x); sin(2 pi B x)).

    The first m output components are cosines, the last m sines, both in
    B's row order.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != b_matrix.shape[1]:
        raise StructuralError(
            f"coords shape {coords.shape} incompatible with B {b_matrix.shape}"
        )
    z = 2.0 * np.pi * (coords @ b_matrix.T)
    return np.concatenate([np.cos(z), np.sin(z)], axis=1)


def encode_coords(spec: FunctionSpec, coords: np.ndarray) -> np.ndarray:
    """Apply the spec's input encoding (RFF or none) to raw coordinates."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != spec.d_in:
        raise StructuralError(
            f"coords shape {coords.shape} do not match input dimension {spec.d_in}"
        )
    if spec.rff is None:
        return coords
    return rff_encode(rff_matrix(spec.rff, spec.d_in), coords)


def evaluate(spec: FunctionSpec, params: ParameterSet, coords: np.ndarray) -> np.ndarray:
    """Outputs of the function at raw coordinates (encoding handled here)."""
    check_congruent(spec, params)
    return forward(spec.activation, params, encode_coords(spec, coords)).outputs


# ---------------------------------------------------------------------------
# Stego key


@dataclass
class StegoKey:
    """Per-layer bitstrings marking secret-neuron positions in a stego function.

    layer_bits[l] is a boolean vector as long as stego layer l is wide (raw
    widths; the input bitstring always addresses raw coordinates). A 1 marks
    a neuron of the hidden secret function. Input/output bitstrings are all
    zero under the shared-I/O convention: the input layer is always common
    to cover and secret, and for vertical expansion so is the output layer.
    """

    strategy: Strategy
    layer_bits: list[np.ndarray]
    shared_io: bool = True

    def __post_init__(self) -> None:
        self.layer_bits = [np.asarray(b, dtype=bool) for b in self.layer_bits]
        for i, bits in enumerate(self.layer_bits):
            if bits.ndim != 1:
                raise StructuralError(f"key layer {i + 1} bits must be a vector")

    @property
    def num_layers(self) -> int:
        return len(self.layer_bits)

    def popcounts(self) -> list[int]:
        return [int(b.sum()) for b in self.layer_bits]

    def widths(self) -> list[int]:
        return [b.size for b in self.layer_bits]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StegoKey):
            return NotImplemented
        return (
            self.strategy is other.strategy
            and self.shared_io == other.shared_io
            and len(self.layer_bits) == len(other.layer_bits)
            and all(np.array_equal(a, b) for a, b in zip(self.layer_bits, other.layer_bits))
        )


def format_key(key: StegoKey) -> str:
    """Canonical text form: strategy line, braces bitstrings, shared_io line."""
    bits = ", ".join("".join("1" if x else "0" for x in b) for b in key.layer_bits)
    shared = "true" if key.shared_io else "false"
    return f"{key.strategy.value}\n{{{bits}}}\nshared_io={shared}\n"


_BRACES_RE = re.compile(r"^\{(.*)\}$")


def parse_key(text: str, spec: FunctionSpec | None = None) -> StegoKey:
    """Parse key text. The braces line is mandatory; a strategy line before it
    and a shared_io line after it are optional (defaults: vertical, true).
    With a spec, bitstring lengths are checked against its layer widths."""
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if not lines:
        raise KeyFormatError("empty key text")
    strategy = Strategy.VERTICAL
    shared_io = True
    braces_line = None
    for ln in lines:
        if ln.startswith("{"):
            if braces_line is not None:
                raise KeyFormatError("multiple bitstring lines")
            braces_line = ln
        elif ln.lower().startswith("shared_io"):
            value = ln.split("=", 1)[-1].strip().lower()
            if value not in ("true", "false"):
                raise KeyFormatError(f"bad shared_io value {value!r}")
            shared_io = value == "true"
        else:
            try:
                strategy = Strategy(ln.lower())
            except ValueError:
                raise KeyFormatError(f"unknown strategy {ln!r}") from None
    if braces_line is None:
        raise KeyFormatError("missing {...} bitstring line")
    match = _BRACES_RE.match(braces_line)
    if match is None:
        raise KeyFormatError("bitstring line must be enclosed in braces")
    body = match.group(1).strip()
    if not body:
        raise KeyFormatError("key has no layers")
    layer_bits = []
    for i, token in enumerate(tok.strip() for tok in body.split(",")):
        if not token or token.strip("01"):
            raise KeyFormatError(f"layer {i + 1}: bitstring {token!r} is not binary")
        layer_bits.append(np.frombuffer(token.encode(), dtype=np.uint8) == ord("1"))
    if spec is not None:
        if len(layer_bits) != len(spec.layer_widths):
            raise KeyFormatError(
                f"key has {len(layer_bits)} layers, spec has {len(spec.layer_widths)}"
            )
        for i, (bits, width) in enumerate(zip(layer_bits, spec.layer_widths)):
            if bits.size != width:
                raise KeyFormatError(
                    f"layer {i + 1}: {bits.size} key bits for width {width}"
                )
    return StegoKey(strategy=strategy, layer_bits=layer_bits, shared_io=shared_io)


def save_key(path: str, key: StegoKey) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(format_key(key))
    except OSError as exc:
        raise IoError(f"cannot write key file {path}: {exc}") from exc


def load_key(path: str) -> StegoKey:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_key(fh.read())
    except OSError as exc:
        raise IoError(f"cannot read key file {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Secret layout and parameter mask


def _check_key_congruence(key: StegoKey, spec: FunctionSpec) -> None:
    if key.num_layers != len(spec.layer_widths):
        raise StructuralError(
            f"key has {key.num_layers} layers, stego function has {len(spec.layer_widths)}"
        )
    for i, (bits, width) in enumerate(zip(key.layer_bits, spec.layer_widths)):
        if bits.size != width:
            raise StructuralError(
                f"key layer {i + 1} has {bits.size} bits, stego layer is {width} wide"
            )
    if spec.rff is not None and key.layer_bits[0].any():
        raise StructuralError(
            "input-layer key bits must be zero when an input encoding is in use"
        )


def _secret_flags(key: StegoKey, spec: FunctionSpec) -> list[np.ndarray]:
    """Per-layer secret-neuron flags over effective widths.

    Literal key bits, widened by the shared-I/O convention: when the key
    carries any secret at all, input neurons are implicitly secret, and so
    are output neurons for vertical expansion. A key with no 1-bits marks
    nothing as secret.
    """
    _check_key_congruence(key, spec)
    eff = spec.effective_widths
    flags = [np.zeros(w, dtype=bool) for w in eff]
    for l, bits in enumerate(key.layer_bits):
        if l == 0 and spec.rff is not None:
            continue  # raw input bits are zero here; effective flags set below
        flags[l] |= bits
    has_secret = any(bits.any() for bits in key.layer_bits)
    if key.shared_io and has_secret:
        flags[0][:] = True
        if key.strategy is Strategy.VERTICAL:
            flags[-1][:] = True
    return flags


@dataclass
class ParameterMask:
    """Trainable/frozen marking congruent with a ParameterSet.

    True = trainable (expansion parameters), False = frozen (the hidden
    secret function). The flat view follows the canonical parameter order.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self) -> None:
        self.weights = [np.asarray(w, dtype=bool) for w in self.weights]
        self.biases = [np.asarray(b, dtype=bool) for b in self.biases]

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def frozen_count(self) -> int:
        flat = self.flat()
        return int(flat.size - flat.sum())

    def trainable_count(self) -> int:
        return int(self.flat().sum())

    def all_trainable(self) -> bool:
        return bool(self.flat().all())


def mask_from_key(key: StegoKey, stego_spec: FunctionSpec) -> ParameterMask:
    """Binary gradient mask: a parameter is frozen iff it belongs to the secret.

    A weight is frozen iff both endpoint neurons are secret; a bias is
    frozen iff its neuron is secret (shared input/output neurons count as
    secret per _secret_flags).
    """
    flags = _secret_flags(key, stego_spec)
    weights, biases = [], []
    for l in range(len(flags) - 1):
        frozen_w = flags[l + 1][:, None] & flags[l][None, :]
        weights.append(~frozen_w)
        biases.append(~flags[l + 1])
    return ParameterMask(weights, biases)


@dataclass
class SecretLayout:
    """Where the secret function lives inside a stego function.

    indices[l] lists the stego-layer positions (over effective widths) that
    hold secret layer l's neurons, in ascending order; secret_widths is the
    recovered structure in raw widths. For horizontal/mixed expansion the
    secret's former output layer is the last index-bearing layer.
    """

    secret_widths: tuple[int, ...]
    indices: list[np.ndarray]

    @property
    def num_weight_layers(self) -> int:
        return len(self.secret_widths) - 1


def secret_layout(key: StegoKey, stego_spec: FunctionSpec) -> SecretLayout:
    """Validate a key against a stego spec and resolve the embedded structure.

    Vertical keys must mark >= 1 neuron in every hidden layer and keep I/O
    bitstrings zero (both shared). Horizontal/mixed keys must mark a
    contiguous run of layers starting at the first hidden layer; the run's
    last layer is the secret's output layer and the stego output is not
    shared.
    """
    _check_key_congruence(key, stego_spec)
    if not key.shared_io:
        raise StructuralError("recovery requires the shared-I/O key convention")
    if key.layer_bits[0].any() or key.layer_bits[-1].any():
        raise StructuralError("input/output key bitstrings must be all-zero")
    pops = key.popcounts()
    hidden_pops = pops[1:-1]
    if not any(hidden_pops):
        raise StructuralError("key marks no secret neurons in any hidden layer")
    eff = stego_spec.effective_widths

    if key.strategy is Strategy.VERTICAL:
        bad = [i + 2 for i, p in enumerate(hidden_pops) if p == 0]
        if bad:
            raise StructuralError(
                f"vertical key must mark every hidden layer; layer {bad[0]} has no 1-bits"
            )
        secret_widths = (stego_spec.d_in, *hidden_pops, stego_spec.d_out)
        indices = [np.arange(eff[0])]
        indices += [np.flatnonzero(bits) for bits in key.layer_bits[1:-1]]
        indices.append(np.arange(stego_spec.d_out))
        return SecretLayout(secret_widths=secret_widths, indices=indices)

    # Horizontal or mixed: a contiguous carried run ending at the secret's
    # former output layer.
    last = max(i for i, p in enumerate(pops) if p > 0)
    run = pops[1 : last + 1]
    if 0 in run:
        gap = run.index(0) + 2
        raise StructuralError(
            f"carried layers must be contiguous; layer {gap} has no 1-bits"
        )
    secret_widths = (stego_spec.d_in, *run)
    if len(secret_widths) < 3:
        raise StructuralError("key must carry at least one hidden layer plus an output layer")
    indices = [np.arange(eff[0])]
    indices += [np.flatnonzero(bits) for bits in key.layer_bits[1 : last + 1]]
    return SecretLayout(secret_widths=secret_widths, indices=indices)


# ---------------------------------------------------------------------------
# Model file


@dataclass
class ModelFile:
    """A function plus its role tag, as stored on disk."""

    spec: FunctionSpec
    role: Role
    params: ParameterSet

    def __post_init__(self) -> None:
        check_congruent(self.spec, self.params)


def quantize_stored(params: ParameterSet) -> ParameterSet:
    """Parameters as they survive a save/load cycle (through float32)."""
    return ParameterSet(
        [w.astype(np.float32).astype(np.float64) for w in params.weights],
        [b.astype(np.float32).astype(np.float64) for b in params.biases],
    )


def _pack_header(mf: ModelFile) -> bytes:
    spec = mf.spec
    out = bytearray()
    out += MAGIC
    out += struct.pack("<HBBBB", FORMAT_VERSION, mf.role.value,
                       _ACTIVATION_CODES[spec.activation],
                       0 if spec.rff is None else 1, 0)
    out += struct.pack("<H", len(spec.layer_widths))
    out += struct.pack(f"<{len(spec.layer_widths)}I", *spec.layer_widths)
    if spec.rff is not None:
        out += struct.pack("<IdQ", spec.rff.m, spec.rff.sigma, spec.rff.seed)
    return bytes(out)


def save_model(path: str, mf: ModelFile) -> None:
    """Write a model file; parameters are stored as little-endian float32."""
    payload = mf.params.flat().astype("<f4").tobytes()
    body = _pack_header(mf) + struct.pack("<Q", len(payload) // 4) + payload
    digest = hashlib.blake2b(body, digest_size=8).digest()
    try:
        with open(path, "wb") as fh:
            fh.write(body + digest)
    except OSError as exc:
        raise IoError(f"cannot write model file {path}: {exc}") from exc


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncationError(
                f"{self.path}: file ends at byte {len(self.data)}, "
                f"needed {self.pos + n}"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_model(path: str) -> ModelFile:
    """Read a model file, validating magic, version, structure, and checksum."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read model file {path}: {exc}") from exc

    r = _Reader(data, path)
    if r.take(4) != MAGIC:
        raise MagicError(f"{path}: not a model file (bad magic)")
    (version,) = r.unpack("<H")
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    role_code, act_code, rff_flag, _reserved = r.unpack("<BBBB")
    try:
        role = Role(role_code)
    except ValueError:
        raise FormatError(f"{path}: unknown role code {role_code}") from None
    if act_code not in _ACTIVATION_FROM_CODE:
        raise FormatError(f"{path}: unknown activation code {act_code}")
    (layer_count,) = r.unpack("<H")
    if layer_count < 3:
        raise FormatError(f"{path}: layer count {layer_count} below minimum 3")
    widths = r.unpack(f"<{layer_count}I")
    rff = None
    if rff_flag == 1:
        m, sigma, seed = r.unpack("<IdQ")
        rff = RffConfig(m=m, sigma=sigma, seed=int(seed))
    elif rff_flag != 0:
        raise FormatError(f"{path}: bad rff flag {rff_flag}")
    try:
        spec = FunctionSpec(layer_widths=widths,
                            activation=_ACTIVATION_FROM_CODE[act_code], rff=rff)
    except StructuralError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    (count,) = r.unpack("<Q")
    expected = param_count(spec)
    if count != expected:
        raise FormatError(
            f"{path}: payload declares {count} parameters, structure needs {expected}"
        )
    payload = r.take(4 * count)
    stored_digest = r.take(8)
    if r.pos != len(data):
        raise FormatError(f"{path}: {len(data) - r.pos} trailing bytes after checksum")
    digest = hashlib.blake2b(data[: len(data) - 8], digest_size=8).digest()
    if digest != stored_digest:
        raise ChecksumError(f"{path}: checksum mismatch")

    flat = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    params = ParameterSet.from_flat(flat, spec.weight_shapes())
    return ModelFile(spec=spec, role=role, params=params)


def require_seed(seed: int | None, interactive: bool) -> int:
    """Resolve an optional user seed: mandatory when scripted, warned otherwise."""
    if seed is not None:
        return int(seed)
    if not interactive:
        raise ArgumentError("--seed is required in non-interactive mode")
    import time

    fallback = time.time_ns() & 0xFFFFFFFFFFFFFFFF
    import sys

    print(f"warning: no --seed given, using time-derived seed {fallback}", file=sys.stderr)
    return fallback
