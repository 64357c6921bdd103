"""Structure, initialization, encoding, masks, keys, and file round trips."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sinr.errors import (
    ChecksumError,
    FormatError,
    KeyFormatError,
    MagicError,
    StructuralError,
    TruncationError,
    VersionError,
)
from sinr.model import (
    ActivationKind,
    FunctionSpec,
    ModelFile,
    ParameterMask,
    RffConfig,
    Role,
    StegoKey,
    Strategy,
    check_congruent,
    encode_coords,
    evaluate,
    format_key,
    init_params,
    load_key,
    load_model,
    mask_from_key,
    param_count,
    parse_key,
    pinned_rng,
    quantize_stored,
    rff_encode,
    rff_matrix,
    save_key,
    save_model,
    secret_layout,
)

# ---------------------------------------------------------------------------
# FunctionSpec


def test_spec_requires_three_layers():
    with pytest.raises(StructuralError):
        FunctionSpec(layer_widths=(2, 3))


def test_spec_rejects_zero_width():
    with pytest.raises(StructuralError):
        FunctionSpec(layer_widths=(2, 0, 3))


def test_spec_properties():
    spec = FunctionSpec(layer_widths=(2, 64, 64, 64, 3))
    assert spec.d_in == 2
    assert spec.d_out == 3
    assert spec.hidden_widths == (64, 64, 64)
    assert spec.effective_widths == (2, 64, 64, 64, 3)


def test_spec_effective_widths_with_rff():
    spec = FunctionSpec(
        layer_widths=(2, 16, 3), rff=RffConfig(m=8, sigma=1.0, seed=1)
    )
    # encoding replaces the raw input with cos/sin pairs
    assert spec.effective_widths == (16, 16, 3)
    assert spec.weight_shapes()[0] == (16, 16)


def test_rff_config_validation():
    with pytest.raises(StructuralError):
        RffConfig(m=0, sigma=1.0, seed=0)
    with pytest.raises(StructuralError):
        RffConfig(m=4, sigma=-1.0, seed=0)


# ---------------------------------------------------------------------------
# param_count: closed form against element enumeration


def _enumerate_count(widths):
    total = 0
    for l in range(len(widths) - 1):
        total += widths[l + 1] * widths[l] + widths[l + 1]
    return total


@pytest.mark.parametrize(
    "widths,expected",
    [
        ((2, 64, 64, 64, 3), 8707),
        ((2, 128, 128, 128, 3), 33795),
        ((1, 1, 1), 4),
        ((2, 6, 5, 3), 71),
    ],
)
def test_param_count_frozen_values(widths, expected):
    spec = FunctionSpec(layer_widths=widths)
    assert param_count(spec) == expected
    assert _enumerate_count(widths) == expected


def test_param_count_uses_effective_input():
    spec = FunctionSpec(
        layer_widths=(2, 64, 64, 64, 3), rff=RffConfig(m=32, sigma=2.0, seed=5)
    )
    # first matrix sees 64 encoded columns; the encoding matrix itself is
    # regenerated from the seed and never counted
    assert param_count(spec) == _enumerate_count((64, 64, 64, 64, 3))


@given(
    widths=st.lists(st.integers(min_value=1, max_value=9), min_size=3, max_size=6)
)
@settings(max_examples=40, deadline=None)
def test_param_count_matches_enumeration(widths):
    spec = FunctionSpec(layer_widths=tuple(widths))
    assert param_count(spec) == _enumerate_count(widths)
    params = init_params(spec, seed=3)
    assert params.count() == param_count(spec)


# ---------------------------------------------------------------------------
# init_params


def test_init_deterministic():
    spec = FunctionSpec(layer_widths=(2, 16, 8, 3))
    a = init_params(spec, seed=42)
    b = init_params(spec, seed=42)
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)
    c = init_params(spec, seed=43)
    assert any(
        not np.array_equal(wa, wc) for wa, wc in zip(a.weights, c.weights)
    )


def test_init_bounds_and_zero_biases():
    spec = FunctionSpec(layer_widths=(2, 64, 64, 3))
    params = init_params(spec, seed=7)
    for l, w in enumerate(params.weights):
        bound = 1.0 / np.sqrt(w.shape[1])
        assert np.all(np.abs(w) <= bound), f"layer {l + 1} exceeds +-1/sqrt(fan_in)"
        assert w.dtype == np.float64
    for b in params.biases:
        assert np.all(b == 0.0)


def test_check_congruent_rejects_mismatch():
    spec = FunctionSpec(layer_widths=(2, 16, 3))
    other = FunctionSpec(layer_widths=(2, 17, 3))
    params = init_params(other, seed=0)
    with pytest.raises(StructuralError):
        check_congruent(spec, params)


# ---------------------------------------------------------------------------
# Fourier feature encoding


def test_rff_matrix_shape_and_determinism():
    cfg = RffConfig(m=16, sigma=3.0, seed=11)
    b1 = rff_matrix(cfg, 2)
    b2 = rff_matrix(cfg, 2)
    assert b1.shape == (16, 2)
    assert np.array_equal(b1, b2)
    # sigma scales the same unit draw
    unit = rff_matrix(RffConfig(m=16, sigma=1.0, seed=11), 2)
    assert np.allclose(b1, 3.0 * unit)


def test_rff_encode_zero_input():
    b = rff_matrix(RffConfig(m=4, sigma=1.0, seed=0), 2)
    out = rff_encode(b, np.zeros((3, 2)))
    assert out.shape == (3, 8)
    # cos(0) = 1 in the first half, sin(0) = 0 in the second
    assert np.allclose(out[:, :4], 1.0)
    assert np.allclose(out[:, 4:], 0.0)


def test_rff_encode_known_angle():
    # one frequency row picks out x alone; 2*pi*(0.25) is a quarter turn
    b = np.array([[1.0, 0.0]])
    out = rff_encode(b, np.array([[0.25, 0.9]]))
    assert out.shape == (1, 2)
    assert abs(out[0, 0] - 0.0) < 1e-12  # cos(pi/2)
    assert abs(out[0, 1] - 1.0) < 1e-12  # sin(pi/2)


def test_rff_encode_unit_energy():
    rng = np.random.default_rng(5)
    b = rng.normal(size=(6, 2))
    coords = rng.uniform(-1, 1, size=(17, 2))
    out = rff_encode(b, coords)
    energy = out[:, :6] ** 2 + out[:, 6:] ** 2
    assert np.allclose(energy, 1.0)


def test_encode_coords_identity_without_rff():
    spec = FunctionSpec(layer_widths=(2, 8, 3))
    coords = np.array([[0.5, -0.5]])
    assert np.array_equal(encode_coords(spec, coords), coords)


def test_evaluate_applies_encoding():
    spec = FunctionSpec(
        layer_widths=(2, 8, 1), rff=RffConfig(m=4, sigma=1.0, seed=9)
    )
    params = init_params(spec, seed=1)
    coords = np.array([[0.1, 0.2], [0.3, 0.4]])
    out = evaluate(spec, params, coords)
    assert out.shape == (2, 1)
    # same coords, same answer: encoding matrix is regenerated, not cached state
    assert np.array_equal(out, evaluate(spec, params, coords))


# ---------------------------------------------------------------------------
# Key text grammar


def test_format_parse_round_trip():
    key = StegoKey(
        strategy=Strategy.VERTICAL,
        layer_bits=[
            np.zeros(2, dtype=bool),
            np.array([1, 0, 1, 0], dtype=bool),
            np.array([0, 1, 1, 0], dtype=bool),
            np.zeros(3, dtype=bool),
        ],
        shared_io=True,
    )
    text = format_key(key)
    lines = text.strip().split("\n")
    assert lines[0] == "vertical"
    assert lines[1] == "{00, 1010, 0110, 000}"
    assert lines[2] == "shared_io=true"
    assert parse_key(text) == key


def test_parse_key_example_popcounts():
    text = "vertical\n{00, 1010, 1010101, 1101, 000}\nshared_io=true\n"
    key = parse_key(text)
    assert len(key.layer_bits) == 5
    assert key.popcounts() == [0, 2, 4, 3, 0]
    assert key.widths() == [2, 4, 7, 4, 3]


def test_parse_key_defaults():
    # a bare braces line is enough; strategy and sharing take defaults
    key = parse_key("{00, 11, 0}")
    assert key.strategy is Strategy.VERTICAL
    assert key.shared_io is True


def test_parse_key_rejects_non_binary():
    with pytest.raises(KeyFormatError) as err:
        parse_key("vertical\n{0a, 11}\nshared_io=true")
    assert "layer 1" in str(err.value)


def test_parse_key_rejects_missing_braces():
    with pytest.raises(KeyFormatError):
        parse_key("vertical\nshared_io=true")


def test_parse_key_rejects_bad_strategy():
    with pytest.raises(KeyFormatError):
        parse_key("diagonal\n{00, 11, 0}\nshared_io=true")


def test_parse_key_spec_width_check():
    spec = FunctionSpec(layer_widths=(2, 4, 3))
    parse_key("vertical\n{00, 1100, 000}", spec=spec)
    with pytest.raises(KeyFormatError):
        parse_key("vertical\n{00, 110, 000}", spec=spec)


def test_key_file_round_trip(tmp_path):
    key = StegoKey(
        strategy=Strategy.MIXED,
        layer_bits=[
            np.zeros(2, dtype=bool),
            np.array([1, 1, 0], dtype=bool),
            np.array([0, 0, 1, 1, 1], dtype=bool),
            np.zeros(3, dtype=bool),
        ],
        shared_io=True,
    )
    path = tmp_path / "k.txt"
    save_key(str(path), key)
    assert load_key(str(path)) == key


@given(
    strategy=st.sampled_from(list(Strategy)),
    pops=st.lists(st.integers(min_value=0, max_value=6), min_size=1, max_size=4),
)
@settings(max_examples=50, deadline=None)
def test_key_round_trip_property(strategy, pops):
    rng = np.random.default_rng(sum(pops) + len(pops))
    bits = [np.zeros(2, dtype=bool)]
    for p in pops:
        width = p + int(rng.integers(1, 4))
        row = np.zeros(width, dtype=bool)
        row[rng.choice(width, size=p, replace=False)] = True
        bits.append(row)
    bits.append(np.zeros(3, dtype=bool))
    key = StegoKey(strategy=strategy, layer_bits=bits, shared_io=True)
    assert parse_key(format_key(key)) == key


# ---------------------------------------------------------------------------
# Masks


def test_mask_all_secret_freezes_everything():
    spec = FunctionSpec(layer_widths=(2, 4, 4, 3))
    key = StegoKey(
        strategy=Strategy.VERTICAL,
        layer_bits=[
            np.zeros(2, dtype=bool),
            np.ones(4, dtype=bool),
            np.ones(4, dtype=bool),
            np.zeros(3, dtype=bool),
        ],
        shared_io=True,
    )
    mask = mask_from_key(key, spec)
    assert mask.frozen_count() == param_count(spec)
    assert mask.trainable_count() == 0


def test_mask_no_secret_trains_everything():
    spec = FunctionSpec(layer_widths=(2, 4, 4, 3))
    key = StegoKey(
        strategy=Strategy.VERTICAL,
        layer_bits=[np.zeros(w, dtype=bool) for w in (2, 4, 4, 3)],
        shared_io=True,
    )
    mask = mask_from_key(key, spec)
    assert mask.frozen_count() == 0
    assert mask.trainable_count() == param_count(spec)


def test_mask_frozen_census_oracle():
    """Embedding [2,64,64,64,3] in [2,128,128,128,3] freezes exactly the
    secret's parameter count, independently re-derived element by element."""
    stego = FunctionSpec(layer_widths=(2, 128, 128, 128, 3))
    bits = [np.zeros(2, dtype=bool)]
    rng = np.random.default_rng(0)
    for width in (128, 128, 128):
        row = np.zeros(width, dtype=bool)
        row[rng.choice(width, size=64, replace=False)] = True
        bits.append(row)
    bits.append(np.zeros(3, dtype=bool))
    key = StegoKey(strategy=Strategy.VERTICAL, layer_bits=bits, shared_io=True)
    mask = mask_from_key(key, stego)

    # independent enumeration with plain python loops
    flags = [np.ones(2, dtype=bool)] + bits[1:-1] + [np.ones(3, dtype=bool)]
    frozen = 0
    for l in range(4):
        for r in range(len(flags[l + 1])):
            for c in range(len(flags[l])):
                frozen += int(flags[l + 1][r] and flags[l][c])
        frozen += int(np.sum(flags[l + 1]))
    assert frozen == 8707
    assert mask.frozen_count() == 8707
    assert mask.trainable_count() == 33795 - 8707


def test_mask_flat_matches_counts():
    spec = FunctionSpec(layer_widths=(2, 8, 8, 3))
    bits = [
        np.zeros(2, dtype=bool),
        np.array([1, 0, 1, 0, 1, 0, 1, 0], dtype=bool),
        np.array([0, 0, 1, 1, 0, 0, 1, 1], dtype=bool),
        np.zeros(3, dtype=bool),
    ]
    key = StegoKey(strategy=Strategy.VERTICAL, layer_bits=bits, shared_io=True)
    mask = mask_from_key(key, spec)
    flat = mask.flat()
    assert flat.size == param_count(spec)
    assert int(np.sum(~flat)) == mask.frozen_count()
    assert int(np.sum(flat)) == mask.trainable_count()


def test_all_trainable_predicate():
    spec = FunctionSpec(layer_widths=(2, 5, 3))
    empty = StegoKey(
        strategy=Strategy.VERTICAL,
        layer_bits=[np.zeros(w, dtype=bool) for w in (2, 5, 3)],
        shared_io=True,
    )
    assert mask_from_key(empty, spec).all_trainable()
    full = StegoKey(
        strategy=Strategy.VERTICAL,
        layer_bits=[
            np.zeros(2, dtype=bool),
            np.ones(5, dtype=bool),
            np.zeros(3, dtype=bool),
        ],
        shared_io=True,
    )
    assert not mask_from_key(full, spec).all_trainable()


# ---------------------------------------------------------------------------
# secret_layout


def test_layout_vertical_requires_bits_everywhere():
    spec = FunctionSpec(layer_widths=(2, 4, 4, 3))
    key = StegoKey(
        strategy=Strategy.VERTICAL,
        layer_bits=[
            np.zeros(2, dtype=bool),
            np.array([1, 1, 0, 0], dtype=bool),
            np.zeros(4, dtype=bool),
            np.zeros(3, dtype=bool),
        ],
        shared_io=True,
    )
    with pytest.raises(StructuralError):
        secret_layout(key, spec)


def test_layout_vertical_structure():
    spec = FunctionSpec(layer_widths=(2, 6, 6, 3))
    key = StegoKey(
        strategy=Strategy.VERTICAL,
        layer_bits=[
            np.zeros(2, dtype=bool),
            np.array([0, 1, 0, 1, 0, 1], dtype=bool),
            np.array([1, 1, 0, 0, 1, 0], dtype=bool),
            np.zeros(3, dtype=bool),
        ],
        shared_io=True,
    )
    layout = secret_layout(key, spec)
    assert layout.secret_widths == (2, 3, 3, 3)
    assert list(layout.indices[0]) == [0, 1]
    assert list(layout.indices[1]) == [1, 3, 5]
    assert list(layout.indices[2]) == [0, 1, 4]
    assert list(layout.indices[3]) == [0, 1, 2]


def test_layout_horizontal_prefix():
    spec = FunctionSpec(layer_widths=(2, 6, 5, 7, 3))
    key = StegoKey(
        strategy=Strategy.HORIZONTAL,
        layer_bits=[
            np.zeros(2, dtype=bool),
            np.array([1, 1, 1, 1, 1, 1], dtype=bool),
            np.array([1, 1, 1, 1, 1], dtype=bool),
            np.zeros(7, dtype=bool),
            np.zeros(3, dtype=bool),
        ],
        shared_io=True,
    )
    layout = secret_layout(key, spec)
    # the last 1-bearing layer acts as the hidden model's output
    assert layout.secret_widths == (2, 6, 5)
    assert len(layout.indices) == 3


def test_layout_rejects_nonzero_io_bits():
    spec = FunctionSpec(layer_widths=(2, 4, 3))
    key = StegoKey(
        strategy=Strategy.VERTICAL,
        layer_bits=[
            np.array([1, 0], dtype=bool),
            np.array([1, 1, 0, 0], dtype=bool),
            np.zeros(3, dtype=bool),
        ],
        shared_io=True,
    )
    with pytest.raises(StructuralError):
        secret_layout(key, spec)


def test_layout_rejects_gap_in_horizontal_run():
    spec = FunctionSpec(layer_widths=(2, 4, 4, 4, 3))
    key = StegoKey(
        strategy=Strategy.HORIZONTAL,
        layer_bits=[
            np.zeros(2, dtype=bool),
            np.array([1, 1, 0, 0], dtype=bool),
            np.zeros(4, dtype=bool),
            np.array([1, 1, 0, 0], dtype=bool),
            np.zeros(3, dtype=bool),
        ],
        shared_io=True,
    )
    with pytest.raises(StructuralError):
        secret_layout(key, spec)


# ---------------------------------------------------------------------------
# Model files


def _example_model(seed=0, widths=(2, 6, 5, 3), rff=None, role=Role.PLAIN):
    spec = FunctionSpec(layer_widths=widths, rff=rff)
    params = init_params(spec, seed=seed)
    return ModelFile(spec=spec, role=role, params=params)


def test_save_load_round_trip(tmp_path):
    model = _example_model(seed=4)
    path = tmp_path / "m.sinr"
    save_model(path, model)
    loaded = load_model(path)
    assert loaded.spec == model.spec
    assert loaded.role is model.role
    stored = quantize_stored(model.params)
    for a, b in zip(loaded.params.weights, stored.weights):
        assert np.array_equal(a, b)
    for a, b in zip(loaded.params.biases, stored.biases):
        assert np.array_equal(a, b)


def test_save_load_round_trip_with_rff(tmp_path):
    model = _example_model(
        seed=9, rff=RffConfig(m=8, sigma=2.5, seed=77), role=Role.SECRET
    )
    path = tmp_path / "m.sinr"
    save_model(path, model)
    loaded = load_model(path)
    assert loaded.spec.rff == RffConfig(m=8, sigma=2.5, seed=77)
    assert loaded.role is Role.SECRET


def test_save_is_byte_deterministic(tmp_path):
    model = _example_model(seed=1)
    p1, p2 = tmp_path / "a.sinr", tmp_path / "b.sinr"
    save_model(p1, model)
    save_model(p2, model)
    assert p1.read_bytes() == p2.read_bytes()


def test_stored_precision_survives_reload(tmp_path):
    # what is written is exactly the float32 rounding of the live weights,
    # so a second save of the loaded model is byte-identical
    model = _example_model(seed=2)
    p1, p2 = tmp_path / "a.sinr", tmp_path / "b.sinr"
    save_model(p1, model)
    save_model(p2, load_model(p1))
    assert p1.read_bytes() == p2.read_bytes()


def test_load_rejects_bad_magic(tmp_path):
    model = _example_model()
    path = tmp_path / "m.sinr"
    save_model(path, model)
    raw = bytearray(path.read_bytes())
    raw[0:4] = b"JUNK"
    path.write_bytes(bytes(raw))
    with pytest.raises(MagicError):
        load_model(path)


def test_load_rejects_future_version(tmp_path):
    model = _example_model()
    path = tmp_path / "m.sinr"
    save_model(path, model)
    raw = bytearray(path.read_bytes())
    raw[4:6] = (2).to_bytes(2, "little")
    path.write_bytes(bytes(raw))
    with pytest.raises(VersionError):
        load_model(path)


def test_load_rejects_truncation(tmp_path):
    model = _example_model()
    path = tmp_path / "m.sinr"
    save_model(path, model)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) // 2])
    with pytest.raises(TruncationError):
        load_model(path)


def test_load_rejects_trailing_bytes(tmp_path):
    model = _example_model()
    path = tmp_path / "m.sinr"
    save_model(path, model)
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(FormatError):
        load_model(path)


def test_load_detects_payload_corruption(tmp_path):
    model = _example_model()
    path = tmp_path / "m.sinr"
    save_model(path, model)
    raw = bytearray(path.read_bytes())
    raw[-12] ^= 0x01  # inside the float payload, before the checksum
    path.write_bytes(bytes(raw))
    with pytest.raises(ChecksumError):
        load_model(path)


def test_load_detects_header_corruption_as_checksum_or_format(tmp_path):
    # flipping a width byte either breaks the declared parameter count or
    # trips the checksum; both are rejected
    model = _example_model()
    path = tmp_path / "m.sinr"
    save_model(path, model)
    raw = bytearray(path.read_bytes())
    raw[14] ^= 0x04  # low byte of the first layer width
    path.write_bytes(bytes(raw))
    with pytest.raises((ChecksumError, FormatError, TruncationError)):
        load_model(path)


def test_model_file_requires_congruent_params():
    spec = FunctionSpec(layer_widths=(2, 6, 3))
    wrong = init_params(FunctionSpec(layer_widths=(2, 7, 3)), seed=0)
    with pytest.raises(StructuralError):
        ModelFile(spec=spec, role=Role.PLAIN, params=wrong)


@given(
    widths=st.lists(st.integers(min_value=1, max_value=7), min_size=3, max_size=5),
    seed=st.integers(min_value=0, max_value=2**32 - 1),
)
@settings(max_examples=25, deadline=None)
def test_save_load_property(tmp_path_factory, widths, seed):
    model = _example_model(seed=seed, widths=tuple(widths))
    path = tmp_path_factory.mktemp("models") / "m.sinr"
    save_model(path, model)
    loaded = load_model(path)
    assert loaded.spec.layer_widths == tuple(widths)
    stored = quantize_stored(model.params)
    assert np.array_equal(loaded.params.flat(), stored.flat())


# ---------------------------------------------------------------------------
# pinned_rng


def test_pinned_rng_is_stable_across_instances():
    a = pinned_rng(123).uniform(size=5)
    b = pinned_rng(123).uniform(size=5)
    assert np.array_equal(a, b)
    c = pinned_rng(124).uniform(size=5)
    assert not np.array_equal(a, c)
