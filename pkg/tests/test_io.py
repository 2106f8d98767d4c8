import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from orthokd.errors import (
    ConfigError,
    DataError,
    FormatError,
    InvariantError,
    UnknownKeyError,
    ValueParseError,
)
from orthokd.io import (
    decode_features,
    encode_features,
    parse_config,
    parse_config_text,
    read_features,
    write_csv,
    write_features,
)


def test_empty_dump_header_bytes():
    assert encode_features(np.zeros((0, 0))) == bytes.fromhex("564B4446" "01000000" "00000000" "00000000")


def test_length_2x3(tmp_path):
    path = tmp_path / "z.vkdf"
    write_features(path, np.arange(6.0).reshape(2, 3))
    assert path.stat().st_size == 40
    write_features(path, np.arange(6.0).reshape(2, 3), labels=[1, 0])
    assert path.stat().st_size == 40 + 1 + 8


def test_layout_is_little_endian_row_major():
    data = encode_features(np.array([[1.0, 2.0]]), labels=[7])
    assert data[8:12] == b"\x01\x00\x00\x00"
    assert data[12:16] == b"\x02\x00\x00\x00"
    assert data[16:20] == np.float32(1.0).tobytes() == b"\x00\x00\x80\x3f"
    assert data[24] == 0x4C
    assert data[25:] == b"\x07\x00\x00\x00"


def test_roundtrip_with_labels(tmp_path, rng):
    z = rng.standard_normal((17, 5))
    y = rng.integers(0, 9, 17)
    write_features(tmp_path / "f", z, y)
    back, labels = read_features(tmp_path / "f")
    np.testing.assert_array_equal(labels, y)
    assert np.all(np.abs(back - z) <= 2.0**-23 * np.abs(z))
    _, none = decode_features(encode_features(z))
    assert none is None


def test_round_to_nearest_even():
    # 1 + 2**-24 is halfway between two float32 values; ties go to even (1.0)
    z, _ = decode_features(encode_features(np.array([[1 + 2.0**-24, 1 + 3 * 2.0**-24]])))
    assert z[0, 0] == 1.0
    assert z[0, 1] == 1 + 2 * 2.0**-23


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(0, 6), st.integers(0, 6)),
              elements=st.floats(-1e30, 1e30, allow_nan=False)))
def test_roundtrip_property(z):
    back, _ = decode_features(encode_features(z))
    assert back.shape == z.shape
    np.testing.assert_array_equal(back, z.astype(np.float32).astype(np.float64))


def test_corrupt_magic():
    data = bytearray(encode_features(np.ones((2, 2))))
    data[0:4] = b"XXXX"
    with pytest.raises(FormatError, match="magic"):
        decode_features(bytes(data))


def test_truncated_reports_lengths():
    data = encode_features(np.ones((2, 3)))
    with pytest.raises(FormatError, match=r"39 .*expected 40"):
        decode_features(data[:-1])
    with pytest.raises(FormatError, match="header"):
        decode_features(data[:10])


def test_bad_label_marker():
    data = bytearray(encode_features(np.ones((2, 3)), labels=[0, 1]))
    data[40] = 0x00
    with pytest.raises(FormatError, match="marker"):
        decode_features(bytes(data))


def test_bad_version():
    data = bytearray(encode_features(np.ones((1, 1))))
    data[4] = 2
    with pytest.raises(FormatError, match="version"):
        decode_features(bytes(data))


def test_nonfinite_rejected():
    with pytest.raises(DataError):
        encode_features(np.array([[np.nan]]))
    with pytest.raises(DataError):
        encode_features(np.array([[1e300]]))  # overflows float32
    data = bytearray(encode_features(np.ones((1, 1))))
    data[16:20] = np.float32(np.inf).tobytes()
    with pytest.raises(DataError):
        decode_features(bytes(data))


def test_label_count_mismatch():
    with pytest.raises(DataError):
        encode_features(np.ones((2, 2)), labels=[1])


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        write_features(tmp_path / "missing" / "f.vkdf", np.ones((1, 1)))


def test_write_csv_atomic(tmp_path):
    write_csv(tmp_path / "m.csv", "a,b", ["1,2", "3,4"])
    assert (tmp_path / "m.csv").read_text() == "a,b\n1,2\n3,4\n"
    assert [p.name for p in tmp_path.iterdir()] == ["m.csv"]


# -- config ---------------------------------------------------------------------

def test_parse_config_defaults_and_comments():
    cfg = parse_config_text("# header\nlr = 0.01  # trailing\n\nteacher_hidden = 8, 4\nrecord_wall_time = yes\n")
    assert cfg.lr == 0.01
    assert cfg.teacher_hidden == (8, 4)
    assert cfg.record_wall_time is True
    assert cfg.epochs == 50


def test_duplicate_key_last_wins():
    assert parse_config_text("epochs = 3\nepochs = 4\n").epochs == 4


def test_overrides_applied_after_file(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("epochs = 3\nbeta = 0.5\n")
    cfg = parse_config(path, ["beta=0", "seed = 7"])
    assert (cfg.epochs, cfg.beta, cfg.seed) == (3, 0.0, 7)


def test_unknown_key_has_line_number():
    with pytest.raises(UnknownKeyError, match="line 3"):
        parse_config_text("epochs = 1\n\nlearning_rate = 3\n")


def test_bad_value_has_line_number():
    with pytest.raises(ValueParseError, match="line 2"):
        parse_config_text("epochs = 1\nlr = fast\n")


def test_missing_equals():
    with pytest.raises(ConfigError, match="line 1"):
        parse_config_text("epochs 1\n")


def test_invariant_reports_offending_line():
    with pytest.raises(InvariantError, match="line 4"):
        parse_config_text("d_t = 16\nseed = 1\nepochs = 2\nd_s = 32\n")


def test_invariant_from_override_has_no_line():
    with pytest.raises(InvariantError) as info:
        parse_config_text("", ["beta=-1"])
    assert info.value.line is None


def test_to_text_roundtrip():
    cfg = parse_config_text("lr = 0.003\nteacher_hidden = 5,6\nsweep_seeds = 1,2\n")
    assert parse_config_text(cfg.to_text()) == cfg


@pytest.mark.parametrize("text", [
    "projector = conv\n", "normalizer = batchnorm\n", "activation = swish\n",
    "optimizer = lion\n", "orth_method = householder\n", "batch_size = 1\n",
])
def test_enum_and_range_validation(text):
    with pytest.raises(InvariantError, match="line 1"):
        parse_config_text(text)
