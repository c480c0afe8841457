import numpy as np
import pytest

from dtchan import formats
from dtchan.errors import FormatError


def test_csi_round_trip():
    rng = np.random.default_rng(0)
    h = (rng.standard_normal((16, 24)) + 1j * rng.standard_normal((16, 24))).astype(np.complex64)
    blob = formats.encode_csi(h)
    assert blob[:4] == b"DTCC" and len(blob) == 12 + 16 * 24 * 8
    assert np.array_equal(formats.decode_csi(blob), h.astype(complex))


def test_map_round_trip_with_nan():
    values = np.arange(12, dtype=float).reshape(3, 4)
    values[1, 2] = np.nan
    blob = formats.encode_map(values)
    back = formats.decode_map(blob)
    assert np.isnan(back[1, 2])
    assert np.array_equal(np.nan_to_num(back, nan=-1), np.nan_to_num(values.astype(np.float32), nan=-1))


def test_nan_bit_pattern_is_canonical():
    a = np.array([[np.nan]])
    b = np.array([[np.float64("nan") * -1.0]])
    assert formats.encode_map(a) == formats.encode_map(b)


def test_mask_round_trip_odd_columns():
    rng = np.random.default_rng(1)
    mask = (rng.random((7, 13)) < 0.4).astype(np.uint8)
    assert np.array_equal(formats.decode_mask(formats.encode_mask(mask)), mask)


def test_cloud_round_trips():
    rng = np.random.default_rng(2)
    pts = rng.standard_normal((50, 3)).astype(np.float32).astype(float)
    assert np.array_equal(formats.decode_cloud(formats.encode_cloud(pts)), pts)
    text = formats.cloud_to_xyz(pts)
    assert np.allclose(formats.cloud_from_xyz(text), pts)
    assert len(text.strip().splitlines()) == 50


class TestSections:
    def test_round_trip(self):
        sections = [b"alpha", b"", b"some longer payload" * 3]
        blob = formats.encode_sections(sections)
        assert formats.decode_sections(blob) == sections

    def test_checksum_detects_flip(self):
        blob = bytearray(formats.encode_sections([b"payload"]))
        blob[8] ^= 0x40
        with pytest.raises(FormatError, match="checksum"):
            formats.decode_sections(bytes(blob))

    def test_truncation_reports_offset(self):
        blob = formats.encode_sections([b"payload-one", b"payload-two"])
        with pytest.raises(FormatError) as exc:
            formats.decode_sections(blob[: len(blob) - 9])
        assert exc.value.offset is not None

    def test_container_size_matches_declared_sections(self):
        sections = [b"a" * 5, b"b" * 17]
        blob = formats.encode_sections(sections)
        # magic + u16 version + u32 count + per-section (u32 + len) + crc32
        want = 4 + 2 + 4 + sum(4 + len(s) for s in sections) + 4
        assert len(blob) == want

    def test_bad_magic(self):
        with pytest.raises(FormatError, match="magic"):
            formats.decode_sections(b"NOPE" + b"\x00" * 20)


def test_csv_export():
    values = np.array([[1.5, np.nan], [0.25, -3.0]])
    text = formats.grid_to_csv(values)
    lines = text.strip().split("\n")
    assert lines[0] == "1.5,nan"
    assert lines[1] == "0.25,-3.0"


class TestPpm:
    def test_header_and_size(self):
        values = np.linspace(0, 1, 12).reshape(3, 4)
        blob = formats.grid_to_ppm(values)
        assert blob.startswith(b"P6\n4 3\n255\n")
        assert len(blob) == len(b"P6\n4 3\n255\n") + 3 * 4 * 3

    def test_invalid_cells_render_gray(self):
        values = np.array([[0.0, np.nan]])
        blob = formats.grid_to_ppm(values)
        pixels = blob.split(b"255\n", 1)[1]
        assert pixels[3:6] == bytes(formats.HEAT_INVALID_RGB)

    def test_deterministic_bytes(self):
        rng = np.random.default_rng(3)
        values = rng.random((6, 5))
        assert formats.grid_to_ppm(values) == formats.grid_to_ppm(values.copy())

    def test_ramp_endpoints(self):
        assert formats.ramp_rgb(0.0) == formats.HEAT_RAMP[0][1]
        assert formats.ramp_rgb(1.0) == formats.HEAT_RAMP[-1][1]
