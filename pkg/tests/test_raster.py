import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slummap.raster import (
    SENTINEL2_BANDS,
    BandStack,
    FeatureRaster,
    LabelMask,
    RasterFormatError,
    ensure_aligned,
    load_band_stack,
    load_feature_raster,
    load_label_mask,
    load_prediction_map,
    save_band_stack,
    save_feature_raster,
    save_label_mask,
    save_prediction_map,
)


def test_round_trip_identity_small_stack(tmp_path):
    samples = np.array([[[0, 1], [2, 3]]], dtype=np.uint16)
    stack = BandStack(band_names=["B2"], samples=samples)
    save_band_stack(stack, tmp_path / "scene.hdr")
    loaded = load_band_stack(tmp_path / "scene.hdr")
    assert loaded.band_names == ["B2"]
    assert np.array_equal(loaded.samples, samples)


@settings(max_examples=40, deadline=None)
@given(
    width=st.integers(1, 6),
    height=st.integers(1, 6),
    n_bands=st.integers(1, 4),
    seed=st.integers(0, 2**31 - 1),
)
def test_round_trip_is_byte_identical(tmp_path_factory, width, height, n_bands, seed):
    tmp_path = tmp_path_factory.mktemp("rt")
    rng = np.random.default_rng(seed)
    samples = rng.integers(0, 65536, size=(n_bands, height, width), dtype=np.uint16)
    names = [f"B{i+2}" for i in range(n_bands)]
    save_band_stack(BandStack(band_names=names, samples=samples), tmp_path / "s.hdr")
    first = (tmp_path / "s.bin").read_bytes()
    loaded = load_band_stack(tmp_path / "s.hdr")
    save_band_stack(loaded, tmp_path / "t.hdr")
    assert (tmp_path / "t.bin").read_bytes() == first
    assert (tmp_path / "t.hdr").read_bytes() == (tmp_path / "s.hdr").read_bytes()
    assert np.array_equal(loaded.samples, samples)


def test_sentinel2_band_order_is_preserved(tmp_path):
    samples = np.zeros((10, 2, 2), dtype=np.uint16)
    save_band_stack(BandStack(band_names=list(SENTINEL2_BANDS), samples=samples), tmp_path / "p.hdr")
    assert tuple(load_band_stack(tmp_path / "p.hdr").band_names) == SENTINEL2_BANDS


def test_size_mismatch_is_rejected(tmp_path):
    (tmp_path / "bad.hdr").write_text(
        "width = 4\nheight = 4\nbands = A,B\ndtype = u16\n"
        "byte_order = little\nlayout = band-sequential row-major\n"
    )
    (tmp_path / "bad.bin").write_bytes(np.zeros(30, dtype="<u2").tobytes())
    with pytest.raises(RasterFormatError, match="corrupt"):
        load_band_stack(tmp_path / "bad.hdr")


def test_missing_files_and_unsupported_dtype(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_band_stack(tmp_path / "nope.hdr")

    (tmp_path / "f.hdr").write_text(
        "width = 1\nheight = 1\nbands = A\ndtype = f64\n"
        "byte_order = little\nlayout = band-sequential row-major\n"
    )
    (tmp_path / "f.bin").write_bytes(b"\x00" * 8)
    with pytest.raises(RasterFormatError, match="dtype"):
        load_band_stack(tmp_path / "f.hdr")

    (tmp_path / "g.hdr").write_text(
        "width = 1\nheight = 1\nbands = A\ndtype = u8\n"
        "byte_order = little\nlayout = band-sequential row-major\n"
    )
    (tmp_path / "g.bin").write_bytes(b"\x00")
    with pytest.raises(RasterFormatError, match="u16"):
        load_band_stack(tmp_path / "g.hdr")


def test_band_names_must_be_unique_and_nonempty():
    samples = np.zeros((2, 1, 1), dtype=np.uint16)
    with pytest.raises(ValueError):
        BandStack(band_names=["A", "A"], samples=samples)
    with pytest.raises(ValueError):
        BandStack(band_names=["A", ""], samples=samples)


def test_label_mask_all_zero_and_fraction(tmp_path):
    mask = LabelMask(labels=np.zeros((10, 10), dtype=np.uint8))
    assert mask.slum_fraction() == 0.0
    save_label_mask(mask, tmp_path / "m.hdr")
    loaded = load_label_mask(tmp_path / "m.hdr")
    assert loaded.slum_fraction() == 0.0
    assert loaded.valid.all()


def test_label_mask_rejects_values_above_one(tmp_path):
    grid = np.zeros((1, 4, 4), dtype=np.uint8)
    grid[0, 2, 2] = 255
    from slummap.raster import _write_planes

    _write_planes(tmp_path / "m.hdr", ["labels"], grid, "u8")
    with pytest.raises(RasterFormatError, match="255"):
        load_label_mask(tmp_path / "m.hdr")


def test_label_mask_22_percent_scene(tmp_path):
    labels = np.zeros(100, dtype=np.uint8)
    labels[:22] = 1
    mask = LabelMask(labels=labels.reshape(10, 10))
    save_label_mask(mask, tmp_path / "m.hdr")
    assert load_label_mask(tmp_path / "m.hdr").slum_fraction() == pytest.approx(0.22)


def test_prediction_map_encoding(tmp_path):
    all_slum = LabelMask(labels=np.ones((2, 2), dtype=np.uint8))
    save_prediction_map(all_slum, tmp_path / "a.pgm")
    assert (tmp_path / "a.pgm").read_bytes() == b"P5\n2 2\n255\n" + b"\xff" * 4

    all_non = LabelMask(labels=np.zeros((2, 2), dtype=np.uint8))
    save_prediction_map(all_non, tmp_path / "b.pgm")
    assert (tmp_path / "b.pgm").read_bytes().endswith(b"\x00" * 4)

    mixed = LabelMask(
        labels=np.array([[1, 0], [0, 1]], dtype=np.uint8),
        valid=np.array([[True, True], [False, True]]),
    )
    save_prediction_map(mixed, tmp_path / "c.pgm")
    assert (tmp_path / "c.pgm").read_bytes().endswith(bytes([255, 0, 128, 255]))

    back = load_prediction_map(tmp_path / "c.pgm")
    assert np.array_equal(back.labels, np.array([[1, 0], [0, 1]]))
    assert np.array_equal(back.valid, mixed.valid)


def test_feature_raster_round_trip_with_invalid_pixels(tmp_path):
    values = np.arange(8, dtype=np.float32).reshape(2, 2, 2)
    valid = np.array([[True, False], [True, True]])
    fr = FeatureRaster(feature_names=["a", "b"], values=values, valid=valid)
    save_feature_raster(fr, tmp_path / "f.hdr")
    loaded = load_feature_raster(tmp_path / "f.hdr")
    assert loaded.feature_names == ["a", "b"]
    assert np.array_equal(loaded.valid, valid)
    assert np.array_equal(loaded.values[:, valid], values[:, valid])
    assert np.isnan(loaded.values[:, ~valid]).all()


def test_loaded_rasters_are_read_only(tmp_path):
    samples = np.zeros((1, 2, 2), dtype=np.uint16)
    save_band_stack(BandStack(band_names=["B2"], samples=samples), tmp_path / "s.hdr")
    loaded = load_band_stack(tmp_path / "s.hdr")
    with pytest.raises(ValueError):
        loaded.samples[0, 0, 0] = 1

    save_label_mask(LabelMask(labels=np.zeros((2, 2), dtype=np.uint8)), tmp_path / "m.hdr")
    mask = load_label_mask(tmp_path / "m.hdr")
    with pytest.raises(ValueError):
        mask.labels[0, 0] = 1


def test_dimension_agreement_enforced():
    stack = BandStack(band_names=["A"], samples=np.zeros((1, 3, 3), dtype=np.uint16))
    mask = LabelMask(labels=np.zeros((3, 4), dtype=np.uint8))
    with pytest.raises(RasterFormatError, match="pre-aligned"):
        ensure_aligned(stack, mask)
