import numpy as np
import pytest

from specdrive import mosaic
from specdrive.errors import DimensionMismatch
from specdrive.mosaic import (
    STAGE_NAMES,
    STAGE_TOTAL,
    MosaicLayout,
    band_extract,
    crop_clip,
    default_layout,
    preprocess_pipeline,
    reflectance_correct,
    translate_to_center,
)


def test_crop_takes_active_window():
    frame = np.arange(1088 * 2048, dtype=np.uint16).reshape(1088, 2048)
    active = crop_clip(frame, default_layout())
    assert active.shape == (1080, 2045)
    assert np.array_equal(active, frame[:1080, :2045])


def test_crop_identity_on_active_frame(small_layout):
    frame = np.arange(20 * 25, dtype=np.uint16).reshape(20, 25)
    assert np.array_equal(crop_clip(frame, small_layout), frame)


def test_crop_preserves_constant(small_layout):
    frame = np.full((22, 30), 7, np.uint16)
    assert (crop_clip(frame, small_layout) == 7).all()


def test_crop_rejects_small_frame(small_layout):
    with pytest.raises(DimensionMismatch):
        crop_clip(np.zeros((19, 25), np.uint16), small_layout)


def test_crop_respects_origin():
    lay = MosaicLayout(tile=np.arange(25).reshape(5, 5), active_origin=(3, 2),
                       active_size=(10, 15))
    frame = np.arange(20 * 20, dtype=np.uint16).reshape(20, 20)
    assert np.array_equal(crop_clip(frame, lay), frame[3:13, 2:17])


def test_reflectance_endpoints_and_midpoint():
    img = np.array([[100, 500, 300]], np.uint16)
    dark = np.full_like(img, 100)
    white = np.full_like(img, 500)
    r, bad = reflectance_correct(img, dark, white)
    assert bad == 0
    assert r.dtype == np.float32
    np.testing.assert_allclose(r, [[0.0, 1.0, 0.5]])


def test_reflectance_clamps_out_of_range():
    img = np.array([[50, 700]], np.uint16)
    dark = np.full_like(img, 100)
    white = np.full_like(img, 500)
    r, _ = reflectance_correct(img, dark, white)
    assert r[0, 0] == 0.0 and r[0, 1] == 1.0


def test_reflectance_degenerate_pixels_zeroed_and_counted():
    img = np.array([[400, 400]], np.uint16)
    dark = np.array([[100, 100]], np.uint16)
    white = np.array([[100, 500]], np.uint16)  # first pixel: white == dark
    r, bad = reflectance_correct(img, dark, white)
    assert bad == 1
    assert r[0, 0] == 0.0
    assert r[0, 1] == pytest.approx(0.75)


def test_reflectance_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        reflectance_correct(np.zeros((2, 2)), np.zeros((2, 3)), np.zeros((2, 2)))


def test_band_extract_fixed_point(small_layout):
    # every mosaic holds pixel value = band index -> cube[r, c, b] = b
    refl = np.zeros(small_layout.active_size, np.float32)
    for dr in range(5):
        for dc in range(5):
            refl[dr::5, dc::5] = small_layout.tile[dr, dc]
    cube = band_extract(refl, small_layout)
    expect = np.broadcast_to(np.arange(25, dtype=np.float32), cube.shape)
    assert np.array_equal(cube, expect)


def test_band_extract_single_mosaic():
    lay = MosaicLayout(tile=np.arange(25).reshape(5, 5), active_size=(5, 5))
    refl = np.arange(25, dtype=np.float32).reshape(5, 5)
    cube = band_extract(refl, lay)
    assert cube.shape == (1, 1, 25)
    # tile is row-major identity, so band b reads tile position b
    assert np.array_equal(cube[0, 0], np.arange(25, dtype=np.float32))


def test_band_extract_full_size_shape():
    refl = np.zeros((1080, 2045), np.float32)
    assert band_extract(refl, default_layout()).shape == (216, 409, 25)


def test_band_extract_is_permutation_gather(rng, small_layout):
    refl = rng.uniform(0, 1, small_layout.active_size).astype(np.float32)
    cube = band_extract(refl, small_layout)
    for dr in range(5):
        for dc in range(5):
            b = small_layout.tile[dr, dc]
            assert sorted(cube[:, :, b].ravel()) == sorted(refl[dr::5, dc::5].ravel())


def test_translate_exact_on_affine_fields(rng):
    lay = MosaicLayout(tile=np.arange(25).reshape(5, 5), active_size=(50, 60))
    hm, wm, _ = lay.cube_shape
    rows = np.arange(50, dtype=np.float64)[:, None]
    cols = np.arange(60, dtype=np.float64)[None, :]
    centers_r = 5 * np.arange(hm) + 2
    centers_c = 5 * np.arange(wm) + 2
    for _ in range(100):
        a, b = rng.uniform(-0.002, 0.002, 2)
        c = rng.uniform(0.2, 0.8)
        field = (a * rows + b * cols + c).astype(np.float32)
        cube = translate_to_center(field, lay)
        expect = a * centers_r[:, None] + b * centers_c[None, :] + c
        err = np.abs(cube[1:-1, 1:-1] - expect[1:-1, 1:-1, None])
        assert err.max() <= 1e-5


def test_translate_constant_everywhere(small_layout):
    field = np.full(small_layout.active_size, 0.3, np.float32)
    cube = translate_to_center(field, small_layout)
    assert np.array_equal(cube, np.full_like(cube, np.float32(0.3)))


def test_translate_center_band_copied_verbatim(rng, small_layout):
    refl = rng.uniform(0, 1, small_layout.active_size).astype(np.float32)
    cube = translate_to_center(refl, small_layout)
    b_center = small_layout.tile[2, 2]
    assert np.array_equal(cube[:, :, b_center], refl[2::5, 2::5])


def test_naive_stages_bitwise_match_vectorized(rng, small_layout):
    frame = rng.integers(400, 60000, (22, 28)).astype(np.uint16)
    dark = np.full((22, 28), 300, np.uint16)
    white = np.full((22, 28), 61000, np.uint16)
    fast = preprocess_pipeline(frame, dark, white, small_layout, vectorized=True)
    slow = preprocess_pipeline(frame, dark, white, small_layout, vectorized=False)
    assert np.array_equal(fast.cube, slow.cube)


def test_pipeline_composes_stages(rng, small_layout):
    frame = rng.integers(400, 60000, (22, 28)).astype(np.uint16)
    dark = np.full((22, 28), 300, np.uint16)
    white = np.full((22, 28), 61000, np.uint16)
    res = preprocess_pipeline(frame, dark, white, small_layout)
    active = crop_clip(frame, small_layout)
    refl, _ = reflectance_correct(active, crop_clip(dark, small_layout),
                                  crop_clip(white, small_layout))
    assert np.array_equal(res.cube, translate_to_center(refl, small_layout))


def test_pipeline_thread_count_determinism(rng, small_layout):
    frame = rng.integers(400, 60000, (22, 28)).astype(np.uint16)
    dark = np.full((22, 28), 300, np.uint16)
    white = np.full((22, 28), 61000, np.uint16)
    ref = preprocess_pipeline(frame, dark, white, small_layout, threads=1).cube
    for t in (2, 4, 8):
        cube = preprocess_pipeline(frame, dark, white, small_layout, threads=t).cube
        assert np.array_equal(ref, cube)


def test_pipeline_timing_names(rng, small_layout):
    frame = rng.integers(400, 60000, (22, 28)).astype(np.uint16)
    dark = np.full((22, 28), 300, np.uint16)
    white = np.full((22, 28), 61000, np.uint16)
    res = preprocess_pipeline(frame, dark, white, small_layout)
    assert set(res.timings_ms) == set(STAGE_NAMES) | {STAGE_TOTAL}
    assert res.timings_ms[STAGE_TOTAL] == pytest.approx(
        sum(res.timings_ms[n] for n in STAGE_NAMES)
    )


def test_layout_validation():
    bad = np.arange(25).reshape(5, 5)
    bad[0, 0] = 1  # not a bijection
    with pytest.raises(DimensionMismatch):
        MosaicLayout(tile=bad)
    with pytest.raises(DimensionMismatch):
        MosaicLayout(tile=np.arange(25).reshape(5, 5), active_size=(21, 25))


def test_axis_coeffs_interior_and_borders():
    i0, i1, t = mosaic._axis_coeffs(4, offset=0, center=2, pitch=5)
    assert list(i0) == [0, 1, 2, 3]
    assert list(i1) == [1, 2, 3, 3]
    assert t[0] == pytest.approx(0.4) and t[-1] == 0.0
    i0, i1, t = mosaic._axis_coeffs(4, offset=4, center=2, pitch=5)
    assert list(i0) == [0, 0, 1, 2]
    assert list(i1) == [0, 1, 2, 3]
    assert t[0] == 0.0 and t[1] == pytest.approx(0.6)
