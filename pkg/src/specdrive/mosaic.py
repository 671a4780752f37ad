"""Raw mosaic frames to reflectance cubes.

A snapshot camera covers the sensor with a repeating 5x5 grid of narrowband
filters, so each raw pixel carries one of 25 bands. The pipeline turns a
16-bit radiance frame into a (mosaic_rows, mosaic_cols, bands) reflectance
cube in four stages:

  1. crop to the filter-covered active window,
  2. dark/white reflectance correction,
  3. band extraction (gather each band's lattice samples),
  4. translation to center (interpolate every band at each mosaic center).

Every stage exists in a vectorized and a naive scalar form. Both are written
against the same canonical float32 operation order, so their outputs are
bitwise identical; the naive form doubles as the reference for benchmarks.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch

STAGE_CROP = "Image cropping"
STAGE_REFLECTANCE = "Reflectance correction"
STAGE_EXTRACT = "Band extraction"
STAGE_TRANSLATE = "Translation to center"
STAGE_TOTAL = "Total"
STAGE_NAMES = (STAGE_CROP, STAGE_REFLECTANCE, STAGE_EXTRACT, STAGE_TRANSLATE)

FULL_SCALE = 65535.0
# white-dark spans at or below this many counts are treated as degenerate
DEFAULT_EPS = 1e-6 * FULL_SCALE


@dataclass(frozen=True)
class MosaicLayout:
    """Geometry of the filter mosaic on the sensor.

    tile maps the in-mosaic offset (dr, dc) to a band index; active_origin /
    active_size locate the filter-covered window on the raw frame.
    """

    tile: np.ndarray
    active_origin: tuple[int, int] = (0, 0)
    active_size: tuple[int, int] = (1080, 2045)
    center_offset: tuple[int, int] = (2, 2)
    layout_id: str = "default-5x5"

    def __post_init__(self):
        tile = np.asarray(self.tile, dtype=np.int64)
        object.__setattr__(self, "tile", tile)
        if tile.ndim != 2 or tile.shape[0] != tile.shape[1]:
            raise DimensionMismatch(f"tile must be square, got {tile.shape}")
        k = tile.shape[0]
        if sorted(tile.ravel().tolist()) != list(range(k * k)):
            raise DimensionMismatch("tile must be a bijection onto band indices")
        if self.active_size[0] % k or self.active_size[1] % k:
            raise DimensionMismatch(
                f"active size {self.active_size} not divisible by mosaic pitch {k}"
            )
        if not (0 <= self.center_offset[0] < k and 0 <= self.center_offset[1] < k):
            raise DimensionMismatch("center offset outside the mosaic tile")

    @property
    def pitch(self) -> int:
        return self.tile.shape[0]

    @property
    def bands(self) -> int:
        return self.pitch * self.pitch

    @property
    def cube_shape(self) -> tuple[int, int, int]:
        k = self.pitch
        return (self.active_size[0] // k, self.active_size[1] // k, self.bands)

    def band_offset(self, band: int) -> tuple[int, int]:
        """Return the (dr, dc) lattice offset of a band inside the tile."""
        pos = np.argwhere(self.tile == band)
        return int(pos[0, 0]), int(pos[0, 1])


def default_layout() -> MosaicLayout:
    """Row-major band order: band = 5*dr + dc. The vendor's true spectral
    ordering is not public; downstream math does not depend on it."""
    return MosaicLayout(tile=np.arange(25).reshape(5, 5))


@dataclass
class PreprocessResult:
    cube: np.ndarray
    timings_ms: dict[str, float] = field(default_factory=dict)
    degenerate_pixels: int = 0


def crop_clip(frame: np.ndarray, layout: MosaicLayout) -> np.ndarray:
    """Cut the filter-covered active window out of the raw frame."""
    r0, c0 = layout.active_origin
    h, w = layout.active_size
    if frame.ndim != 2 or frame.shape[0] < r0 + h or frame.shape[1] < c0 + w:
        raise DimensionMismatch(
            f"frame {frame.shape} smaller than active window "
            f"{layout.active_size} at origin {layout.active_origin}"
        )
    return frame[r0 : r0 + h, c0 : c0 + w].copy()


def reflectance_correct(
    img: np.ndarray,
    dark: np.ndarray,
    white: np.ndarray,
    eps: float = DEFAULT_EPS,
) -> tuple[np.ndarray, int]:
    """Normalize radiance counts to [0, 1] reflectance.

    r = clamp((img - dark) / max(white - dark, eps), 0, 1), computed in
    float32. Pixels whose white-dark span is <= eps are degenerate: they are
    forced to 0 and counted (second return value), not treated as fatal.
    """
    if not (img.shape == dark.shape == white.shape):
        raise DimensionMismatch(
            f"frame shapes disagree: {img.shape} / {dark.shape} / {white.shape}"
        )
    if eps <= 0:
        raise ValueError("eps must be positive")
    out = np.empty(img.shape, dtype=np.float32)
    n_bad = _reflectance_rows(img, dark, white, np.float32(eps), out, 0, img.shape[0])
    return out, n_bad


def _reflectance_rows(img, dark, white, eps32, out, r_lo, r_hi):
    i = img[r_lo:r_hi].astype(np.float32)
    d = dark[r_lo:r_hi].astype(np.float32)
    span = white[r_lo:r_hi].astype(np.float32)
    np.subtract(span, d, out=span)
    bad = span <= eps32
    np.subtract(i, d, out=i)
    np.maximum(span, eps32, out=span)
    np.divide(i, span, out=i)
    np.clip(i, np.float32(0.0), np.float32(1.0), out=i)
    i[bad] = np.float32(0.0)
    out[r_lo:r_hi] = i
    return int(bad.sum())


def _reflectance_rows_naive(img, dark, white, eps32, out, r_lo, r_hi):
    zero = np.float32(0.0)
    one = np.float32(1.0)
    n_bad = 0
    for r in range(r_lo, r_hi):
        for c in range(img.shape[1]):
            i = np.float32(img[r, c])
            d = np.float32(dark[r, c])
            w = np.float32(white[r, c])
            span = w - d
            denom = span if span > eps32 else eps32
            v = (i - d) / denom
            if v < zero:
                v = zero
            elif v > one:
                v = one
            if span <= eps32:
                v = zero
                n_bad += 1
            out[r, c] = v
    return n_bad


def band_extract(refl: np.ndarray, layout: MosaicLayout) -> np.ndarray:
    """Gather each band's own lattice samples into a cube, no interpolation."""
    _check_active(refl, layout)
    cube = np.empty(layout.cube_shape, dtype=np.float32)
    _extract_rows(refl, layout, cube, 0, layout.cube_shape[0])
    return cube


def _extract_rows(refl, layout, cube, m_lo, m_hi):
    p = layout.pitch
    for dr in range(p):
        for dc in range(p):
            b = int(layout.tile[dr, dc])
            cube[m_lo:m_hi, :, b] = refl[m_lo * p + dr : m_hi * p : p, dc::p]


def _extract_rows_naive(refl, layout, cube, m_lo, m_hi):
    p = layout.pitch
    n_cols = cube.shape[1]
    for mr in range(m_lo, m_hi):
        for mc in range(n_cols):
            for dr in range(p):
                for dc in range(p):
                    b = int(layout.tile[dr, dc])
                    cube[mr, mc, b] = refl[mr * p + dr, mc * p + dc]


def _axis_coeffs(n_mosaic: int, offset: int, center: int, pitch: int):
    """Interpolation bookkeeping for one axis of one band.

    The band samples sit at pitch*i + offset; the query points at
    pitch*i + center. Returns (i0, i1, t) so the interpolated value is
    (1-t)*v[i0] + t*v[i1]. Queries outside the sample hull fall back to the
    nearest sample (t forced to 0), which composes to linear interpolation
    on edges and nearest-sample at corners.
    """
    idx = np.arange(n_mosaic, dtype=np.int64)
    if center >= offset:
        i0 = idx.copy()
        t = np.full(n_mosaic, np.float32(center - offset) / np.float32(pitch), np.float32)
    else:
        i0 = idx - 1
        t = np.full(
            n_mosaic, np.float32(pitch + center - offset) / np.float32(pitch), np.float32
        )
    i1 = i0 + 1
    below = i0 < 0
    i0[below] = 0
    i1[below] = 0
    t[below] = np.float32(0.0)
    above = i1 > n_mosaic - 1
    i1[above] = n_mosaic - 1
    t[above] = np.float32(0.0)
    # where t collapsed to 0, i1 is unused; keep it in range
    return i0, i1, t


def translate_to_center(refl: np.ndarray, layout: MosaicLayout) -> np.ndarray:
    """Estimate every band at each mosaic's center position.

    Bilinear interpolation on the pitch-5 lattice of that band's samples;
    the band whose native offset is the center is copied verbatim.
    """
    _check_active(refl, layout)
    lattice = band_extract(refl, layout)
    cube = np.empty(layout.cube_shape, dtype=np.float32)
    _translate_rows(lattice, layout, cube, 0, layout.cube_shape[0])
    return cube


def _translate_rows(lattice, layout, cube, m_lo, m_hi):
    p = layout.pitch
    hm, wm, _ = layout.cube_shape
    cr, cc = layout.center_offset
    one = np.float32(1.0)
    for dr in range(p):
        for dc in range(p):
            b = int(layout.tile[dr, dc])
            s = lattice[:, :, b]
            if dr == cr and dc == cc:
                cube[m_lo:m_hi, :, b] = s[m_lo:m_hi]
                continue
            r0, r1, tr = _axis_coeffs(hm, dr, cr, p)
            c0, c1, tc = _axis_coeffs(wm, dc, cc, p)
            r0, r1, tr = r0[m_lo:m_hi], r1[m_lo:m_hi], tr[m_lo:m_hi]
            tc_row = tc[None, :]
            tr_col = tr[:, None]
            a = s[r0]
            bb = s[r1]
            top = (one - tc_row) * np.take(a, c0, 1) + tc_row * np.take(a, c1, 1)
            bot = (one - tc_row) * np.take(bb, c0, 1) + tc_row * np.take(bb, c1, 1)
            cube[m_lo:m_hi, :, b] = (one - tr_col) * top + tr_col * bot


def _translate_rows_naive(lattice, layout, cube, m_lo, m_hi):
    p = layout.pitch
    hm, wm, _ = layout.cube_shape
    cr, cc = layout.center_offset
    one = np.float32(1.0)
    for dr in range(p):
        for dc in range(p):
            b = int(layout.tile[dr, dc])
            s = lattice[:, :, b]
            if dr == cr and dc == cc:
                for mr in range(m_lo, m_hi):
                    for mc in range(wm):
                        cube[mr, mc, b] = s[mr, mc]
                continue
            r0, r1, tr = _axis_coeffs(hm, dr, cr, p)
            c0, c1, tc = _axis_coeffs(wm, dc, cc, p)
            for mr in range(m_lo, m_hi):
                for mc in range(wm):
                    t_r = tr[mr]
                    t_c = tc[mc]
                    top = (one - t_c) * s[r0[mr], c0[mc]] + t_c * s[r0[mr], c1[mc]]
                    bot = (one - t_c) * s[r1[mr], c0[mc]] + t_c * s[r1[mr], c1[mc]]
                    cube[mr, mc, b] = (one - t_r) * top + t_r * bot


def _check_active(refl: np.ndarray, layout: MosaicLayout):
    if refl.shape != layout.active_size:
        raise DimensionMismatch(
            f"expected active frame {layout.active_size}, got {refl.shape}"
        )


def _row_bands(n_rows: int, workers: int) -> list[tuple[int, int]]:
    workers = max(1, min(workers, n_rows))
    step = (n_rows + workers - 1) // workers
    return [(lo, min(lo + step, n_rows)) for lo in range(0, n_rows, step)]


def preprocess_pipeline(
    frame: np.ndarray,
    dark: np.ndarray,
    white: np.ndarray,
    layout: MosaicLayout | None = None,
    *,
    eps: float = DEFAULT_EPS,
    threads: int = 1,
    vectorized: bool = True,
) -> PreprocessResult:
    """Run the four preprocessing stages and time each one.

    Work is partitioned by row bands across `threads` workers. Every pixel is
    computed independently and no reductions cross workers, so the cube is
    bitwise identical for any worker count and for both kernel variants.
    """
    if layout is None:
        layout = default_layout()
    if threads < 1:
        raise ValueError("threads must be >= 1")

    refl_fn = _reflectance_rows if vectorized else _reflectance_rows_naive
    extract_fn = _extract_rows if vectorized else _extract_rows_naive
    translate_fn = _translate_rows if vectorized else _translate_rows_naive
    timings: dict[str, float] = {}
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

    def run_banded(fn, n_rows, *args):
        bands = _row_bands(n_rows, threads)
        if pool is None or len(bands) == 1:
            return [fn(*args, lo, hi) for lo, hi in bands]
        futs = [pool.submit(fn, *args, lo, hi) for lo, hi in bands]
        return [f.result() for f in futs]

    try:
        t0 = time.perf_counter()
        active = crop_clip(frame, layout)
        t1 = time.perf_counter()
        timings[STAGE_CROP] = (t1 - t0) * 1e3
        # reference frames are corrected over the same active window
        dark_a = crop_clip(dark, layout) if dark.shape != active.shape else dark
        white_a = crop_clip(white, layout) if white.shape != active.shape else white

        t0 = time.perf_counter()
        refl = np.empty(active.shape, dtype=np.float32)
        bad_counts = run_banded(
            refl_fn, active.shape[0], active, dark_a, white_a, np.float32(eps), refl
        )
        t1 = time.perf_counter()
        timings[STAGE_REFLECTANCE] = (t1 - t0) * 1e3

        t0 = time.perf_counter()
        lattice = np.empty(layout.cube_shape, dtype=np.float32)
        run_banded(extract_fn, layout.cube_shape[0], refl, layout, lattice)
        t1 = time.perf_counter()
        timings[STAGE_EXTRACT] = (t1 - t0) * 1e3

        t0 = time.perf_counter()
        cube = np.empty(layout.cube_shape, dtype=np.float32)
        run_banded(translate_fn, layout.cube_shape[0], lattice, layout, cube)
        t1 = time.perf_counter()
        timings[STAGE_TRANSLATE] = (t1 - t0) * 1e3
    finally:
        if pool is not None:
            pool.shutdown()

    timings[STAGE_TOTAL] = sum(timings[name] for name in STAGE_NAMES)
    return PreprocessResult(
        cube=cube, timings_ms=timings, degenerate_pixels=sum(bad_counts)
    )
