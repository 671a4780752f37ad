"""Overlapping patch grids and probability-map reconstruction.

Patches are laid out centrosymmetrically: origins are strided forward from
the low edge and mirrored back from the high edge, then merged. When the
stride does not evenly fill the axis, the extra overlap lands in the middle
of the image, which is where predictions benefit from it most. Overlapping
predictions are averaged per pixel using the overlap-index matrix (the sum
of all patch masks).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidGeometry, ShapeMismatch


@dataclass(frozen=True)
class PatchGrid:
    patch_size: int
    row_starts: tuple[int, ...]
    col_starts: tuple[int, ...]
    image_size: tuple[int, int]

    def __post_init__(self):
        h, w = self.image_size
        for s in self.row_starts:
            if not 0 <= s <= h - self.patch_size:
                raise InvalidGeometry(f"row start {s} out of range for height {h}")
        for s in self.col_starts:
            if not 0 <= s <= w - self.patch_size:
                raise InvalidGeometry(f"col start {s} out of range for width {w}")

    @property
    def n_patches(self) -> int:
        return len(self.row_starts) * len(self.col_starts)

    def origins(self) -> list[tuple[int, int]]:
        """Patch origins in row-major order over (row_start, col_start)."""
        return [(r, c) for r in self.row_starts for c in self.col_starts]

    def to_json(self) -> str:
        return json.dumps(
            {
                "patch": self.patch_size,
                "rows": list(self.row_starts),
                "cols": list(self.col_starts),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "PatchGrid":
        d = json.loads(text)
        patch = int(d["patch"])
        rows = tuple(int(v) for v in d["rows"])
        cols = tuple(int(v) for v in d["cols"])
        image_size = (rows[-1] + patch, cols[-1] + patch)
        return cls(patch, rows, cols, image_size)


def _mirrored_starts(dim: int, patch: int, stride: int) -> tuple[int, ...]:
    """Stride forward from 0 up to the axis midpoint, mirror from the far
    edge, and merge. Covers the axis and is symmetric under
    s -> (dim - patch) - s even when the stride does not divide evenly."""
    if patch > dim:
        raise InvalidGeometry(f"patch {patch} exceeds image dimension {dim}")
    if stride <= 0:
        raise InvalidGeometry("stride must be positive")
    last = dim - patch
    mid = last / 2
    forward = []
    s = 0
    while s <= mid:
        forward.append(s)
        s += stride
    starts = sorted(set(forward) | {last - s for s in forward})
    gaps = np.diff(starts)
    if len(gaps) and gaps.max() > patch:
        raise InvalidGeometry(
            f"stride {stride} leaves pixels uncovered (gap {gaps.max()} > patch {patch})"
        )
    return tuple(starts)


def build_grid(
    image_size: tuple[int, int], patch_size: int, v_stride: int, h_stride: int
) -> PatchGrid:
    """Build the centrosymmetric overlapping grid for an image."""
    h, w = image_size
    rows = _mirrored_starts(h, patch_size, v_stride)
    cols = _mirrored_starts(w, patch_size, h_stride)
    return PatchGrid(patch_size, rows, cols, (h, w))


def overlap_index(grid: PatchGrid) -> np.ndarray:
    """Per-pixel count of covering patches (>= 1 everywhere by construction)."""
    h, w = grid.image_size
    counts = np.zeros((h, w), dtype=np.int64)
    for r, c in grid.origins():
        counts[r : r + grid.patch_size, c : c + grid.patch_size] += 1
    return counts


def extract_patches(cube: np.ndarray, grid: PatchGrid) -> list[np.ndarray]:
    """Copy out each patch, row-major over (row_start, col_start)."""
    h, w = cube.shape[:2]
    if (h, w) != grid.image_size:
        raise InvalidGeometry(
            f"grid built for {grid.image_size}, cube is {(h, w)}"
        )
    p = grid.patch_size
    return [cube[r : r + p, c : c + p].copy() for r, c in grid.origins()]


def reconstruct(
    prob_patches: list[np.ndarray],
    grid: PatchGrid,
    oi: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Average per-class probabilities of overlapping patches.

    Returns (prob_map, labels). Accumulation runs in patch order, so the
    result does not depend on how patch inference was parallelized. Argmax
    ties break toward the lowest class index.
    """
    if len(prob_patches) != grid.n_patches:
        raise ShapeMismatch(
            f"expected {grid.n_patches} patches, got {len(prob_patches)}"
        )
    p = grid.patch_size
    classes = prob_patches[0].shape[-1]
    for patch in prob_patches:
        if patch.shape != (p, p, classes):
            raise ShapeMismatch(
                f"patch shape {patch.shape} does not match ({p}, {p}, {classes})"
            )
    if oi is None:
        oi = overlap_index(grid)
    h, w = grid.image_size
    acc = np.zeros((h, w, classes), dtype=np.float64)
    for (r, c), patch in zip(grid.origins(), prob_patches):
        acc[r : r + p, c : c + p] += patch
    prob_map = (acc / oi[:, :, None]).astype(np.float32)
    labels = np.argmax(prob_map, axis=-1).astype(np.uint8)
    return prob_map, labels
