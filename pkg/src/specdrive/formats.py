"""On-disk formats: raw frames, cubes, layouts, masks and renders.

Everything is either JSON or a trivially parseable binary: raw frames are
little-endian uint16 rasters with a JSON sidecar, cubes are a JSON header
line followed by band-major float32 planes, masks are binary portable
graymaps (P5) holding class indices, renders are portable pixmaps (P6) with
a fixed palette so two runs are diffable byte for byte.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import CorruptContainer, DimensionMismatch
from .metrics import IGNORE_LABEL
from .mosaic import MosaicLayout

# class index -> RGB; cycled for indices past the end, ignore label is black
PALETTE = (
    (84, 84, 84),     # 0 drivable surface
    (255, 255, 255),  # 1 road marks
    (178, 34, 34),    # 2 non-drivable / other
    (34, 139, 34),    # 3 vegetation
    (70, 130, 180),   # 4 sky
    (218, 165, 32),
    (186, 85, 211),
    (0, 139, 139),
    (244, 164, 96),
    (119, 136, 153),
)


def save_raw(path, frame: np.ndarray, layout_id: str = "default-5x5",
             bit_depth: int = 16) -> None:
    frame = np.ascontiguousarray(frame, dtype="<u2")
    Path(path).write_bytes(frame.tobytes())
    sidecar = {
        "width": frame.shape[1],
        "height": frame.shape[0],
        "bit_depth": bit_depth,
        "layout_id": layout_id,
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar))


def load_raw(path) -> tuple[np.ndarray, dict]:
    sidecar_path = Path(str(path) + ".json")
    if not sidecar_path.exists():
        raise CorruptContainer(f"{path}: missing sidecar {sidecar_path}")
    meta = json.loads(sidecar_path.read_text())
    w, h = int(meta["width"]), int(meta["height"])
    if not 1 <= int(meta.get("bit_depth", 16)) <= 16:
        raise CorruptContainer(f"{path}: bit depth {meta.get('bit_depth')} > 16")
    raw = Path(path).read_bytes()
    if len(raw) != w * h * 2:
        raise CorruptContainer(
            f"{path}: payload is {len(raw)} bytes, sidecar promises {w * h * 2}"
        )
    return np.frombuffer(raw, "<u2").reshape(h, w).copy(), meta


def save_cube(path, cube: np.ndarray) -> None:
    cube = np.asarray(cube, dtype=np.float32)
    if cube.ndim != 3:
        raise DimensionMismatch(f"cube must be 3-d, got {cube.shape}")
    h, w, b = cube.shape
    header = json.dumps(
        {"height": h, "width": w, "bands": b, "dtype": "f32le", "order": "band-major"}
    )
    planes = np.ascontiguousarray(cube.transpose(2, 0, 1), dtype="<f4")
    with open(path, "wb") as f:
        f.write(header.encode() + b"\n")
        f.write(planes.tobytes())


def load_cube(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise CorruptContainer(f"{path}: missing cube header")
    try:
        meta = json.loads(raw[:nl].decode())
        h, w, b = int(meta["height"]), int(meta["width"]), int(meta["bands"])
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, ValueError) as e:
        raise CorruptContainer(f"{path}: bad cube header ({e})") from None
    payload = raw[nl + 1 :]
    if len(payload) != h * w * b * 4:
        raise CorruptContainer(f"{path}: cube payload truncated")
    planes = np.frombuffer(payload, "<f4").reshape(b, h, w)
    return np.ascontiguousarray(planes.transpose(1, 2, 0))


def save_layout(path, layout: MosaicLayout) -> None:
    Path(path).write_text(
        json.dumps(
            {
                "tile": layout.tile.tolist(),
                "active_origin": list(layout.active_origin),
                "active_size": list(layout.active_size),
                "center_offset": list(layout.center_offset),
                "id": layout.layout_id,
            }
        )
    )


def load_layout(path) -> MosaicLayout:
    d = json.loads(Path(path).read_text())
    return MosaicLayout(
        tile=np.asarray(d["tile"], dtype=np.int64),
        active_origin=tuple(d["active_origin"]),
        active_size=tuple(d["active_size"]),
        center_offset=tuple(d["center_offset"]),
        layout_id=d.get("id", "custom"),
    )


def save_mask(path, mask: np.ndarray) -> None:
    mask = np.ascontiguousarray(mask, dtype=np.uint8)
    h, w = mask.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(mask.tobytes())


def load_mask(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P5"):
        raise CorruptContainer(f"{path}: not a binary graymap")
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":  # comment line
            pos = raw.find(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    w, h, maxval = (int(f) for f in fields)
    if maxval != 255:
        raise CorruptContainer(f"{path}: unsupported maxval {maxval}")
    data = raw[pos : pos + w * h]
    if len(data) != w * h:
        raise CorruptContainer(f"{path}: graymap payload truncated")
    return np.frombuffer(data, np.uint8).reshape(h, w).copy()


def render_mask(mask: np.ndarray, ignore_label: int = IGNORE_LABEL) -> np.ndarray:
    """Class indices to RGB with the fixed palette; ignore pixels are black."""
    rgb = np.zeros((*mask.shape, 3), np.uint8)
    for cid in np.unique(mask):
        if cid == ignore_label:
            continue
        rgb[mask == cid] = PALETTE[int(cid) % len(PALETTE)]
    return rgb


def save_render(path, mask: np.ndarray, ignore_label: int = IGNORE_LABEL) -> None:
    rgb = render_mask(mask, ignore_label)
    h, w = mask.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(rgb.tobytes())


def save_grid(path, grid) -> None:
    Path(path).write_text(grid.to_json())


def load_grid(path):
    from .tiling import PatchGrid

    return PatchGrid.from_json(Path(path).read_text())
