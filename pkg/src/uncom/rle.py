"""Run-length codec for binary pixel masks (row-major, zero-run first)."""

from __future__ import annotations

from .errors import InvariantError
from .types import PixelMask


def encode_mask(rows: list[list[int]]) -> PixelMask:
    """Encode a 2D binary mask (list of rows) into a PixelMask."""
    height = len(rows)
    width = len(rows[0]) if rows else 0
    counts: list[int] = []
    current = 0
    run = 0
    for row in rows:
        if len(row) != width:
            raise InvariantError("ragged mask rows")
        for v in row:
            bit = 1 if v else 0
            if bit == current:
                run += 1
            else:
                counts.append(run)
                current = bit
                run = 1
    counts.append(run)
    if width * height == 0:
        counts = []
    return PixelMask(width=width, height=height, rle=tuple(counts))


def decode_mask(mask: PixelMask) -> list[list[int]]:
    """Decode a PixelMask back into a 2D binary mask (list of rows)."""
    flat: list[int] = []
    bit = 0
    for count in mask.rle:
        flat.extend([bit] * count)
        bit = 1 - bit
    return [
        flat[r * mask.width : (r + 1) * mask.width] for r in range(mask.height)
    ]


def mask_from_bbox(bbox: tuple[float, float, float, float], width: int, height: int) -> PixelMask:
    """Rasterize a normalized bbox as a filled rectangle mask."""
    xmin = max(0, min(width, round(bbox[0] * width)))
    xmax = max(0, min(width, round(bbox[2] * width)))
    ymin = max(0, min(height, round(bbox[1] * height)))
    ymax = max(0, min(height, round(bbox[3] * height)))
    rows = [
        [1 if (xmin <= x < xmax and ymin <= y < ymax) else 0 for x in range(width)]
        for y in range(height)
    ]
    return encode_mask(rows)
