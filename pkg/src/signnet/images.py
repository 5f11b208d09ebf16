"""Grayscale image carrier, binary PGM codec, and the preprocessing chain.

The P5 codec is the normative decoder.  Other formats (the source corpus is
JPG) ride through Pillow when it is installed; nothing in the test surface
depends on that path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ParameterError
from .tensor import Prng, Tensor


@dataclass
class GrayImage:
    """8-bit grayscale raster, pixels row-major [height, width]."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if self.pixels.shape != (self.height, self.width):
            raise ParameterError(
                f"pixel block {self.pixels.shape} does not match "
                f"{self.height}x{self.width}"
            )


_WHITESPACE = b" \t\n\r\x0b\x0c"


def _skip_header_space(data: bytes, pos: int) -> int:
    # whitespace and '#' comments are legal between header tokens
    while pos < len(data):
        c = data[pos : pos + 1]
        if c in (b"#",):
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
        elif c and c in _WHITESPACE:
            pos += 1
        else:
            break
    return pos


def _read_header_int(data: bytes, pos: int, what: str) -> tuple[int, int, int]:
    pos = _skip_header_space(data, pos)
    start = pos
    while pos < len(data) and data[pos : pos + 1].isdigit():
        pos += 1
    if pos == start:
        raise FormatError(f"expected {what}", offset=start)
    return int(data[start:pos]), start, pos


def decode_pgm(data: bytes) -> GrayImage:
    """Decode a binary (P5) PGM stream with maxval 255."""
    if data[:2] != b"P5":
        raise FormatError("not a P5 stream", offset=0)
    width, _, pos = _read_header_int(data, 2, "width")
    height, _, pos = _read_header_int(data, pos, "height")
    maxval, mv_start, pos = _read_header_int(data, pos, "maxval")
    if width <= 0 or height <= 0:
        raise FormatError(f"bad raster size {width}x{height}", offset=2)
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}", offset=mv_start)
    if pos >= len(data) or data[pos : pos + 1] not in _WHITESPACE:
        raise FormatError("expected whitespace before payload", offset=pos)
    pos += 1
    need = width * height
    payload = data[pos : pos + need]
    if len(payload) < need:
        raise FormatError(
            f"truncated payload: expected {need} bytes, found {len(payload)}",
            offset=len(data),
        )
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return GrayImage(width=width, height=height, pixels=pixels.copy())


def encode_pgm(img: GrayImage) -> bytes:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.pixels.tobytes()


def load_gray_image(path: str) -> GrayImage:
    """Read a grayscale image from disk; PGM natively, anything else via Pillow."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == b"P5":
        return decode_pgm(data)
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover
        raise FormatError(f"{path}: not a P5 stream and Pillow is unavailable") from exc
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.uint8)
    return GrayImage(width=arr.shape[1], height=arr.shape[0], pixels=arr)


def bilinear_resize(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample; x_src = (x_dst + 0.5) * (W_src / W_dst) - 0.5, clamped."""
    if out_h <= 0 or out_w <= 0:
        raise ParameterError(f"target size must be positive, got {out_h}x{out_w}")
    src = np.asarray(src, dtype=np.float64)
    in_h, in_w = src.shape
    ys = np.clip((np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5, 0.0, in_h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5, 0.0, in_w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    p00 = src[y0[:, None], x0[None, :]]
    p01 = src[y0[:, None], x1[None, :]]
    p10 = src[y1[:, None], x0[None, :]]
    p11 = src[y1[:, None], x1[None, :]]
    top = (1.0 - fx) * p00 + fx * p01
    bottom = (1.0 - fx) * p10 + fx * p11
    return (1.0 - fy) * top + fy * bottom


def center_crop(arr: np.ndarray, fraction: float) -> np.ndarray:
    """Axis-aligned center crop keeping the given side fraction."""
    if not 0.0 < fraction <= 1.0:
        raise ParameterError(f"crop fraction must be in (0, 1], got {fraction}")
    h, w = arr.shape
    ch = max(1, int(np.floor(fraction * h + 0.5)))
    cw = max(1, int(np.floor(fraction * w + 0.5)))
    top = (h - ch) // 2
    left = (w - cw) // 2
    return arr[top : top + ch, left : left + cw]


def preprocess_image(
    img: GrayImage, target_side: int, crop_fraction: float = 1.0
) -> Tensor:
    """Center crop, bilinear resize to target, scale to [0, 1].

    Returns float32 [1, target, target].
    """
    if target_side <= 0:
        raise ParameterError(f"target side must be positive, got {target_side}")
    arr = center_crop(img.pixels.astype(np.float64), crop_fraction)
    resized = bilinear_resize(arr, target_side, target_side)
    out = (resized / 255.0).astype(np.float32)
    return out[None, :, :]


def augment_crop_jitter(
    x: Tensor, rng: Prng, min_area: float = 0.9, max_area: float = 1.0
) -> Tensor:
    """Random crop of min_area..max_area of the image, resized back.

    Consumes exactly three stream draws per call (area, row offset, column
    offset) so replay under a fixed seed is deterministic.
    """
    if not 0.0 < min_area <= max_area <= 1.0:
        raise ParameterError(f"bad area range [{min_area}, {max_area}]")
    _, h, w = x.shape
    u_area = rng.uniform()
    u_row = rng.uniform()
    u_col = rng.uniform()
    area = min_area + (max_area - min_area) * u_area
    side = float(np.sqrt(area))
    ch = max(1, int(np.floor(side * h + 0.5)))
    cw = max(1, int(np.floor(side * w + 0.5)))
    top = int(np.floor(u_row * (h - ch + 1)))
    left = int(np.floor(u_col * (w - cw + 1)))
    crop = x[0, top : top + ch, left : left + cw].astype(np.float64)
    back = bilinear_resize(crop, h, w).astype(x.dtype)
    return back[None, :, :]
