"""Deterministic synthetic glyph dataset.

Eight texture motifs, each a 5x5 stamp placed at a random position on a
16x16 canvas with light background noise, all drawn from the seeded
stream.  Class identity lives in the local pattern, position carries no
information, so the dataset is a desk-scale stand-in for the hand corpus
where convolutional weight sharing should beat a flat dense model.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import ParameterError
from .images import GrayImage, encode_pgm
from .tensor import Prng

# motif names listed in alphabetical order so directory scans assign the
# same class indices as the in-memory generator
GLYPH_NAMES = (
    "bars_h",
    "bars_v",
    "diag_one",
    "diag_tri",
    "dots",
    "field",
    "frame",
    "line_h",
)

MOTIF_SIDE = 5

# background noise ceiling and foreground band, chosen dark enough that
# SGD at lr 0.1 stays stable on the cnn preset
_BG_LEVEL = 10.0
_FG_LOW = 150
_FG_SPAN = 61  # fg in 150..210


def _motif(name: str) -> np.ndarray:
    """Unit-intensity 5x5 stamp for one class."""
    m = np.zeros((MOTIF_SIDE, MOTIF_SIDE), dtype=np.float64)
    eye = np.eye(MOTIF_SIDE, dtype=np.float64)
    if name == "bars_h":
        m[0::2, :] = 1.0
    elif name == "bars_v":
        m[:, 0::2] = 1.0
    elif name == "diag_one":
        m = eye.copy()
    elif name == "diag_tri":
        # three parallel diagonals, same orientation as diag_one so the
        # pair differs in stripe density rather than mirror sign
        m = np.clip(eye + np.roll(eye, 2, axis=1) + np.roll(eye, -2, axis=1), 0.0, 1.0)
    elif name == "dots":
        m[0::2, 0::2] = 1.0
    elif name == "field":
        m[:, :] = 1.0
    elif name == "frame":
        m[:, :] = 1.0
        m[1:-1, 1:-1] = 0.0
    elif name == "line_h":
        # single stripe; density pair with bars_h the way diag_one
        # pairs with diag_tri
        m[MOTIF_SIDE // 2, :] = 1.0
    else:
        raise ParameterError(f"unknown glyph {name!r}")
    return m


def synth_glyph(name: str, side: int, rng: Prng) -> np.ndarray:
    """One uint8 glyph sample.  Draw order: stamp row, stamp column,
    foreground level, background noise block."""
    span = side - MOTIF_SIDE + 1
    row = rng.below(span)
    col = rng.below(span)
    fg = float(_FG_LOW + rng.below(_FG_SPAN))
    canvas = rng.uniform_block(side * side).reshape(side, side) * _BG_LEVEL
    stamp = _motif(name)
    patch = canvas[row : row + MOTIF_SIDE, col : col + MOTIF_SIDE]
    canvas[row : row + MOTIF_SIDE, col : col + MOTIF_SIDE] = (
        patch * (1.0 - stamp) + stamp * fg
    )
    return np.clip(np.floor(canvas + 0.5), 0.0, 255.0).astype(np.uint8)


def synth_glyph_arrays(
    classes: int = 8,
    per_class: int = 200,
    side: int = 16,
    seed: int = 0,
) -> list[tuple[str, np.ndarray]]:
    """(class_name, pixels) pairs, grouped by class, deterministic in seed."""
    if not 1 <= classes <= len(GLYPH_NAMES):
        raise ParameterError(f"classes must be in [1, {len(GLYPH_NAMES)}], got {classes}")
    if per_class < 1 or side < MOTIF_SIDE + 3:
        raise ParameterError(f"bad glyph request: {per_class} per class at side {side}")
    rng = Prng(seed)
    out = []
    for name in GLYPH_NAMES[:classes]:
        for _ in range(per_class):
            out.append((name, synth_glyph(name, side, rng)))
    return out


def write_glyph_dataset(
    root: str,
    classes: int = 8,
    per_class: int = 200,
    side: int = 16,
    seed: int = 0,
) -> str:
    """Write the glyph corpus as a class-per-directory PGM tree."""
    samples = synth_glyph_arrays(classes, per_class, side, seed)
    counters: dict[str, int] = {}
    for name, pixels in samples:
        index = counters.get(name, 0)
        counters[name] = index + 1
        class_dir = os.path.join(root, name)
        os.makedirs(class_dir, exist_ok=True)
        img = GrayImage(width=side, height=side, pixels=pixels)
        with open(os.path.join(class_dir, f"g{index:04d}.pgm"), "wb") as fh:
            fh.write(encode_pgm(img))
    return root
