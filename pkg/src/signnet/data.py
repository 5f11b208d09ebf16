"""Dataset manifests, class histograms, and the stratified split.

A dataset root contains one subdirectory per class; the sorted directory
names define the class indices.  All CSV files are UTF-8 with LF line
endings so repeated runs produce byte-identical bytes.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field

from .errors import FormatError, ParameterError
from .tensor import Prng

log = logging.getLogger(__name__)

IMAGE_EXTENSIONS = (".pgm", ".png", ".jpg", ".jpeg", ".bmp")

# Class sizes of the 54,049-image Arabic sign alphabet corpus (32 classes,
# listed in class-index order).  Used for synthetic split rehearsals.
REFERENCE_CLASS_COUNTS = (
    1672, 1791, 1838, 1766, 1552, 1526, 1607, 1634,
    1582, 1659, 1374, 1638, 1507, 1895, 1670, 1816,
    1723, 2114, 1977, 1955, 1705, 1774, 1832, 1765,
    1819, 1592, 1371, 1722, 1791, 1343, 1746, 1293,
)

SPLIT_NAMES = ("train", "val", "test")


@dataclass
class ManifestEntry:
    path: str
    class_index: int
    class_name: str


@dataclass
class ClassHistogram:
    class_names: list[str]
    counts: list[int]

    def total(self) -> int:
        return sum(self.counts)

    def to_csv_text(self) -> str:
        lines = ["class_name,count"]
        for name, count in zip(self.class_names, self.counts):
            lines.append(f"{name},{count}")
        return "\n".join(lines) + "\n"


def scan_manifest(root: str) -> tuple[list[ManifestEntry], ClassHistogram]:
    """Walk a class-per-directory tree into a manifest plus histogram."""
    if not os.path.isdir(root):
        raise NotADirectoryError(f"dataset root is not a directory: {root}")
    class_names = sorted(
        name
        for name in os.listdir(root)
        if os.path.isdir(os.path.join(root, name))
    )
    entries: list[ManifestEntry] = []
    counts: list[int] = []
    for index, name in enumerate(class_names):
        files = sorted(
            fn
            for fn in os.listdir(os.path.join(root, name))
            if fn.lower().endswith(IMAGE_EXTENSIONS)
        )
        if not files:
            log.warning("class directory %r contains no images", name)
        counts.append(len(files))
        for fn in files:
            entries.append(ManifestEntry(f"{name}/{fn}", index, name))
    return entries, ClassHistogram(class_names, counts)


def write_manifest_csv(entries: list[ManifestEntry], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("path,class_index,class_name\n")
        for e in entries:
            fh.write(f"{e.path},{e.class_index},{e.class_name}\n")


def read_manifest_csv(path: str) -> list[ManifestEntry]:
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != "path,class_index,class_name":
            raise FormatError(f"{path}: unexpected manifest header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise FormatError(f"{path}:{lineno}: expected 3 fields")
            entries.append(ManifestEntry(parts[0], int(parts[1]), parts[2]))
    return entries


@dataclass
class SplitAssignment:
    """Split membership for one manifest, in manifest order."""

    seed: int
    ratios: tuple[float, float, float]
    rows: list[tuple[str, str]] = field(default_factory=list)

    def by_path(self) -> dict[str, str]:
        return dict(self.rows)

    def counts(self) -> dict[str, int]:
        out = {name: 0 for name in SPLIT_NAMES}
        for _, split in self.rows:
            out[split] += 1
        return out


def _check_ratios(ratios) -> tuple[float, float, float]:
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3:
        raise ParameterError(f"expected 3 ratios, got {len(ratios)}")
    if any(r <= 0.0 for r in ratios):
        raise ParameterError(f"ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ParameterError(f"ratios must sum to 1, got {sum(ratios)!r}")
    return ratios


def stratified_split(
    entries: list[ManifestEntry],
    ratios=(0.70, 0.15, 0.15),
    seed: int = 0,
) -> SplitAssignment:
    """Per-class split: floor(r_train*n) train, round-half-up(r_val*n) val,
    remainder test, after a seeded shuffle of each class.

    Classes with fewer than 3 samples go entirely to train with a warning.
    """
    ratios = _check_ratios(ratios)
    rng = Prng(seed)
    by_class: dict[int, list[int]] = {}
    for pos, entry in enumerate(entries):
        by_class.setdefault(entry.class_index, []).append(pos)
    assignment = [""] * len(entries)
    for class_index in sorted(by_class):
        positions = list(by_class[class_index])
        rng.shuffle(positions)
        n = len(positions)
        if n < 3:
            log.warning(
                "class %d has only %d samples; assigning all to train",
                class_index,
                n,
            )
            for pos in positions:
                assignment[pos] = "train"
            continue
        n_train = math.floor(ratios[0] * n)
        n_val = min(math.floor(ratios[1] * n + 0.5), n - n_train)
        for pos in positions[:n_train]:
            assignment[pos] = "train"
        for pos in positions[n_train : n_train + n_val]:
            assignment[pos] = "val"
        for pos in positions[n_train + n_val :]:
            assignment[pos] = "test"
    rows = [(entry.path, assignment[pos]) for pos, entry in enumerate(entries)]
    return SplitAssignment(seed=seed, ratios=ratios, rows=rows)


def write_split_csv(split: SplitAssignment, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("path,split\n")
        for entry_path, name in split.rows:
            fh.write(f"{entry_path},{name}\n")


def read_split_csv(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != "path,split":
            raise FormatError(f"{path}: unexpected split header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2 or parts[1] not in SPLIT_NAMES:
                raise FormatError(f"{path}:{lineno}: bad split row {line!r}")
            out[parts[0]] = parts[1]
    return out


def synthetic_manifest(counts=REFERENCE_CLASS_COUNTS) -> list[ManifestEntry]:
    """Dummy-path manifest with the given per-class sizes."""
    entries = []
    for index, count in enumerate(counts):
        name = f"class{index:02d}"
        for k in range(count):
            entries.append(ManifestEntry(f"{name}/img{k:05d}.pgm", index, name))
    return entries
