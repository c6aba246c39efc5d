"""Deterministic file emitters: PGM renderings, odometer CSV, cluster text."""
from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .grid import Odometer, SandpileConfig


def gray_levels(heights: np.ndarray) -> np.ndarray:
    """Height k renders as 255 - 60 * min(k, 4)."""
    return (255 - 60 * np.minimum(np.asarray(heights), 4)).astype(np.uint8)


def render_box(config: SandpileConfig, odometer: Odometer | None = None):
    """Box to draw: the visited cluster's bounding box (toppled box grown by
    one), or just the origin when nothing toppled.

    Without an odometer the box of cells differing from the background is
    used instead.
    """
    zero = (0,) * config.dim
    if odometer is None:
        t = config.trimmed()
        return t.lo, t.hi
    if (odometer.values > 0).any():
        nz = np.argwhere(odometer.values > 0) - np.array(odometer.origin)
        return tuple(int(v) - 1 for v in nz.min(axis=0)), tuple(int(v) + 1 for v in nz.max(axis=0))
    return zero, zero


def pgm_bytes(config: SandpileConfig, odometer: Odometer | None = None) -> bytes:
    """Binary P5 image; rows run from the largest y down, columns by x."""
    if config.dim != 2:
        raise ValueError("PGM rendering needs d = 2")
    lo, hi = render_box(config, odometer)
    grid = config.on_box(lo, hi)          # axis 0 = x, axis 1 = y
    img = gray_levels(grid.T[::-1])
    height, width = img.shape
    return f"P5\n{width} {height}\n255\n".encode("ascii") + img.tobytes()


def read_pgm(data: bytes) -> np.ndarray:
    """Parse a P5 image as written by :func:`pgm_bytes`."""
    magic, dims, maxval, rest = data.split(b"\n", 3)
    if magic != b"P5" or maxval != b"255":
        raise ValueError("not an 8-bit P5 image")
    width, height = (int(t) for t in dims.split())
    return np.frombuffer(rest, dtype=np.uint8).reshape(height, width)


def emit_pgm(config: SandpileConfig, path, odometer: Odometer | None = None) -> None:
    Path(path).write_bytes(pgm_bytes(config, odometer))


def axis_names(d: int) -> list[str]:
    return ["x", "y", "z"][:d] if d <= 3 else [f"x{i}" for i in range(1, d + 1)]


def odometer_csv(odometer: Odometer) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(axis_names(odometer.dim) + ["count"])
    # argwhere walks the C-ordered box, which is lexicographic in coordinates
    for idx in np.argwhere(odometer.values > 0):
        p = [int(i) - o for i, o in zip(idx, odometer.origin)]
        w.writerow(p + [int(odometer.values[tuple(idx)])])
    return buf.getvalue()


def emit_odometer_csv(odometer: Odometer, path) -> None:
    Path(path).write_text(odometer_csv(odometer))
