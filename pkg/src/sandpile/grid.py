"""Lattice points, configurations over a uniform background, and odometers.

A configuration is stored as a dense array over a finite box plus a
``background`` height that every cell outside the box implicitly holds.
Array index ``i`` along an axis corresponds to lattice coordinate
``i - origin[axis]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

Point = tuple[int, ...]


def neighbors(p: Sequence[int]) -> list[Point]:
    """The 2d lattice neighbours of ``p``: minus then plus along each axis."""
    p = tuple(int(v) for v in p)
    out = []
    for axis in range(len(p)):
        for step in (-1, 1):
            q = list(p)
            q[axis] += step
            out.append(tuple(q))
    return out


def square_mask(shape: Sequence[int], origin: Sequence[int], r: int) -> np.ndarray:
    """Boolean mask of S_r = {p : max_i |p_i| <= r - 1} over an array box."""
    mask = np.ones(tuple(shape), dtype=bool)
    if r <= 0:
        return np.zeros(tuple(shape), dtype=bool)
    for axis, (n, o) in enumerate(zip(shape, origin)):
        coord = np.abs(np.arange(n) - o) <= r - 1
        idx = [None] * len(shape)
        idx[axis] = slice(None)
        mask &= coord[tuple(idx)]
    return mask


def diamond_mask(shape: Sequence[int], origin: Sequence[int], r: int) -> np.ndarray:
    """Boolean mask of D_r = {p : sum_i |p_i| <= r - 1} over an array box."""
    total = np.zeros(tuple(shape), dtype=np.int64)
    for axis, (n, o) in enumerate(zip(shape, origin)):
        idx = [None] * len(shape)
        idx[axis] = slice(None)
        total = total + np.abs(np.arange(n) - o)[tuple(idx)]
    return total <= r - 1


@dataclass
class BoxArray:
    """Dense int64 array over an axis-aligned box, with a constant outside."""

    values: np.ndarray
    origin: Point
    fill: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int64)
        self.origin = tuple(int(o) for o in self.origin)
        if len(self.origin) != self.values.ndim:
            raise ValueError("origin rank does not match array rank")
        for n, o in zip(self.values.shape, self.origin):
            if not 0 <= o < n:
                raise ValueError("box must contain the lattice origin")

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def lo(self) -> Point:
        return tuple(-o for o in self.origin)

    @property
    def hi(self) -> Point:
        return tuple(n - 1 - o for n, o in zip(self.values.shape, self.origin))

    def _index(self, p: Sequence[int]):
        if len(p) != self.dim:
            raise ValueError(f"point {tuple(p)} has wrong dimension for d={self.dim}")
        idx = tuple(int(c) + o for c, o in zip(p, self.origin))
        if all(0 <= i < n for i, n in zip(idx, self.values.shape)):
            return idx
        return None

    def __getitem__(self, p: Sequence[int]) -> int:
        idx = self._index(p)
        return self.fill if idx is None else int(self.values[idx])

    def padded(self, lo: Sequence[int], hi: Sequence[int]):
        """Copy extended so that the box covers [lo, hi] on every axis."""
        before = [max(0, -l - o) for o, l in zip(self.origin, lo)]
        after = [max(0, h - cur) for h, cur in zip(hi, self.hi)]
        values = np.pad(
            self.values,
            list(zip(before, after)),
            mode="constant",
            constant_values=self.fill,
        )
        origin = tuple(o + b for o, b in zip(self.origin, before))
        return type(self)(values, origin, self.fill)

    def on_box(self, lo: Sequence[int], hi: Sequence[int]) -> np.ndarray:
        """Values over the box [lo, hi], filling with the outside constant."""
        big = self.padded(lo, hi)
        sl = tuple(
            slice(l + o, h + o + 1) for l, h, o in zip(lo, hi, big.origin)
        )
        return big.values[sl]

    def trimmed(self):
        """Smallest box (containing the origin) covering all non-fill cells."""
        nz = np.argwhere(self.values != self.fill)
        if len(nz) == 0:
            lo = hi = np.array(self.origin)
        else:
            lo = np.minimum(nz.min(axis=0), self.origin)
            hi = np.maximum(nz.max(axis=0), self.origin)
        sl = tuple(slice(int(a), int(b) + 1) for a, b in zip(lo, hi))
        origin = tuple(int(o - a) for o, a in zip(self.origin, lo))
        return type(self)(self.values[sl].copy(), origin, self.fill)

    def nonfill_points(self) -> list[Point]:
        nz = np.argwhere(self.values != self.fill)
        return [tuple(int(c - o) for c, o in zip(row, self.origin)) for row in nz]

    def __eq__(self, other) -> bool:
        if not isinstance(other, BoxArray) or other.dim != self.dim:
            return NotImplemented
        if self.fill != other.fill:
            return False
        lo = tuple(min(a, b) for a, b in zip(self.lo, other.lo))
        hi = tuple(max(a, b) for a, b in zip(self.hi, other.hi))
        return bool(np.array_equal(self.on_box(lo, hi), other.on_box(lo, hi)))


class SandpileConfig(BoxArray):
    """Particle heights on Z^d: a dense box over a uniform ground level."""

    def __post_init__(self):
        super().__post_init__()
        if self.fill < 0:
            raise ValueError("background must be non-negative")
        if self.values.size and self.values.min() < 0:
            raise ValueError("heights must be non-negative")

    @property
    def background(self) -> int:
        return self.fill

    @property
    def heights(self) -> np.ndarray:
        return self.values

    def height(self, p: Sequence[int]) -> int:
        return self[p]

    def copy(self) -> "SandpileConfig":
        return SandpileConfig(self.values.copy(), self.origin, self.fill)

    def is_stable(self) -> bool:
        threshold = 2 * self.dim
        return self.fill < threshold and bool((self.values < threshold).all())


class Odometer(BoxArray):
    """Per-cell toppling counts; zero outside the box."""

    @property
    def counts(self) -> np.ndarray:
        return self.values

    def total(self) -> int:
        return int(self.values.sum())


def zero_odometer(like: BoxArray) -> Odometer:
    return Odometer(np.zeros_like(like.values), like.origin, 0)


def make_point_source(n: int, h: int = 2, d: int = 2) -> SandpileConfig:
    """``n`` particles at the origin, ``h`` everywhere else."""
    if n < 0 or h < 0:
        raise ValueError("n and h must be non-negative")
    if d < 1:
        raise ValueError("dimension must be positive")
    values = np.array(n, dtype=np.int64).reshape((1,) * d)
    return SandpileConfig(values, (0,) * d, h)


def make_square_config(r1: int, r2: int, h: int = 2, d: int = 2) -> SandpileConfig:
    """S_r1 filled with 2d inside S_r2 filled with 2d-1, over background ``h``."""
    if not 0 <= r1 <= r2:
        raise ValueError(f"need 0 <= r1 <= r2, got r1={r1}, r2={r2}")
    side = max(2 * r2 - 1, 1)
    shape = (side,) * d
    origin = (max(r2 - 1, 0),) * d
    values = np.full(shape, h, dtype=np.int64)
    values[square_mask(shape, origin, r2)] = 2 * d - 1
    values[square_mask(shape, origin, r1)] = 2 * d
    return SandpileConfig(values, origin, h)


def config_leq(a: SandpileConfig, b: SandpileConfig) -> bool:
    """Pointwise a <= b over all of Z^d."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if a.fill > b.fill:
        return False
    lo = tuple(min(x, y) for x, y in zip(a.lo, b.lo))
    hi = tuple(max(x, y) for x, y in zip(a.hi, b.hi))
    return bool((a.on_box(lo, hi) <= b.on_box(lo, hi)).all())


def add_everywhere(c: SandpileConfig, k: int) -> SandpileConfig:
    if k < 0:
        raise ValueError("k must be non-negative")
    return SandpileConfig(c.values + k, c.origin, c.fill + k)


def add_at(c: SandpileConfig, p: Sequence[int], k: int) -> SandpileConfig:
    """Copy of ``c`` with ``k`` extra particles at ``p``."""
    out = c.padded(tuple(min(a, b) for a, b in zip(c.lo, p)),
                   tuple(max(a, b) for a, b in zip(c.hi, p)))
    idx = tuple(int(x) + o for x, o in zip(p, out.origin))
    out.values[idx] += k
    return SandpileConfig(out.values, out.origin, out.fill)


def laplacian(u: BoxArray) -> np.ndarray:
    """L(u) = -2d u + sum of neighbours, on the box of ``u`` grown by one."""
    d = u.dim
    ext = u.padded(tuple(l - 1 for l in u.lo), tuple(h + 1 for h in u.hi)).values
    out = -2 * d * ext
    for axis in range(d):
        out[tuple(slice(1, None) if a == axis else slice(None) for a in range(d))] += \
            ext[tuple(slice(None, -1) if a == axis else slice(None) for a in range(d))]
        out[tuple(slice(None, -1) if a == axis else slice(None) for a in range(d))] += \
            ext[tuple(slice(1, None) if a == axis else slice(None) for a in range(d))]
    return out


# -- text fixtures -----------------------------------------------------------

def format_config(c: SandpileConfig) -> str:
    """``d h`` / box bounds as lo hi pairs / row-major heights."""
    bounds = " ".join(f"{l} {h}" for l, h in zip(c.lo, c.hi))
    body = " ".join(str(int(v)) for v in c.values.ravel())
    return f"{c.dim} {c.background}\n{bounds}\n{body}\n"


def parse_config(text: str) -> SandpileConfig:
    lines = text.strip().splitlines()
    if len(lines) < 2:
        raise ValueError("config text needs a header and a box line")
    d, h = (int(t) for t in lines[0].split())
    bounds = [int(t) for t in lines[1].split()]
    if len(bounds) != 2 * d:
        raise ValueError(f"expected {2 * d} box bounds, got {len(bounds)}")
    lo, hi = bounds[0::2], bounds[1::2]
    shape = tuple(b - a + 1 for a, b in zip(lo, hi))
    heights = [int(t) for line in lines[2:] for t in line.split()]
    if len(heights) != int(np.prod(shape)):
        raise ValueError(f"expected {int(np.prod(shape))} heights, got {len(heights)}")
    values = np.array(heights, dtype=np.int64).reshape(shape)
    c = SandpileConfig(values, tuple(-a for a in lo), h)
    return c


def config_from_points(points: Iterable[tuple[Sequence[int], int]], h: int, d: int) -> SandpileConfig:
    """Build a configuration from explicit ``(point, height)`` pairs."""
    c = make_point_source(h, h, d)
    for p, v in points:
        c = add_at(c, p, 0)
        idx = tuple(int(x) + o for x, o in zip(p, c.origin))
        c.values[idx] = v
    return c
