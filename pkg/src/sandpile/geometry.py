"""Toppled and visited clusters and the geometric predicates used on them."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .engine import StabilizationResult
from .grid import BoxArray, Odometer, Point, SandpileConfig, diamond_mask, square_mask


@dataclass
class Cluster:
    """A finite set of lattice cells stored as a bitmap over a box."""

    mask: np.ndarray
    origin: Point

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        self.origin = tuple(int(o) for o in self.origin)

    @classmethod
    def from_points(cls, points: Iterable[Sequence[int]], d: int = 2) -> "Cluster":
        pts = np.array([tuple(p) for p in points], dtype=np.int64).reshape(-1, d)
        if len(pts) == 0:
            return cls(np.zeros((1,) * d, dtype=bool), (0,) * d)
        lo = np.minimum(pts.min(axis=0), 0)
        hi = np.maximum(pts.max(axis=0), 0)
        mask = np.zeros(tuple(hi - lo + 1), dtype=bool)
        mask[tuple((pts - lo).T)] = True
        return cls(mask, tuple(-lo))

    @classmethod
    def square(cls, r: int, d: int = 2) -> "Cluster":
        """S_r = {p : max_i |p_i| <= r - 1}."""
        side = max(2 * r - 1, 1)
        origin = (max(r - 1, 0),) * d
        return cls(square_mask((side,) * d, origin, r), origin)

    @classmethod
    def diamond(cls, r: int, d: int = 2) -> "Cluster":
        """D_r = {p : sum_i |p_i| <= r - 1}."""
        side = max(2 * r - 1, 1)
        origin = (max(r - 1, 0),) * d
        return cls(diamond_mask((side,) * d, origin, r), origin)

    @property
    def dim(self) -> int:
        return self.mask.ndim

    @property
    def cells(self) -> set[Point]:
        return set(self.points())

    def points(self) -> list[Point]:
        """Cells in lexicographic coordinate order."""
        return [tuple(int(c - o) for c, o in zip(row, self.origin))
                for row in np.argwhere(self.mask)]

    def __len__(self) -> int:
        return int(self.mask.sum())

    def __bool__(self) -> bool:
        return bool(self.mask.any())

    def __contains__(self, p) -> bool:
        idx = tuple(int(c) + o for c, o in zip(p, self.origin))
        if all(0 <= i < n for i, n in zip(idx, self.mask.shape)):
            return bool(self.mask[idx])
        return False

    def _as_box(self) -> BoxArray:
        return BoxArray(self.mask.astype(np.int64), self.origin, 0)

    def on_box(self, lo, hi) -> np.ndarray:
        return self._as_box().on_box(lo, hi).astype(bool)

    def _common(self, other: "Cluster"):
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        a, b = self._as_box(), other._as_box()
        lo = tuple(min(x, y) for x, y in zip(a.lo, b.lo))
        hi = tuple(max(x, y) for x, y in zip(a.hi, b.hi))
        return self.on_box(lo, hi), other.on_box(lo, hi), lo

    def __eq__(self, other) -> bool:
        if not isinstance(other, Cluster):
            return NotImplemented
        a, b, _ = self._common(other)
        return bool(np.array_equal(a, b))

    def issubset(self, other: "Cluster") -> bool:
        a, b, _ = self._common(other)
        return not bool((a & ~b).any())

    def __le__(self, other: "Cluster") -> bool:
        return self.issubset(other)

    def union(self, other: "Cluster") -> "Cluster":
        a, b, lo = self._common(other)
        return Cluster(a | b, tuple(-l for l in lo))

    __or__ = union

    def first_outside(self, other: "Cluster") -> Point | None:
        """Lexicographically first cell of ``self`` missing from ``other``."""
        a, b, lo = self._common(other)
        bad = np.argwhere(a & ~b)
        if len(bad) == 0:
            return None
        return tuple(int(c) + l for c, l in zip(bad[0], lo))

    def first_difference(self, other: "Cluster") -> Point | None:
        """Lexicographically first cell in exactly one of the two clusters."""
        a, b, lo = self._common(other)
        diff = np.argwhere(a != b)
        if len(diff) == 0:
            return None
        return tuple(int(c) + l for c, l in zip(diff[0], lo))


def _nonzero_cluster(values: np.ndarray, origin) -> Cluster:
    return Cluster(values > 0, origin)


def toppled_cluster(result: StabilizationResult) -> Cluster:
    """Cells toppled at least once."""
    odo = result.odometer
    return _nonzero_cluster(odo.values, odo.origin)


def outer_boundary(c: Cluster) -> Cluster:
    """Cells outside ``c`` with a lattice neighbour in ``c``."""
    d = c.dim
    mask = np.pad(c.mask, 1)
    grown = mask.copy()
    for axis in range(d):
        grown |= np.roll(mask, 1, axis=axis)
        grown |= np.roll(mask, -1, axis=axis)
    return Cluster(grown & ~mask, tuple(o + 1 for o in c.origin))


def received_cluster(result: StabilizationResult) -> Cluster:
    """Cells that received at least one particle, read off the odometer."""
    odo = result.odometer
    d = odo.dim
    ext = np.pad(odo.values, 1)
    got = np.zeros_like(ext)
    for axis in range(d):
        got += np.roll(ext, 1, axis=axis)
        got += np.roll(ext, -1, axis=axis)
    return _nonzero_cluster(got, tuple(o + 1 for o in odo.origin))


def visited_cluster(result: StabilizationResult) -> Cluster:
    """Toppled cells together with every cell that received a particle."""
    return toppled_cluster(result) | received_cluster(result)


def radius(c: Cluster) -> int:
    """0 for the empty set, else 1 + the largest L-infinity norm in ``c``."""
    if not c:
        return 0
    pts = np.argwhere(c.mask) - np.array(c.origin)
    return int(np.abs(pts).max()) + 1


def match_square(c: Cluster) -> int | None:
    """The r with c == S_r, or None when ``c`` is not such a square."""
    r = radius(c)
    if r == 0:
        return 0
    return r if c == Cluster.square(r, c.dim) else None


def contains_diamond(c: Cluster, r: int) -> bool:
    if r <= 0:
        return True
    return Cluster.diamond(r, c.dim).issubset(c)


def largest_diamond(c: Cluster) -> int:
    """Largest r with D_r inside ``c`` (0 if the origin is missing)."""
    if c.dim and (0,) * c.dim not in c:
        return 0
    # D_r grows by one L1 shell per step, so scan shells of the L1 norm.
    l1 = np.zeros(c.mask.shape, dtype=np.int64)
    for axis, (n, o) in enumerate(zip(c.mask.shape, c.origin)):
        idx = [None] * c.dim
        idx[axis] = slice(None)
        l1 = l1 + np.abs(np.arange(n) - o)[tuple(idx)]
    missing = l1[~c.mask]
    # shells that poke outside the stored box are missing too
    reach = min(min(o, n - 1 - o) for n, o in zip(c.mask.shape, c.origin))
    first_gap = reach + 1
    if missing.size:
        first_gap = min(first_gap, int(missing.min()))
    return first_gap


def adjacent_zero_pairs(final: SandpileConfig, toppled: Cluster) -> int:
    """Unordered neighbouring pairs inside ``toppled`` both left empty."""
    if not toppled:
        return 0
    lo = tuple(-o for o in toppled.origin)
    hi = tuple(n - 1 - o for n, o in zip(toppled.mask.shape, toppled.origin))
    empty = (final.on_box(lo, hi) == 0) & toppled.mask
    total = 0
    for axis in range(toppled.dim):
        a = [slice(None)] * toppled.dim
        b = [slice(None)] * toppled.dim
        a[axis] = slice(0, -1)
        b[axis] = slice(1, None)
        total += int((empty[tuple(a)] & empty[tuple(b)]).sum())
    return total


def domino_tiling(r: int) -> list[tuple[Point, Point]]:
    """Horizontal dominoes tiling D_r row by row from each row's left end.

    A row of odd length leaves its rightmost cell unpaired.
    """
    out = []
    for y in range(-(r - 1), r):
        half = r - 1 - abs(y)
        x = -half
        while x + 1 <= half:
            out.append(((x, y), (x + 1, y)))
            x += 2
    return out


def domino_lower_bound(final: SandpileConfig, r: int) -> int:
    """Number of dominoes of the D_r tiling holding at least one particle."""
    if final.dim != 2:
        raise ValueError("domino tiling is defined for d = 2")
    return sum(1 for a, b in domino_tiling(r) if final.height(a) + final.height(b) > 0)


# -- text export ---------------------------------------------------------------

def format_cluster(c: Cluster) -> str:
    pts = c.points()
    lines = [f"{c.dim} {len(pts)}"]
    lines += [" ".join(str(v) for v in p) for p in pts]
    return "\n".join(lines) + "\n"


def parse_cluster(text: str) -> Cluster:
    lines = text.strip().splitlines()
    d, count = (int(t) for t in lines[0].split())
    pts = [tuple(int(t) for t in line.split()) for line in lines[1:]]
    if len(pts) != count or any(len(p) != d for p in pts):
        raise ValueError("cluster text does not match its header")
    return Cluster.from_points(pts, d)
