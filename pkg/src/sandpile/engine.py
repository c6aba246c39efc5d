"""Stabilisation of sandpile configurations under a choice of toppling order."""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels as K
from .grid import BoxArray, Odometer, Point, SandpileConfig, square_mask, zero_odometer

log = logging.getLogger(__name__)

DEFAULT_BUDGET = 10**11
DEFAULT_TILE = 64
STRATEGY_KINDS = ("fifo", "lifo", "random", "bulk-fifo", "tiled-parallel", "multiscale")


class IllegalToppling(Exception):
    """A toppling was requested at a cell holding fewer than 2d*k particles."""


@dataclass(frozen=True)
class Strategy:
    kind: str = "bulk-fifo"
    seed: int = 0
    tile: int = DEFAULT_TILE

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}")
        if self.tile < 2:
            raise ValueError("tile side must be at least 2")

    @classmethod
    def parse(cls, text: str | "Strategy") -> "Strategy":
        """Accepts ``fifo``, ``lifo``, ``bulk-fifo``, ``random:SEED``, ``tiled-parallel:SIDE``."""
        if isinstance(text, Strategy):
            return text
        kind, _, arg = text.partition(":")
        if kind == "random":
            return cls(kind, seed=int(arg) if arg else 0)
        if kind == "tiled-parallel":
            return cls(kind, tile=int(arg) if arg else DEFAULT_TILE)
        if arg:
            raise ValueError(f"strategy {kind!r} takes no argument")
        return cls(kind)

    def __str__(self) -> str:
        if self.kind == "random":
            return f"random:{self.seed}"
        if self.kind == "tiled-parallel":
            return f"tiled-parallel:{self.tile}"
        return self.kind


@dataclass
class StabilizationResult:
    initial: SandpileConfig
    final: SandpileConfig
    odometer: Odometer
    total_topplings: int
    budget_exhausted: bool = False
    strategy: str = "bulk-fifo"

    @property
    def dim(self) -> int:
        return self.final.dim


def audit_enabled() -> bool:
    return os.environ.get("SANDPILE_AUDIT", "") not in ("", "0")


# -- working box ---------------------------------------------------------------

class _Workspace:
    """Heights and odometer on a common box, with flat-index neighbour offsets."""

    def __init__(self, config: SandpileConfig, odometer: Odometer | None = None, margin: int = 1):
        lo = tuple(l - margin for l in config.lo)
        hi = tuple(h + margin for h in config.hi)
        if odometer is not None:
            lo = tuple(min(a, b - margin) for a, b in zip(lo, odometer.lo))
            hi = tuple(max(a, b + margin) for a, b in zip(hi, odometer.hi))
        self.background = config.background
        padded = config.padded(lo, hi)
        self.heights = BoxArray(padded.values, padded.origin, padded.fill)
        odo = odometer if odometer is not None else zero_odometer(config)
        self.odometer = odo.padded(lo, hi)
        self._refresh()

    def _refresh(self):
        shape = self.heights.values.shape
        d = len(shape)
        strides = [int(np.prod(shape[a + 1:])) for a in range(d)]
        self.offsets = np.array([s * sign for s in strides for sign in (-1, 1)], dtype=np.int64)
        border = np.zeros(shape, dtype=np.uint8)
        for a in range(d):
            sl = [slice(None)] * d
            sl[a] = 0
            border[tuple(sl)] = 1
            sl[a] = -1
            border[tuple(sl)] = 1
        self.border = border.ravel()

    @property
    def shape(self):
        return self.heights.values.shape

    def flat(self):
        return self.heights.values.reshape(-1), self.odometer.values.reshape(-1)

    def grow(self):
        pad = [max(32, n // 4) for n in self.shape]
        lo = tuple(l - p for l, p in zip(self.heights.lo, pad))
        hi = tuple(h + p for h, p in zip(self.heights.hi, pad))
        self.include(lo, hi)

    def include(self, lo: Sequence[int], hi: Sequence[int]):
        """Grow so that [lo, hi] lies strictly inside the box."""
        lo = tuple(min(a, b - 1) for a, b in zip(self.heights.lo, lo))
        hi = tuple(max(a, b + 1) for a, b in zip(self.heights.hi, hi))
        if lo == self.heights.lo and hi == self.heights.hi:
            return
        self.heights = self.heights.padded(lo, hi)
        self.odometer = self.odometer.padded(lo, hi)
        self._refresh()

    def flat_index(self, p: Sequence[int]) -> int:
        idx = tuple(int(c) + o for c, o in zip(p, self.heights.origin))
        return int(np.ravel_multi_index(idx, self.shape))

    def point(self, i: int) -> Point:
        idx = np.unravel_index(int(i), self.shape)
        return tuple(int(a - o) for a, o in zip(idx, self.heights.origin))

    def tiles(self, side: int):
        """Tile layout for the tiled kernel.

        Returns cells grouped by tile (tile-major) with their offsets, the
        owner tile of every cell, a per-cell bitmask of directions whose
        neighbour lies in another tile, and the cells having any such
        neighbour.
        """
        shape = self.shape
        d = len(shape)
        idx = np.indices(shape)
        ntiles_axis = [-(-n // side) for n in shape]
        tile_of = np.ravel_multi_index(tuple(i // side for i in idx), ntiles_axis).ravel()
        order = np.argsort(tile_of, kind="stable")
        counts = np.bincount(tile_of, minlength=int(np.prod(ntiles_axis)))
        start = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        leaves = np.zeros(shape, dtype=np.uint8)
        for axis in range(d):
            pos = idx[axis] % side
            last = (pos == side - 1) | (idx[axis] == shape[axis] - 1)
            # direction order matches self.offsets: minus then plus per axis
            leaves |= ((pos == 0).astype(np.uint8) << (2 * axis))
            leaves |= (last.astype(np.uint8) << (2 * axis + 1))
        leaves = leaves.ravel()
        edge = np.flatnonzero(leaves).astype(np.int64)
        return order.astype(np.int64), start, tile_of.astype(np.int64), leaves, edge

    def result_parts(self):
        final = SandpileConfig(self.heights.values.copy(), self.heights.origin, self.background).trimmed()
        odo = Odometer(self.odometer.values.copy(), self.odometer.origin, 0).trimmed()
        return final, odo


def _heights_kernel(ws: _Workspace, strategy: Strategy, budget: int, audit: bool):
    h, _ = ws.flat()
    if strategy.kind in ("fifo", "lifo", "bulk-fifo"):
        return K.run_queue(h, ws.border, ws.offsets,
                           strategy.kind == "bulk-fifo", strategy.kind == "lifo",
                           budget, audit)
    if strategy.kind == "random":
        return K.run_random(h, ws.border, ws.offsets,
                            np.uint32(strategy.seed % 2**32), budget, audit)
    cells, start, owner, leaves, edge = ws.tiles(strategy.tile)
    return K.run_tiled(h, ws.border, ws.offsets, cells, start, owner, leaves, edge,
                       budget, audit)


def _run_kernel(ws: _Workspace, strategy: Strategy, budget: int, audit: bool):
    """Run one kernel pass and fold the firings it made into the odometer."""
    h, odo = ws.flat()
    before = h.copy()
    status, done = _heights_kernel(ws, strategy, budget, audit)
    if done:
        fired = K.add_odometer(odo, before, h, ws.border, ws.offsets)
        if audit and not np.array_equal(laplacian_flat(fired, ws.offsets, ws.border), h - before):
            raise IllegalToppling("height change is not the Laplacian of a border-free firing")
        if audit and int(fired.sum()) != int(done):
            raise IllegalToppling(f"recovered {int(fired.sum())} firings, kernel counted {int(done)}")
    return status, done


def stabilize(config: SandpileConfig, strategy: Strategy | str = "bulk-fifo",
              budget: int = DEFAULT_BUDGET, audit: bool | None = None) -> StabilizationResult:
    """Topple until every cell holds at most 2d-1 particles, or the budget runs out."""
    strategy = Strategy.parse(strategy)
    audit = audit_enabled() if audit is None else audit
    d = config.dim
    if config.background >= 2 * d:
        raise ValueError(
            f"background {config.background} is unstable in d={d}; no finite stabilisation exists")
    if budget < 0:
        raise ValueError("budget must be non-negative")
    if strategy.kind == "multiscale":
        trimmed = config.trimmed()
        if all(n == 1 for n in trimmed.values.shape):
            return stabilize_point_source(int(trimmed.values.flat[0]), config.background, d, budget)
        strategy = Strategy("bulk-fifo")
    ws = _Workspace(config)
    total = 0
    exhausted = False
    while True:
        status, done = _run_kernel(ws, strategy, budget - total, audit)
        total += int(done)
        if status == K.BORDER:
            ws.grow()
            continue
        if status == K.ILLEGAL:
            raise IllegalToppling("audit caught a toppling below threshold")
        exhausted = status == K.BUDGET
        break
    final, odo = ws.result_parts()
    return StabilizationResult(config, final, odo, total, exhausted, str(strategy))


def topple(config: SandpileConfig, p: Sequence[int], k: int = 1) -> SandpileConfig:
    """Topple ``p`` ``k`` times at once; illegal unless it holds at least 2d*k."""
    if k < 1:
        raise ValueError("multiplicity must be at least 1")
    d = config.dim
    have = config.height(p)
    if have < 2 * d * k:
        raise IllegalToppling(f"cell {tuple(p)} holds {have} < {2 * d * k}")
    ws = _Workspace(config)
    ws.include(p, p)
    h, _ = ws.flat()
    i = ws.flat_index(p)
    h[i] -= 2 * d * k
    h[i + ws.offsets] += k
    final, _ = ws.result_parts()
    return final


# -- scripted orders -------------------------------------------------------------

@dataclass
class Schedule:
    """Ordered rounds; each round is a list of (cell, multiplicity) topplings."""

    rounds: list[list[tuple[Point, int]]] = field(default_factory=list)

    def __post_init__(self):
        for rnd in self.rounds:
            for _, m in rnd:
                if m < 1:
                    raise ValueError("multiplicities must be at least 1")

    def __len__(self):
        return len(self.rounds)


@dataclass
class ReplayReport:
    legal: bool
    rounds_completed: int
    stuck_round: int | None = None
    stuck_cell: Point | None = None
    odometer: Odometer | None = None
    snapshots: list[SandpileConfig] = field(default_factory=list)


def replay_schedule(config: SandpileConfig, sched: Schedule,
                    keep_snapshots: bool = False) -> tuple[SandpileConfig, ReplayReport]:
    """Run the rounds in order, each greedily in any currently legal order.

    A round that cannot be finished leaves the configuration where it got
    stuck and names the first listed cell with multiplicity left.
    """
    ws = _Workspace(config)
    for rnd in sched.rounds:
        for p, _ in rnd:
            ws.include(p, p)
    snapshots = []
    for r, rnd in enumerate(sched.rounds):
        h, odo = ws.flat()
        cells = np.array([ws.flat_index(p) for p, _ in rnd], dtype=np.int64)
        mult = np.array([m for _, m in rnd], dtype=np.int64)
        stuck = K.run_schedule_round(h, odo, ws.offsets, cells, mult)
        if keep_snapshots:
            snapshots.append(ws.result_parts()[0])
        if stuck >= 0:
            final, odometer = ws.result_parts()
            return final, ReplayReport(False, r, r, tuple(rnd[stuck][0]), odometer, snapshots)
    final, odometer = ws.result_parts()
    return final, ReplayReport(True, len(sched.rounds), odometer=odometer, snapshots=snapshots)


def square_cells(r: int, d: int = 2) -> list[Point]:
    """Cells of S_r in lexicographic order."""
    if r <= 0:
        return []
    side = 2 * r - 1
    mask = square_mask((side,) * d, (r - 1,) * d, r)
    return [tuple(int(c) - (r - 1) for c in row) for row in np.argwhere(mask)]


def staged_square_schedule(r1: int, r2: int, d: int = 2) -> Schedule:
    """Topple S_r2, S_r2-1, ..., S_r1+1 once each, then S_r1 once."""
    if not 1 <= r1 <= r2:
        raise ValueError(f"need 1 <= r1 <= r2, got r1={r1}, r2={r2}")
    radii = list(range(r2, r1, -1)) + [r1]
    return Schedule([[(p, 1) for p in square_cells(r, d)] for r in radii])


def resume(config: SandpileConfig, odometer: Odometer, strategy: Strategy | str = "bulk-fifo",
           budget: int = DEFAULT_BUDGET) -> StabilizationResult:
    """Stabilise ``config`` whose earlier topplings are recorded in ``odometer``."""
    res = stabilize(config, strategy, budget)
    lo = tuple(min(a, b) for a, b in zip(odometer.lo, res.odometer.lo))
    hi = tuple(max(a, b) for a, b in zip(odometer.hi, res.odometer.hi))
    odo = Odometer(odometer.on_box(lo, hi) + res.odometer.on_box(lo, hi),
                   tuple(-v for v in lo), 0).trimmed()
    res.odometer = odo
    res.initial = config
    res.total_topplings = odo.total()
    return res


# -- warm start ------------------------------------------------------------------

def stabilize_from_guess(config: SandpileConfig, guess: Odometer,
                         budget: int = DEFAULT_BUDGET) -> StabilizationResult:
    """Exact stabilisation started from an arbitrary non-negative firing guess.

    The odometer is the least w >= 0 with config + L(w) stable. Firing the
    guess in one shot, toppling what is still unstable and then untoppling
    the overshoot reaches exactly that w, whatever the guess was.
    """
    if guess.values.size and guess.values.min() < 0:
        raise ValueError("guess must be non-negative")
    d = config.dim
    if config.background >= 2 * d:
        raise ValueError(f"background {config.background} is unstable in d={d}")
    ws = _Workspace(config, guess, margin=2)
    h, odo = ws.flat()
    h += laplacian_flat(odo, ws.offsets, ws.border)
    total = 0
    while True:
        status, done = _run_kernel(ws, Strategy("bulk-fifo"), budget - total, False)
        total += int(done)
        if status == K.BORDER:
            ws.grow()
            h, odo = ws.flat()
            continue
        if status == K.BUDGET:
            final, odometer = ws.result_parts()
            return StabilizationResult(config, final, odometer, odometer.total(), True, "multiscale")
        rounds = K.untopple_rounds(h, odo, ws.border, ws.offsets, 2**62)
        log.debug("warm start: %d topplings, %d untoppling rounds", total, rounds)
        if rounds < 0:
            ws.grow()
            h, odo = ws.flat()
            continue
        break
    final, odometer = ws.result_parts()
    return StabilizationResult(config, final, odometer, odometer.total(), False, "multiscale")


def laplacian_flat(u: np.ndarray, offsets: np.ndarray, border: np.ndarray) -> np.ndarray:
    """L(u) on a flat box where ``u`` vanishes on the border cells."""
    if u[border.astype(bool)].any():
        raise ValueError("firing vector must vanish on the box border")
    out = -offsets.size * u
    for off in offsets:
        if off > 0:
            out[off:] += u[:-off]
        else:
            out[:off] += u[-off:]
    return out


def _upsample(vals: np.ndarray) -> np.ndarray:
    """Multilinear interpolation onto the doubled lattice (index i -> 2i)."""
    vals = np.asarray(vals, dtype=np.float64)
    for axis in range(vals.ndim):
        shape = list(vals.shape)
        shape[axis] = 2 * shape[axis] - 1
        out = np.empty(shape)
        even = [slice(None)] * vals.ndim
        odd = [slice(None)] * vals.ndim
        left = [slice(None)] * vals.ndim
        right = [slice(None)] * vals.ndim
        even[axis] = slice(0, None, 2)
        odd[axis] = slice(1, None, 2)
        left[axis] = slice(0, -1)
        right[axis] = slice(1, None)
        out[tuple(even)] = vals
        out[tuple(odd)] = 0.5 * (vals[tuple(left)] + vals[tuple(right)])
        vals = out
    return vals


def upsample_odometer(coarse: Odometer, factor: float = 4.0, margin: int = 0) -> Odometer:
    """Guess for the doubled-radius problem: u(x) ~ factor * coarse(x / 2)."""
    vals = _upsample(coarse.values)
    guess = np.maximum(np.floor(factor * vals) - margin, 0).astype(np.int64)
    return Odometer(guess, tuple(2 * o for o in coarse.origin), 0)


# Below this particle count a point source is toppled directly.
MULTISCALE_BASE = 4096
# Within radius/8 of the origin the guess is flattened: the log singularity
# makes interpolation overshoot there, and undershoot is cheap to repair.
_CORE_FRACTION = 8


def _point_source_guess(u_prev: Odometer, delta_prev: np.ndarray | None,
                        delta_origin) -> tuple[Odometer, np.ndarray, tuple]:
    """Warm start for the next level plus the plain-interpolation part.

    The plain guess is 4 * u(x/2). Its error against the true odometer
    grows like the cluster radius, so the error measured one level down,
    interpolated and doubled, is subtracted.
    """
    plain = 4.0 * _upsample(u_prev.values)
    origin = tuple(2 * o for o in u_prev.origin)
    guess = plain
    if delta_prev is not None:
        corr = 2.0 * _upsample(delta_prev)
        corr_origin = tuple(2 * o for o in delta_origin)
        lo = tuple(-o for o in origin)
        hi = tuple(n - 1 - o for n, o in zip(plain.shape, origin))
        guess = plain - _crop(corr, corr_origin, lo, hi)
    guess = np.maximum(np.floor(guess), 0)
    reach = int(np.abs(np.argwhere(guess > 0) - np.array(origin)).max(initial=0))
    core_r = max(3, reach // _CORE_FRACTION)
    core = tuple(slice(max(o - core_r, 0), o + core_r + 1) for o in origin)
    ring = tuple(slice(max(o - core_r - 1, 0), o + core_r + 2) for o in origin)
    guess[core] = np.minimum(guess[core], guess[ring].min())
    return Odometer(guess.astype(np.int64), origin, 0), plain, origin


def _crop(vals: np.ndarray, origin, lo, hi) -> np.ndarray:
    """``vals`` (indexed around ``origin``) restricted/zero-extended to [lo, hi]."""
    out = np.zeros(tuple(b - a + 1 for a, b in zip(lo, hi)))
    src, dst = [], []
    for n, o, l, h in zip(vals.shape, origin, lo, hi):
        a = max(-o, l)
        b = min(n - 1 - o, h)
        if a > b:
            return out
        src.append(slice(a + o, b + o + 1))
        dst.append(slice(a - l, b - l + 1))
    out[tuple(dst)] = vals[tuple(src)]
    return out


def stabilize_point_source(n: int, h: int = 2, d: int = 2, budget: int = DEFAULT_BUDGET,
                           base: int = MULTISCALE_BASE) -> StabilizationResult:
    """Exact stabilisation of a point source, warm-started level by level.

    Levels hold n / 2^(d k) particles; each level's odometer seeds the next
    (twice the radius) through :func:`stabilize_from_guess`, which is exact
    for any guess.
    """
    from .grid import make_point_source

    sizes = [n]
    while sizes[-1] > base:
        sizes.append(sizes[-1] // 2**d)
    sizes.reverse()
    res = stabilize(make_point_source(sizes[0], h, d), "bulk-fifo", budget)
    delta = delta_origin = None
    for m in sizes[1:]:
        if res.budget_exhausted:
            break
        guess, plain, origin = _point_source_guess(res.odometer, delta, delta_origin)
        res = stabilize_from_guess(make_point_source(m, h, d), guess, budget)
        lo = tuple(-o for o in origin)
        hi = tuple(k - 1 - o for k, o in zip(plain.shape, origin))
        lo = tuple(min(a, b) for a, b in zip(lo, res.odometer.lo))
        hi = tuple(max(a, b) for a, b in zip(hi, res.odometer.hi))
        delta = _crop(plain, origin, lo, hi) - res.odometer.on_box(lo, hi)
        delta_origin = tuple(-a for a in lo)
    res.strategy = "multiscale"
    return res
