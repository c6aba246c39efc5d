"""Verification campaigns: order independence, monotonicity, the square
shape, radius bounds, the square-growth lemma and the staged proof order,
plus scaling sweeps with a log-log fit.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from .engine import (
    DEFAULT_BUDGET,
    StabilizationResult,
    Strategy,
    replay_schedule,
    stabilize,
    staged_square_schedule,
)
from .geometry import (
    Cluster,
    adjacent_zero_pairs,
    domino_lower_bound,
    domino_tiling,
    largest_diamond,
    match_square,
    radius,
    toppled_cluster,
    visited_cluster,
)
from .grid import (
    BoxArray,
    Odometer,
    SandpileConfig,
    add_everywhere,
    config_leq,
    laplacian,
    make_point_source,
    make_square_config,
    square_mask,
)

# o(1) slack: 0.1 from n = 10^4, 0.05 from n = 10^6
DEFAULT_EPSILON = 0.1
LARGE_N_EPSILON = 0.05

log = logging.getLogger(__name__)


class BudgetExhausted(RuntimeError):
    """A stabilisation ran out of topplings before becoming stable."""

    def __init__(self, result: StabilizationResult):
        super().__init__(f"budget exhausted after {result.total_topplings} topplings")
        self.result = result


@dataclass
class Report:
    name: str
    passed: bool
    details: dict[str, Any] = field(default_factory=dict)
    failure: str | None = None

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.failure})" if self.failure else ""
        return f"{status} {self.name}{extra}"

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed,
                "details": _jsonable(self.details), "failure": self.failure}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    return x


def epsilon_for(n: int) -> float:
    return LARGE_N_EPSILON if n >= 10**6 else DEFAULT_EPSILON


def run(config: SandpileConfig, strategy: Strategy | str = "multiscale",
        budget: int = DEFAULT_BUDGET) -> StabilizationResult:
    """Stabilise, raising :class:`BudgetExhausted` instead of returning partial."""
    res = stabilize(config, strategy, budget)
    if res.budget_exhausted:
        raise BudgetExhausted(res)
    return res


def conservation_holds(res: StabilizationResult) -> bool:
    """final == initial + L(odometer), cell by cell."""
    odo = res.odometer
    lap = laplacian(odo)
    lo = tuple(min(a, b, c - 1) for a, b, c in zip(res.initial.lo, res.final.lo, odo.lo))
    hi = tuple(max(a, b, c + 1) for a, b, c in zip(res.initial.hi, res.final.hi, odo.hi))
    lap_box = BoxArray(lap, tuple(o + 1 for o in odo.origin), 0).on_box(lo, hi)
    if res.initial.background != res.final.background:
        return False
    return bool(np.array_equal(res.initial.on_box(lo, hi) + lap_box, res.final.on_box(lo, hi)))


# -- point sources and sweeps -----------------------------------------------------

@dataclass
class SweepRecord:
    n: int
    h: int
    d: int
    cluster_radius: int
    diamond_radius: int
    square_r: int | None
    total_topplings: int
    wall_time: float

    CSV_HEADER = ("n", "h", "d", "radius", "diamond_radius", "square_r",
                  "total_topplings", "wall_time_s")

    def csv_row(self) -> list:
        return [self.n, self.h, self.d, self.cluster_radius, self.diamond_radius,
                "" if self.square_r is None else self.square_r,
                self.total_topplings, f"{self.wall_time:.3f}"]


def record_for(n: int, h: int, d: int, res: StabilizationResult, wall: float) -> SweepRecord:
    top = toppled_cluster(res)
    return SweepRecord(n, h, d, radius(top), largest_diamond(top) if top else 0,
                       match_square(top), res.total_topplings, wall)


def run_point_source(n: int, h: int = 2, d: int = 2, strategy: Strategy | str = "multiscale",
                     budget: int = DEFAULT_BUDGET, keep_result: bool = False):
    """Stabilise a point source and measure its clusters.

    Returns a :class:`SweepRecord`, or ``(record, result)`` with ``keep_result``.
    """
    t0 = time.perf_counter()
    res = run(make_point_source(n, h, d), strategy, budget)
    rec = record_for(n, h, d, res, time.perf_counter() - t0)
    return (rec, res) if keep_result else rec


@dataclass
class ScalingFit:
    c: float
    alpha: float
    n_min_used: int
    points: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def fit_scaling(records: Sequence[SweepRecord]) -> ScalingFit:
    """Least squares of log r on log n over the records with n >= the median n."""
    ns = np.array([r.n for r in records], dtype=float)
    med = float(np.median(ns))
    use = [r for r in records if r.n >= med and r.cluster_radius > 0]
    if len(use) < 3:
        raise ValueError(f"scaling fit needs at least 3 points, got {len(use)}")
    x = np.log([r.n for r in use])
    y = np.log([r.cluster_radius for r in use])
    alpha, logc = np.polyfit(x, y, 1)
    return ScalingFit(float(math.exp(logc)), float(alpha), min(r.n for r in use), len(use))


def _sweep_one(args):
    n, h, d, strategy, budget = args
    return run_point_source(n, h, d, strategy, budget)


def sweep(n_list: Sequence[int], h: int = 2, d: int = 2, strategy: Strategy | str = "multiscale",
          budget: int = DEFAULT_BUDGET, workers: int = 1):
    """Run each n (optionally in worker processes) and fit r ~ c n^alpha.

    The fit is None when fewer than three usable points sit at or above the
    median n.
    """
    n_list = list(n_list)
    if not n_list:
        raise ValueError("n_list must be non-empty")
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be increasing")
    jobs = [(n, h, d, str(Strategy.parse(strategy)), budget) for n in n_list]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            records = list(pool.map(_sweep_one, jobs))
    else:
        records = [_sweep_one(j) for j in jobs]
    try:
        fit = fit_scaling(records)
    except ValueError:
        log.warning("too few points for a scaling fit over %s", n_list)
        fit = None
    return records, fit


def log_spaced(lo: int, hi: int, points: int) -> list[int]:
    vals = np.unique(np.round(np.logspace(math.log10(lo), math.log10(hi), points)).astype(int))
    return [int(v) for v in vals]


def sweep_csv(records: Sequence[SweepRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SweepRecord.CSV_HEADER)
    for r in records:
        w.writerow(r.csv_row())
    return buf.getvalue()


# -- order independence ---------------------------------------------------------

def random_config(seed: int, r: int = 5, max_height: int = 6, h: int = 0, d: int = 2) -> SandpileConfig:
    """Heights uniform in {0..max_height} on S_r over background ``h``."""
    rng = np.random.default_rng(seed)
    side = 2 * r - 1
    values = np.full((side,) * d, h, dtype=np.int64)
    mask = square_mask((side,) * d, (r - 1,) * d, r)
    values[mask] = rng.integers(0, max_height + 1, size=int(mask.sum()))
    return SandpileConfig(values, (r - 1,) * d, h)


def first_difference(a, b):
    """First cell (lexicographic) where two box arrays disagree, or None."""
    lo = tuple(min(x, y) for x, y in zip(a.lo, b.lo))
    hi = tuple(max(x, y) for x, y in zip(a.hi, b.hi))
    diff = np.argwhere(a.on_box(lo, hi) != b.on_box(lo, hi))
    if len(diff) == 0:
        return None
    return tuple(int(c) + l for c, l in zip(diff[0], lo))


def abelian_check(config: SandpileConfig, trials: int = 5, seed: int = 0,
                  strategies: Sequence[str] = ("fifo", "lifo", "bulk-fifo", "tiled-parallel"),
                  budget: int = DEFAULT_BUDGET, reference=None) -> Report:
    """All orders must give the same final configuration and odometer.

    ``reference`` optionally supplies ``(final, odometer)`` from an
    independent computation that every run is compared against.
    """
    rng = np.random.default_rng(seed)
    orders = [Strategy.parse(s) for s in strategies]
    orders += [Strategy("random", seed=int(x)) for x in rng.integers(0, 2**32, size=trials)]
    base = None
    for strat in orders:
        res = run(config, strat, budget)
        if not conservation_holds(res):
            return Report("abelian", False, {"strategy": str(strat)},
                          f"conservation broken under {strat}")
        if base is None:
            base = res
            if reference is not None:
                ref_final, ref_odo = reference
                for what, mine, theirs in (("final", res.final, ref_final),
                                           ("odometer", res.odometer, ref_odo)):
                    cell = first_difference(mine, theirs)
                    if cell is not None or mine.fill != theirs.fill:
                        return Report("abelian", False, {"strategy": str(strat), "cell": cell},
                                      f"{what} differs from reference at {cell}")
            continue
        for what, mine, theirs in (("final", res.final, base.final),
                                   ("odometer", res.odometer, base.odometer)):
            cell = first_difference(mine, theirs)
            if cell is not None:
                return Report("abelian", False, {"strategy": str(strat), "cell": cell},
                              f"{what} under {strat} differs at {cell}")
    return Report("abelian", True, {"orders": [str(s) for s in orders],
                                    "total_topplings": base.total_topplings})


def monotonicity_check(a: SandpileConfig, b: SandpileConfig,
                       budget: int = DEFAULT_BUDGET, strategy="bulk-fifo") -> Report:
    """a <= b pointwise must give nested toppled and visited clusters.

    The pointwise odometer comparison is reported as a separate, stronger
    statement and does not decide the outcome.
    """
    if not config_leq(a, b):
        return Report("monotonicity", False, failure="precondition a <= b violated")
    ra, rb = run(a, strategy, budget), run(b, strategy, budget)
    ta, tb = toppled_cluster(ra), toppled_cluster(rb)
    va, vb = visited_cluster(ra), visited_cluster(rb)
    lo = tuple(min(x, y) for x, y in zip(ra.odometer.lo, rb.odometer.lo))
    hi = tuple(max(x, y) for x, y in zip(ra.odometer.hi, rb.odometer.hi))
    odo_leq = bool((ra.odometer.on_box(lo, hi) <= rb.odometer.on_box(lo, hi)).all())
    details = {"toppled_subset": ta <= tb, "visited_subset": va <= vb,
               "odometer_pointwise": odo_leq,
               "radius_a": radius(ta), "radius_b": radius(tb)}
    ok = details["toppled_subset"] and details["visited_subset"]
    failure = None
    if not details["toppled_subset"]:
        failure = f"toppled cell {ta.first_outside(tb)} of a not toppled in b"
    elif not details["visited_subset"]:
        failure = f"visited cell {va.first_outside(vb)} of a not visited in b"
    return Report("monotonicity", ok, details, failure)


# -- square growth lemma ------------------------------------------------------------

def lemma2_check(r1: int, r2: int, h: int = 2, d: int = 2, strategy="bulk-fifo") -> Report:
    """S_r1 of 2d's inside S_r2 of (2d-1)'s topples only inside S_{r1+r2}."""
    res = run(make_square_config(r1, r2, h, d), strategy)
    top = toppled_cluster(res)
    bound = Cluster.square(r1 + r2, d)
    ok = top <= bound
    rad = radius(top)
    details = {"r1": r1, "r2": r2, "radius": rad, "topplings": res.total_topplings}
    failure = None if ok else f"toppled cell outside S_{r1 + r2}"
    if ok and r1 == r2 and rad > 2 * r1:
        ok, failure = False, f"radius {rad} > {2 * r1}"
    return Report(f"lemma2({r1},{r2})", ok, details, failure)


def _square_region(r: int, d: int, lo, hi) -> np.ndarray:
    shape = tuple(b - a + 1 for a, b in zip(lo, hi))
    return square_mask(shape, tuple(-a for a in lo), r)


def lemma2_stage_check(r1: int, r2: int, h: int = 2, d: int = 2) -> Report:
    """Replay the staged order and check the intermediate patterns.

    (i) every round completes legally; (ii) after round one, S_r1 is full
    of 2d inside S_{r2-1} full of 2d-1; (iii) at the end S_{r1-1} is full
    of 2d, every other cell is stable and no cell outside S_{r2+1} holds
    2d-1; (iv) all topplings stay in S_{r1+r2}. The frame left around the
    square after round one is reported, not judged.
    """
    name = f"lemma2-stages({r1},{r2})"
    config = make_square_config(r1, r2, h, d)
    sched = staged_square_schedule(r1, r2, d)
    final, rep = replay_schedule(config, sched, keep_snapshots=True)
    details: dict[str, Any] = {"rounds": len(sched)}
    if not rep.legal:
        return Report(name, False, details,
                      f"round {rep.stuck_round} stuck at cell {rep.stuck_cell}")
    full, stable = 2 * d, 2 * d - 1
    lo = tuple(-(r1 + r2 + 1) for _ in range(d))
    hi = tuple(r1 + r2 + 1 for _ in range(d))

    def first_bad(mask):
        bad = np.argwhere(mask)
        return None if len(bad) == 0 else tuple(int(c) + l for c, l in zip(bad[0], lo))

    if r1 < r2:
        first = rep.snapshots[0].on_box(lo, hi)
        inner = _square_region(r1, d, lo, hi)
        mid = _square_region(r2 - 1, d, lo, hi) & ~inner
        bad = first_bad((inner & (first != full)) | (mid & (first != stable)))
        if bad is not None:
            return Report(name, False, details, f"after round 1 unexpected height at {bad}")
        frame = _square_region(r2, d, lo, hi) & ~_square_region(r2 - 1, d, lo, hi)
        heights = sorted(set(int(v) for v in first[frame]))
        details["frame_heights"] = heights
        details["frame_outside_1_2"] = first_bad(frame & ((first < 1) | (first > 2)))
    else:
        details["interior_check"] = "degenerate: no repeat phase"

    end = final.on_box(lo, hi)
    core = _square_region(r1 - 1, d, lo, hi)
    bad = first_bad(core & (end != full))
    if bad is not None:
        return Report(name, False, details, f"S_{r1 - 1} not full of {full} at {bad}")
    bad = first_bad(~core & (end > stable))
    if bad is not None:
        return Report(name, False, details, f"unstable cell {bad} outside S_{r1 - 1}")
    if final.background > stable:
        return Report(name, False, details, "unstable background")
    outside = ~_square_region(r2 + 1, d, lo, hi)
    bad = first_bad(outside & (end == stable))
    if bad is not None or final.background == stable:
        return Report(name, False, details, f"cell {bad} outside S_{r2 + 1} holds {stable}")
    odo = rep.odometer
    support = Cluster(odo.values > 0, odo.origin)
    if not support <= Cluster.square(r1 + r2, d):
        return Report(name, False, details, f"toppling outside S_{r1 + r2}")
    details["topplings"] = odo.total()
    return Report(name, True, details)


# -- theorem-level checks -------------------------------------------------------------

@dataclass
class Stage:
    initial: SandpileConfig
    result: StabilizationResult
    radius: int


@dataclass
class StageTrace:
    stages: list[Stage]

    @property
    def radii(self) -> list[int]:
        return [s.radius for s in self.stages]


def theorem2_stages(n: int, epsilon: float = DEFAULT_EPSILON, strategy="multiscale",
                    direct: StabilizationResult | None = None) -> tuple[StageTrace, Report]:
    """Ground 0 with n-2 at the origin, then +1 everywhere twice.

    Passes when each stage at most doubles the radius, the first radius is
    at most (1+eps) sqrt(n), and the staged final equals the direct
    ground-2 run exactly.
    """
    if n < 4:
        raise ValueError("n must be at least 4")
    stages = []
    config = make_point_source(n - 2, 0, 2)
    res = run(config, strategy)
    stages.append(Stage(config, res, radius(toppled_cluster(res))))
    for _ in range(2):
        config = add_everywhere(stages[-1].result.final, 1)
        res = run(config, strategy)
        stages.append(Stage(config, res, radius(toppled_cluster(res))))
    trace = StageTrace(stages)
    r1, r2, r3 = trace.radii
    if direct is None:
        direct = run(make_point_source(n, 2, 2), strategy)
    # the staged run's toppled cluster is the union over stages
    odo_total = _sum_odometers([s.result.odometer for s in stages])
    same_final = first_difference(stages[-1].result.final, direct.final) is None
    same_odo = first_difference(odo_total, direct.odometer) is None
    bound = (1 + epsilon) * math.sqrt(n)
    checks = {
        "r2 <= 2 max(r1,1)": r2 <= 2 * max(r1, 1),
        "r3 <= 2 max(r2,1)": r3 <= 2 * max(r2, 1),
        "r1 <= (1+eps) sqrt(n)": r1 <= bound,
        "final equals direct": same_final,
    }
    details = {"n": n, "radii": [r1, r2, r3], "sqrt_n": math.sqrt(n), "epsilon": epsilon,
               "odometer_equals_direct": same_odo, **checks}
    failed = [k for k, v in checks.items() if not v]
    return trace, Report(f"theorem2-stages(n={n})", not failed, details,
                         ", ".join(failed) or None)


def _sum_odometers(odos):
    lo = tuple(min(o.lo[a] for o in odos) for a in range(odos[0].dim))
    hi = tuple(max(o.hi[a] for o in odos) for a in range(odos[0].dim))
    total = sum(o.on_box(lo, hi) for o in odos)
    return Odometer(total, tuple(-l for l in lo), 0)


def theorem2_bounds(n: int, epsilon: float = DEFAULT_EPSILON, strategy="multiscale",
                    record: SweepRecord | None = None) -> Report:
    """sqrt(n) <= radius <= 4 (1+eps) sqrt(n) on ground 2, and radius <= n/4."""
    rec = record or run_point_source(n, 2, 2, strategy)
    r = rec.cluster_radius
    lower, upper = math.sqrt(n), 4 * (1 + epsilon) * math.sqrt(n)
    ok = lower <= r <= upper
    return Report(f"theorem2-bounds(n={n})", ok,
                  {"n": n, "radius": r, "sqrt_n": lower, "upper": upper,
                   "ratio": r / lower, "trivial_upper_n_over_4": r <= max(n / 4, 1)},
                  None if ok else f"radius {r} outside [{lower:.1f}, {upper:.1f}]")


def theorem1_square(n: int, h: int = 2, d: int = 2, strategy="multiscale",
                    record: SweepRecord | None = None) -> Report:
    """Ground 2d-2 clusters must be centred squares; other grounds are only recorded."""
    rec = record or run_point_source(n, h, d, strategy)
    asserted = h == 2 * d - 2
    ok = rec.square_r is not None or not asserted
    return Report(f"theorem1-square(n={n},h={h})", ok,
                  {"n": n, "h": h, "square_r": rec.square_r, "radius": rec.cluster_radius,
                   "asserted": asserted},
                  None if ok else "toppled cluster is not a centred square")


def lemma1_check(n: int, epsilon: float | None = None, strategy="multiscale",
                 result: StabilizationResult | None = None) -> Report:
    """Ground 0: radius <= (1+eps) sqrt(n), no adjacent empty toppled pair,
    and n is at least the number of particle-bearing dominoes of D_radius.

    The largest diamond inside the cluster is reported next to the radius.
    """
    eps = epsilon_for(n) if epsilon is None else epsilon
    res = result or run(make_point_source(n, 0, 2), strategy)
    top = toppled_cluster(res)
    r = radius(top)
    zero_pairs = adjacent_zero_pairs(res.final, top)
    occupied = domino_lower_bound(res.final, r)
    dia = largest_diamond(top) if top else 0
    complete_in_diamond = len(domino_tiling(dia))
    occupied_in_diamond = domino_lower_bound(res.final, dia)
    checks = {
        "radius <= (1+eps) sqrt(n)": r <= (1 + eps) * math.sqrt(n),
        "adjacent_zero_pairs == 0": zero_pairs == 0,
        "n >= occupied dominoes": n >= occupied,
        "D_radius inside toppled": dia >= r,
    }
    details = {"n": n, "radius": r, "epsilon": eps, "ratio": r / math.sqrt(n),
               "adjacent_zero_pairs": zero_pairs, "occupied_dominoes": occupied,
               "diamond_radius": dia,
               "dominoes_in_largest_diamond": complete_in_diamond,
               "occupied_in_largest_diamond": occupied_in_diamond, **checks}
    failed = [k for k, v in checks.items() if not v]
    return Report(f"lemma1(n={n})", not failed, details, ", ".join(failed) or None)


def radius_monotone(records: Sequence[SweepRecord]) -> Report:
    recs = sorted(records, key=lambda r: r.n)
    radii = [r.cluster_radius for r in recs]
    bad = [(a.n, b.n) for a, b in zip(recs, recs[1:]) if b.cluster_radius < a.cluster_radius]
    return Report("radius-monotone", not bad, {"n": [r.n for r in recs], "radius": radii},
                  f"radius drops between n={bad[0]}" if bad else None)


def random_leq_pair(seed: int, r: int = 5, max_height: int = 6, max_bump: int = 3,
                    d: int = 2) -> tuple[SandpileConfig, SandpileConfig]:
    """A random base and a copy with non-negative random bumps on S_r."""
    a = random_config(seed, r, max_height, 0, d)
    rng = np.random.default_rng(seed + 10**9)
    bumps = rng.integers(0, max_bump + 1, size=a.values.shape)
    bumps *= rng.random(a.values.shape) < 0.3
    b = SandpileConfig(a.values + bumps, a.origin, a.background)
    return a, b
