"""Brute-force reference stabiliser: one toppling at a time, plain dicts.

Deliberately shares nothing with the compiled engine beyond the input
type, so it can serve as an independent oracle on small inputs.
"""
from __future__ import annotations

from collections import deque

import numpy as np

from .grid import Odometer, SandpileConfig


def reference_stabilize(config: SandpileConfig, max_topplings: int = 10**7):
    """Return ``(final, odometer, total)`` computed by single FIFO topplings."""
    d = config.dim
    threshold = 2 * d
    bg = config.background
    if bg >= threshold:
        raise ValueError("unstable background")
    heights: dict[tuple, int] = {}
    for idx in np.ndindex(*config.values.shape):
        p = tuple(i - o for i, o in zip(idx, config.origin))
        heights[p] = int(config.values[idx])
    odo: dict[tuple, int] = {}
    queue = deque(p for p, v in sorted(heights.items()) if v >= threshold)
    total = 0
    while queue:
        p = queue.popleft()
        if heights.get(p, bg) < threshold:
            continue
        heights[p] -= threshold
        odo[p] = odo.get(p, 0) + 1
        total += 1
        if total > max_topplings:
            raise RuntimeError("reference oracle exceeded its toppling cap")
        if heights[p] >= threshold:
            queue.append(p)
        for axis in range(d):
            for step in (-1, 1):
                q = list(p)
                q[axis] += step
                q = tuple(q)
                heights[q] = heights.get(q, bg) + 1
                if heights[q] == threshold:
                    queue.append(q)
    return _to_config(heights, bg, d), _to_odometer(odo, d), total


def _box(points, d):
    pts = np.array(list(points) + [(0,) * d], dtype=np.int64).reshape(-1, d)
    return pts.min(axis=0), pts.max(axis=0)


def _to_config(heights, bg, d) -> SandpileConfig:
    lo, hi = _box(heights.keys(), d)
    values = np.full(tuple(hi - lo + 1), bg, dtype=np.int64)
    for p, v in heights.items():
        values[tuple(np.array(p) - lo)] = v
    return SandpileConfig(values, tuple(-lo), bg)


def _to_odometer(odo, d) -> Odometer:
    lo, hi = _box(odo.keys(), d)
    values = np.zeros(tuple(hi - lo + 1), dtype=np.int64)
    for p, v in odo.items():
        values[tuple(np.array(p) - lo)] = v
    return Odometer(values, tuple(-lo), 0)
