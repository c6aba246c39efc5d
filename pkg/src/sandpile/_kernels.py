"""Compiled toppling loops over flat int64 arrays.

Every kernel works on a C-ordered flattened box. ``offsets`` holds the 2d
flat-index deltas to the lattice neighbours; ``border`` marks cells on the
box faces, which are never toppled (their neighbours lie outside the box).
Kernels return ``(status, topplings)`` where status is STABLE, BUDGET or
BORDER; on BORDER the caller grows the box and resumes.

The toppling loops touch heights only. Since border cells never topple,
the odometer of a run is the unique u vanishing on the border with
L(u) = after - before, and ``add_odometer`` recovers it exactly afterwards.
"""
import numpy as np
from numba import njit, prange

STABLE = 0
BUDGET = 1
BORDER = 2
ILLEGAL = 3


@njit(cache=True)
def _ring_size(n):
    size = 1
    while size < n:
        size *= 2
    return size


@njit(inline="always")
def _queue_core(h, border, offsets, budget, bulk, lifo, audit):
    # A cell enters the worklist exactly when a push lifts it across the
    # threshold, so membership needs no flag and the push is branch-free.
    ncell = h.size
    deg = offsets.size
    size = _ring_size(ncell + deg + 1)
    mask = size - 1
    queue = np.empty(size, dtype=np.int64)
    count = 0
    for i in range(ncell):
        if h[i] >= deg:
            queue[count] = i
            count += 1
    head = 0
    done = 0
    while count > 0:
        if lifo:
            slot = (head + count - 1) & mask
        else:
            slot = head
        i = queue[slot]
        if border[i]:
            return BORDER, done
        if done >= budget:
            return BUDGET, done
        k = 1
        if bulk:
            # most pops topple once; skip the integer division for those
            if h[i] >= 2 * deg:
                k = h[i] // deg
                if k > budget - done:
                    k = budget - done
        if audit:
            if h[i] < deg * k:
                return ILLEGAL, done
        hi = h[i] - deg * k
        h[i] = hi
        done += k
        count -= 1
        if not lifo:
            head = (head + 1) & mask
        # still unstable: back on the worklist (end of the FIFO, top of the stack)
        queue[(head + count) & mask] = i
        count += hi >= deg
        for a in range(deg):
            j = i + offsets[a]
            hj = h[j] + k
            h[j] = hj
            queue[(head + count) & mask] = j
            count += (hj >= deg) & (hj - k < deg)
    return STABLE, done


# One compiled loop per mode: the flags fold away as constants.
@njit(cache=True)
def _fifo(h, border, offsets, budget):
    return _queue_core(h, border, offsets, budget, False, False, False)


@njit(cache=True)
def _lifo(h, border, offsets, budget):
    return _queue_core(h, border, offsets, budget, False, True, False)


@njit(cache=True)
def _bulk(h, border, offsets, budget):
    return _queue_core(h, border, offsets, budget, True, False, False)


@njit(cache=True)
def _fifo_audit(h, border, offsets, budget):
    return _queue_core(h, border, offsets, budget, False, False, True)


@njit(cache=True)
def _lifo_audit(h, border, offsets, budget):
    return _queue_core(h, border, offsets, budget, False, True, True)


@njit(cache=True)
def _bulk_audit(h, border, offsets, budget):
    return _queue_core(h, border, offsets, budget, True, False, True)


_QUEUE_KERNELS = {
    (False, False, False): _fifo, (False, True, False): _lifo, (True, False, False): _bulk,
    (False, False, True): _fifo_audit, (False, True, True): _lifo_audit,
    (True, False, True): _bulk_audit,
}


def run_queue(h, border, offsets, bulk, lifo, budget, audit):
    """FIFO / LIFO worklist. ``bulk`` topples floor(h / 2d) times per pop
    (bulk LIFO is not offered)."""
    kernel = _QUEUE_KERNELS[(bool(bulk), bool(lifo) and not bulk, bool(audit))]
    return kernel(h, border, offsets, budget)


@njit(cache=True)
def run_random(h, border, offsets, seed, budget, audit):
    """Topple a uniformly random active cell once per step."""
    np.random.seed(seed)
    ncell = h.size
    deg = offsets.size
    active = np.empty(ncell, dtype=np.int64)
    pos = np.full(ncell, -1, dtype=np.int64)
    count = 0
    for i in range(ncell):
        if h[i] >= deg:
            active[count] = i
            pos[i] = count
            count += 1
    done = 0
    while count > 0:
        slot = np.random.randint(0, count)
        i = active[slot]
        if border[i]:
            return BORDER, done
        if done >= budget:
            return BUDGET, done
        if audit and h[i] < deg:
            return ILLEGAL, done
        h[i] -= deg
        done += 1
        if h[i] < deg:
            last = active[count - 1]
            active[slot] = last
            pos[last] = slot
            pos[i] = -1
            count -= 1
        for a in range(deg):
            j = i + offsets[a]
            h[j] += 1
            if h[j] >= deg and pos[j] < 0:
                active[count] = j
                pos[j] = count
                count += 1
    return STABLE, done


@njit(cache=True)
def _relax_tile(h, border, offsets, cells, leaves, inbox, budget, audit):
    """Stabilise one tile in place; emissions leaving it go to ``inbox``.

    ``leaves[i]`` has bit ``a`` set when the neighbour of ``i`` in direction
    ``a`` belongs to another tile. ``inbox[a, j]`` collects what cell ``j``
    receives across a tile edge from direction ``a``; each slot has a single
    writing tile. Returns ``(topplings, hit_border, emitted)``; topplings is
    -1 on an audit failure.
    """
    deg = offsets.size
    m = cells.size
    size = _ring_size(m + deg + 1)
    mask = size - 1
    queue = np.empty(size, dtype=np.int64)
    count = 0
    for t in range(m):
        i = cells[t]
        if h[i] >= deg:
            queue[count] = i
            count += 1
    head = 0
    done = 0
    emitted = False
    while count > 0:
        i = queue[head]
        if border[i]:
            return done, True, emitted
        if done >= budget:
            break
        k = 1
        if h[i] >= 2 * deg:
            k = h[i] // deg
            if k > budget - done:
                k = budget - done
        if audit and h[i] < deg * k:
            return -1, False, emitted
        hi = h[i] - deg * k
        h[i] = hi
        done += k
        head = (head + 1) & mask
        count -= 1
        queue[(head + count) & mask] = i
        count += hi >= deg
        out = leaves[i]
        for a in range(deg):
            j = i + offsets[a]
            if (out >> a) & 1:
                inbox[a, j] += k
                emitted = True
            else:
                hj = h[j] + k
                h[j] = hj
                queue[(head + count) & mask] = j
                count += (hj >= deg) & (hj - k < deg)
    return done, False, emitted


@njit(cache=True, parallel=True)
def run_tiled(h, border, offsets, tile_cells, tile_start, owner, leaves, edge_cells,
              budget, audit):
    """Super-steps: relax every active tile independently, then flush the
    inboxes of the tile-edge cells. A tile is active when it may hold an
    unstable cell: initially all, afterwards those that just received.
    """
    deg = offsets.size
    ntile = tile_start.size - 1
    inbox = np.zeros((deg, h.size), dtype=np.int64)
    active = np.ones(ntile, dtype=np.uint8)
    per_tile = np.zeros(ntile, dtype=np.int64)
    hits = np.zeros(ntile, dtype=np.uint8)
    done = 0
    while True:
        remaining = budget - done
        for t in prange(ntile):
            per_tile[t] = 0
            hits[t] = 0
            if active[t]:
                cells = tile_cells[tile_start[t]:tile_start[t + 1]]
                got, hit, _ = _relax_tile(h, border, offsets, cells, leaves,
                                          inbox, remaining, audit)
                per_tile[t] = got
                hits[t] = hit
        # barrier: flush cross-tile emissions and wake the receiving tiles
        busy = False
        for t in range(ntile):
            if per_tile[t] < 0:
                return ILLEGAL, done
            done += per_tile[t]
            # a tile stopped early (border or budget) may still be unstable
            active[t] = hits[t]
        for e in range(edge_cells.size):
            j = edge_cells[e]
            got = 0
            for a in range(deg):
                got += inbox[a, j]
                inbox[a, j] = 0
            if got != 0:
                h[j] += got
                active[owner[j]] = 1
                busy = True
        for t in range(ntile):
            if hits[t]:
                return BORDER, done
        if done >= budget:
            for j in range(h.size):
                if h[j] >= deg:
                    return BUDGET, done
            return STABLE, done
        if not busy:
            return STABLE, done


@njit(cache=True)
def add_odometer(odo, before, after, border, offsets):
    """Add to ``odo`` the firing vector that turned ``before`` into ``after``.

    March along axis 0: the equation at cell y fixes u at y + e0 from u on
    the two slabs already known. Slab 0 is border, so u vanishes there.
    """
    deg = offsets.size
    s0 = offsets[1]
    n = after.size
    u = np.zeros(n, dtype=np.int64)
    for x in range(s0, n):
        if border[x]:
            continue
        y = x - s0
        acc = after[y] - before[y]
        if not border[y]:
            acc += deg * u[y]
            for a in range(deg):
                if a != 1:
                    acc -= u[y + offsets[a]]
        u[x] = acc
    for x in range(n):
        odo[x] += u[x]
    return u


@njit(cache=True)
def run_schedule_round(h, odo, offsets, cells, mult):
    """Greedy legal execution of one round; returns index of a stuck cell or -1."""
    deg = offsets.size
    m = cells.size
    left = mult.copy()
    progress = True
    remaining = 0
    for t in range(m):
        remaining += left[t]
    while remaining > 0 and progress:
        progress = False
        for t in range(m):
            if left[t] == 0:
                continue
            i = cells[t]
            k = h[i] // deg
            if k > left[t]:
                k = left[t]
            if k <= 0:
                continue
            h[i] -= deg * k
            odo[i] += k
            left[t] -= k
            remaining -= k
            progress = True
            for a in range(deg):
                h[i + offsets[a]] += k
    if remaining == 0:
        return -1
    for t in range(m):
        if left[t] > 0:
            return t
    return -1


@njit(cache=True)
def untopple_rounds(f, w, border, offsets, max_rounds):
    """Lower a stable supersolution ``w`` to the least one.

    Each round peels {w > 0} down to its largest subset A in which every
    cell x has more than f(x) neighbours in A, then untopples A once.
    ``f`` is kept equal to s + L(w). Returns the number of rounds, or -1
    if some w > 0 sits on the border (caller grows and retries).
    """
    ncell = f.size
    deg = offsets.size
    cnt = np.zeros(ncell, dtype=np.int64)
    alive = np.zeros(ncell, dtype=np.uint8)
    stack = np.empty(ncell, dtype=np.int64)
    members = np.empty(ncell, dtype=np.int64)
    m = 0
    for i in range(ncell):
        if w[i] > 0:
            if border[i]:
                return -1
            members[m] = i
            m += 1
    rounds = 0
    while rounds < max_rounds and m > 0:
        for t in range(m):
            alive[members[t]] = 1
        top = 0
        for t in range(m):
            i = members[t]
            c = 0
            for a in range(deg):
                c += alive[i + offsets[a]]
            cnt[i] = c
            if c <= f[i]:
                stack[top] = i
                top += 1
        while top > 0:
            top -= 1
            i = stack[top]
            if alive[i] == 0:
                continue
            alive[i] = 0
            for a in range(deg):
                j = i + offsets[a]
                if alive[j]:
                    cnt[j] -= 1
                    if cnt[j] == f[j]:
                        stack[top] = j
                        top += 1
        size = 0
        keep = 0
        for t in range(m):
            i = members[t]
            if alive[i]:
                size += 1
                alive[i] = 0
                w[i] -= 1
                f[i] += deg
                for a in range(deg):
                    f[i + offsets[a]] -= 1
            if w[i] > 0:
                members[keep] = i
                keep += 1
        if size == 0:
            break
        m = keep
        rounds += 1
    return rounds
