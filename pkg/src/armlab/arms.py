"""Arm events on configurations, Monte Carlo estimation and exponent fits."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .lattice import (Configuration, Region, disk, embed, label_grid, radius,
                      region_array, rhombus, sample_configuration, site_key,
                      strip, strip_height)
from .rng import derive_key, site_uniform

OPEN, CLOSED = 1, 0
_COLOR_NAMES = {"open": OPEN, "closed": CLOSED, "o": OPEN, "c": CLOSED, 1: OPEN, 0: CLOSED, True: OPEN, False: CLOSED}


class RegionTooSmall(ValueError):
    """The configuration does not cover the sites an event depends on."""


def color_code(c) -> int:
    try:
        return _COLOR_NAMES[c.lower() if isinstance(c, str) else c]
    except KeyError:
        raise ValueError(f"unknown color {c!r}") from None


# ---------------------------------------------------------------- working sets

def _annulus_grid(c: Configuration, r: int, R: int, half: bool):
    """States on {r <= d <= R} (and x <= 0 if half) as a dense grid.

    Returns (grid, dist, a0, b0) with grid = -1 off the working set.
    """
    big = Region("disk", 0, R, c.region.euclidean)
    need = region_array(big)
    d = radius(need[:, 0], need[:, 1], c.region.euclidean)
    keep = d >= r
    if half:
        keep &= embed(need[:, 0], need[:, 1])[0] <= 0
    need = need[keep]
    d = d[keep]
    idx = c.indices(need)
    if np.any(idx < 0):
        raise RegionTooSmall(f"configuration does not contain the sites of radius {r}..{R}")
    ext = int(np.abs(need).max()) if len(need) else 0
    a0 = b0 = -ext
    n = 2 * ext + 1
    g = np.full((n, n), -1, dtype=np.int8)
    dist = np.full((n, n), -1, dtype=np.int64)
    g[need[:, 0] - a0, need[:, 1] - b0] = c.states[idx]
    dist[need[:, 0] - a0, need[:, 1] - b0] = d
    return g, dist, a0, b0


def _crossing_labels(labels, dist, r, R):
    inner = set(np.unique(labels[(dist == r) & (labels >= 0)]).tolist())
    outer = set(np.unique(labels[(dist == R) & (labels >= 0)]).tolist())
    return inner & outer


def _has_crossing(c: Configuration, r: int, R: int, color: int, half: bool = False) -> bool:
    if r >= R:
        raise ValueError("inner radius must be smaller than outer radius")
    g, dist, _, _ = _annulus_grid(c, r, R, half)
    labels, _ = label_grid(g, color)
    return bool(_crossing_labels(labels, dist, r, R))


# ---------------------------------------------------------------- detectors

def event_one_arm(c: Configuration, R: int) -> bool:
    if R < 0:
        raise ValueError("R must be nonnegative")
    g, dist, a0, b0 = _annulus_grid(c, 0, R, False)
    if g[-a0, -b0] != OPEN:
        return False
    if R == 0:
        return True
    labels, _ = label_grid(g, OPEN)
    return bool(np.any(labels[dist == R] == labels[-a0, -b0]))


def event_annulus_crossing(c: Configuration, R1: int, R2: int) -> bool:
    return _has_crossing(c, R1, R2, OPEN)


def closed_annulus_crossing(c: Configuration, R1: int, R2: int) -> bool:
    return _has_crossing(c, R1, R2, CLOSED)


def event_circuit(c: Configuration, R: int) -> bool:
    """Open circuit in the annulus between R and 2R, decided by duality."""
    if R < 1:
        raise ValueError("R must be positive")
    return not _has_crossing(c, R, 2 * R, CLOSED)


@njit(cache=True)
def _unit_maxflow(usable, inner, outer, kcap):
    """Max number of vertex-disjoint inner->outer paths through usable sites, capped at kcap."""
    na, nb = usable.shape
    node = np.full((na, nb), -1, dtype=np.int64)
    n = 0
    for i in range(na):
        for j in range(nb):
            if usable[i, j]:
                node[i, j] = n
                n += 1
    if n == 0:
        return 0
    src = 2 * n
    snk = 2 * n + 1
    nn = 2 * n + 2
    maxe = 2 * (n * 9)
    to = np.empty(maxe, dtype=np.int64)
    cap = np.empty(maxe, dtype=np.int8)
    nxt = np.empty(maxe, dtype=np.int64)
    head = np.full(nn, -1, dtype=np.int64)
    ne = 0
    for i in range(na):
        for j in range(nb):
            v = node[i, j]
            if v < 0:
                continue
            for t in range(3):
                if t == 0:
                    u, w = 2 * v, 2 * v + 1
                elif t == 1:
                    if not inner[i, j]:
                        continue
                    u, w = src, 2 * v
                else:
                    if not outer[i, j]:
                        continue
                    u, w = 2 * v + 1, snk
                to[ne] = w; cap[ne] = 1; nxt[ne] = head[u]; head[u] = ne; ne += 1
                to[ne] = u; cap[ne] = 0; nxt[ne] = head[w]; head[w] = ne; ne += 1
            for k in range(6):
                di = (1, 0, -1, -1, 0, 1)[k]
                dj = (0, 1, 1, 0, -1, -1)[k]
                ii = i + di
                jj = j + dj
                if 0 <= ii < na and 0 <= jj < nb and node[ii, jj] >= 0:
                    u = 2 * v + 1
                    w = 2 * node[ii, jj]
                    to[ne] = w; cap[ne] = 1; nxt[ne] = head[u]; head[u] = ne; ne += 1
                    to[ne] = u; cap[ne] = 0; nxt[ne] = head[w]; head[w] = ne; ne += 1
    flow = 0
    prev = np.empty(nn, dtype=np.int64)
    queue = np.empty(nn, dtype=np.int64)
    while flow < kcap:
        prev[:] = -1
        prev[src] = -2
        qh = 0
        qt = 0
        queue[qt] = src
        qt += 1
        while qh < qt and prev[snk] == -1:
            u = queue[qh]
            qh += 1
            e = head[u]
            while e >= 0:
                w = to[e]
                if cap[e] > 0 and prev[w] == -1:
                    prev[w] = e
                    queue[qt] = w
                    qt += 1
                e = nxt[e]
        if prev[snk] == -1:
            break
        w = snk
        while w != src:
            e = prev[w]
            cap[e] -= 1
            cap[e ^ 1] += 1
            w = to[e ^ 1]
        flow += 1
    return flow


def event_disjoint_open_arms(c: Configuration, k: int, r: int, R: int, halfPlane: bool = False) -> bool:
    if k < 1:
        raise ValueError("k must be at least 1")
    if r >= R:
        raise ValueError("inner radius must be smaller than outer radius")
    g, dist, _, _ = _annulus_grid(c, r, R, halfPlane)
    usable = g == OPEN
    return _unit_maxflow(usable, usable & (dist == r), usable & (dist == R), k) >= k


def _angle(a, b):
    x, y = embed(a, b)
    return np.mod(np.arctan2(y, x), 2 * np.pi)


def crossing_clusters(c: Configuration, r: int, R: int, halfPlane: bool = False):
    """Open and closed clusters crossing the (half-)annulus, in counterclockwise order.

    Each entry is (color, mask) where mask marks the cluster on the working grid.
    For the half-plane the order runs from the upper boundary ray to the lower one.
    """
    g, dist, a0, b0 = _annulus_grid(c, r, R, halfPlane)
    found = []
    for color in (OPEN, CLOSED):
        labels, _ = label_grid(g, color)
        for lab in _crossing_labels(labels, dist, r, R):
            ii, jj = np.nonzero((labels == lab) & (dist == r))
            a = ii + a0
            b = jj + b0
            th = _angle(a, b)
            if halfPlane:
                th = np.where(th < 0.5 * np.pi - 1e-9, th + 2 * np.pi, th)
            j = np.lexsort((b, a, th))[0]
            found.append(((float(th[j]), int(a[j]), int(b[j])), color, labels == lab))
    found.sort(key=lambda t: t[0])
    return [(color, mask) for _, color, mask in found], dist


def _greedy(seq, colors, capacity):
    j = 0
    left = {}
    for col in seq:
        while j < len(colors):
            if colors[j] == col:
                if j not in left:
                    left[j] = capacity(j)
                if left[j] > 0:
                    break
            j += 1
        if j == len(colors):
            return False
        left[j] -= 1
    return True


def event_multichromatic_arms(c: Configuration, colorSeq, r: int, R: int, halfPlane: bool = False) -> bool:
    """Disjoint crossings whose colors read colorSeq counterclockwise around the inner sphere.

    The order is cyclic in the full plane and linear (upper ray to lower ray) in the half-plane.
    """
    if len(colorSeq) == 0:
        raise ValueError("colorSeq must be nonempty")
    if r >= R:
        raise ValueError("inner radius must be smaller than outer radius")
    seq = [color_code(x) for x in colorSeq]
    clusters, dist = crossing_clusters(c, r, R, halfPlane)
    colors = [col for col, _ in clusters]
    if any(seq.count(col) > 0 and col not in colors for col in (OPEN, CLOSED)):
        return False
    need = len(seq)
    cache = {}

    def capacity(j):
        if j not in cache:
            mask = clusters[j][1]
            cache[j] = _unit_maxflow(mask, mask & (dist == r), mask & (dist == R), need)
        return cache[j]

    if halfPlane:
        return _greedy(seq, colors, capacity)
    m = len(colors)
    for s in range(m):
        rot_c = list(range(s, m)) + list(range(s))
        sub_colors = [colors[j] for j in rot_c]
        for t in range(len(seq)):
            if _greedy(seq[t:] + seq[:t], sub_colors, lambda q: capacity(rot_c[q])):
                return True
    return False


def event_rhombus_crossing(c: Configuration, L: int, direction: str = "leftRight", color=OPEN, L2: int | None = None) -> bool:
    """Crossing of the parallelogram {0 <= a < L, 0 <= b < L2} (L2 = L: the rhombus).

    leftRight joins a=0 to a=L-1, topBottom joins b=0 to b=L2-1.
    """
    if direction not in ("leftRight", "topBottom"):
        raise ValueError("direction must be leftRight or topBottom")
    L2 = L if L2 is None else L2
    if L < 1 or L2 < 1:
        raise ValueError("sides must be positive")
    a, b = np.meshgrid(np.arange(L), np.arange(L2), indexing="ij")
    need = np.stack([a.ravel(), b.ravel()], axis=1)
    idx = c.indices(need)
    if np.any(idx < 0):
        raise RegionTooSmall("configuration does not contain the parallelogram")
    g = np.full((L, L2), -1, dtype=np.int8)
    g[need[:, 0], need[:, 1]] = c.states[idx]
    labels, _ = label_grid(g, color_code(color))
    if direction == "leftRight":
        s1, s2 = labels[0, :], labels[L - 1, :]
    else:
        s1, s2 = labels[:, 0], labels[:, L2 - 1]
    return bool(set(s1[s1 >= 0].tolist()) & set(s2[s2 >= 0].tolist()))


def strip_cluster_count(c: Configuration, R: int) -> int:
    """Number of open clusters of the strip joining the segment I_R to the far line L_R."""
    need = region_array(strip(R))
    idx = c.indices(need)
    if np.any(idx < 0):
        raise RegionTooSmall("configuration does not contain the strip")
    a0, b0 = need.min(axis=0)
    g = np.full(tuple(need.max(axis=0) - need.min(axis=0) + 1), -1, dtype=np.int8)
    g[need[:, 0] - a0, need[:, 1] - b0] = c.states[idx]
    labels, _ = label_grid(g, OPEN)
    x, y = embed(need[:, 0], need[:, 1])
    lab = labels[need[:, 0] - a0, need[:, 1] - b0]
    near = (x > -1) & (np.abs(y) <= R) & (lab >= 0)
    far = (x < -R + 1) & (lab >= 0)
    return len(set(lab[near].tolist()) & set(lab[far].tolist()))


# ---------------------------------------------------------------- Monte Carlo

@dataclass(frozen=True)
class ArmEventSpec:
    kind: str
    R: int = 0
    r: int = 0
    k: int = 1
    colors: tuple = ()
    halfPlane: bool = False
    L: int = 0
    direction: str = "leftRight"
    L2: int = 0  # second side of a rhombusCrossing parallelogram; 0 means L
    euclidean: bool = False

    def __post_init__(self):
        kinds = ("oneArm", "annulusCrossing", "circuit", "disjointOpenArms", "multichromaticArms", "rhombusCrossing", "closedAnnulusCrossing")
        if self.kind not in kinds:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.kind in ("annulusCrossing", "closedAnnulusCrossing", "disjointOpenArms", "multichromaticArms") and not 0 <= self.r < self.R:
            raise ValueError("radii must satisfy 0 <= r < R")
        if self.kind == "disjointOpenArms" and self.k < 1:
            raise ValueError("k must be at least 1")
        if self.kind == "multichromaticArms" and len(self.colors) == 0:
            raise ValueError("colorSeq must be nonempty")

    def region(self) -> Region:
        if self.kind == "rhombusCrossing":
            return rhombus(max(self.L, self.L2))
        R = 2 * self.R if self.kind == "circuit" else self.R
        return disk(R, self.euclidean)

    def evaluate(self, c: Configuration) -> bool:
        if self.kind == "oneArm":
            return event_one_arm(c, self.R)
        if self.kind == "annulusCrossing":
            return event_annulus_crossing(c, self.r, self.R)
        if self.kind == "closedAnnulusCrossing":
            return closed_annulus_crossing(c, self.r, self.R)
        if self.kind == "circuit":
            return event_circuit(c, self.R)
        if self.kind == "disjointOpenArms":
            return event_disjoint_open_arms(c, self.k, self.r, self.R, self.halfPlane)
        if self.kind == "multichromaticArms":
            return event_multichromatic_arms(c, self.colors, self.r, self.R, self.halfPlane)
        return event_rhombus_crossing(c, self.L, self.direction, L2=self.L2 or self.L)


@dataclass(frozen=True)
class McEstimate:
    trials: int
    hits: int
    pHat: float
    stdErr: float
    seed: int


def make_estimate(trials: int, hits: int, seed: int) -> McEstimate:
    p = hits / trials
    return McEstimate(trials, hits, p, float(np.sqrt(p * (1 - p) / trials)), seed)


def trial_seed(seed: int, t: int) -> int:
    return int(derive_key(np.uint64(seed), np.uint64(t)))


@njit(cache=True)
def _one_arm_radius(key, p, Rmax, seen, state, visit, stamp, stack):
    """Largest graph distance (capped at Rmax) reached by the open cluster of the origin, -1 if closed."""
    off = Rmax
    if site_uniform(key, 0, 0) >= p:
        return -1
    best = 0
    top = 0
    stack[top, 0] = 0
    stack[top, 1] = 0
    top += 1
    visit[off, off] = stamp
    while top > 0:
        top -= 1
        a = stack[top, 0]
        b = stack[top, 1]
        for k in range(6):
            na = a + (1, 0, -1, -1, 0, 1)[k]
            nb = b + (0, 1, 1, 0, -1, -1)[k]
            d = (abs(na) + abs(nb) + abs(na + nb)) // 2
            if d > Rmax:
                continue
            i = na + off
            j = nb + off
            if visit[i, j] == stamp:
                continue
            if seen[i, j] != stamp:
                seen[i, j] = stamp
                state[i, j] = site_uniform(key, na, nb) < p
            if not state[i, j]:
                continue
            visit[i, j] = stamp
            if d > best:
                best = d
                if best == Rmax:
                    return best
            stack[top, 0] = na
            stack[top, 1] = nb
            top += 1
    return best


@njit(cache=True)
def _one_arm_batch(seed, p, Rmax, t0, t1):
    n = 2 * Rmax + 1
    seen = np.zeros((n, n), dtype=np.int64)
    visit = np.zeros((n, n), dtype=np.int64)
    state = np.zeros((n, n), dtype=np.bool_)
    stack = np.empty((n * n, 2), dtype=np.int64)
    out = np.empty(t1 - t0, dtype=np.int64)
    for t in range(t0, t1):
        key = derive_key(derive_key(np.uint64(seed), np.uint64(t)), np.uint64(0x5173))
        out[t - t0] = _one_arm_radius(key, p, Rmax, seen, state, visit, t + 1, stack)
    return out


def one_arm_radii(Rmax: int, trials: int, seed: int, p: float = 0.5, shard: tuple = (0, 1)) -> np.ndarray:
    """Per-trial radius reached by the origin cluster.

    Trial t uses exactly the configuration sample_configuration(..., p, trial_seed(seed, t)),
    so every scale R <= Rmax is evaluated on the same coupled sample.
    """
    i, m = shard
    lo = trials * i // m
    hi = trials * (i + 1) // m
    return _one_arm_batch(np.uint64(seed), p, Rmax, lo, hi)


@njit(cache=True)
def _explore_from_inner(key, p, r, R, half, mark):
    """Mark open sites connected to the inner sphere; return True if the outer sphere is reached."""
    n = 2 * R + 1
    stack = np.empty((n * n, 2), dtype=np.int64)
    top = 0
    reached = False
    for a in range(-r, r + 1):
        for b in range(-r, r + 1):
            if (abs(a) + abs(b) + abs(a + b)) // 2 != r or (half and 2 * a + b > 0):
                continue
            if mark[a + R, b + R] or site_uniform(key, a, b) >= p:
                continue
            mark[a + R, b + R] = True
            stack[top, 0] = a
            stack[top, 1] = b
            top += 1
    while top > 0:
        top -= 1
        a = stack[top, 0]
        b = stack[top, 1]
        if (abs(a) + abs(b) + abs(a + b)) // 2 == R:
            reached = True
        for k in range(6):
            na = a + (1, 0, -1, -1, 0, 1)[k]
            nb = b + (0, 1, 1, 0, -1, -1)[k]
            d = (abs(na) + abs(nb) + abs(na + nb)) // 2
            if d < r or d > R or (half and 2 * na + nb > 0) or mark[na + R, nb + R]:
                continue
            if site_uniform(key, na, nb) >= p:
                continue
            mark[na + R, nb + R] = True
            stack[top, 0] = na
            stack[top, 1] = nb
            top += 1
    return reached


@njit(cache=True)
def _disjoint_arms_batch(seed, p, k, r, R, half, t0, t1):
    n = 2 * R + 1
    out = np.zeros(t1 - t0, dtype=np.bool_)
    dist = np.full((n, n), -1, dtype=np.int64)
    for a in range(-R, R + 1):
        for b in range(-R, R + 1):
            dist[a + R, b + R] = (abs(a) + abs(b) + abs(a + b)) // 2
    for t in range(t0, t1):
        key = derive_key(derive_key(np.uint64(seed), np.uint64(t)), np.uint64(0x5173))
        mark = np.zeros((n, n), dtype=np.bool_)
        if not _explore_from_inner(key, p, r, R, half, mark):
            continue
        out[t - t0] = _unit_maxflow(mark, mark & (dist == r), mark & (dist == R), k) >= k
    return out


@njit(cache=True)
def _crossing_prefilter(seed, p, r, R, half, need_open, need_closed, t0, t1):
    """Trials whose annulus has crossing clusters of every required color."""
    n = 2 * R + 1
    g = np.full((n, n), -1, dtype=np.int8)
    dist = np.full((n, n), -1, dtype=np.int64)
    for a in range(-R, R + 1):
        for b in range(-R, R + 1):
            d = (abs(a) + abs(b) + abs(a + b)) // 2
            if d >= r and d <= R and not (half and 2 * a + b > 0):
                dist[a + R, b + R] = d
    out = np.zeros(t1 - t0, dtype=np.bool_)
    for t in range(t0, t1):
        key = derive_key(derive_key(np.uint64(seed), np.uint64(t)), np.uint64(0x5173))
        for i in range(n):
            for j in range(n):
                if dist[i, j] >= 0:
                    g[i, j] = site_uniform(key, i - R, j - R) < p
        ok = True
        for color in range(2):
            if (color == 1 and not need_open) or (color == 0 and not need_closed):
                continue
            labels, count = label_grid(g, color)
            inner = np.zeros(count, dtype=np.bool_)
            found = False
            for i in range(n):
                for j in range(n):
                    if dist[i, j] == r and labels[i, j] >= 0:
                        inner[labels[i, j]] = True
            for i in range(n):
                for j in range(n):
                    if dist[i, j] == R and labels[i, j] >= 0 and inner[labels[i, j]]:
                        found = True
            if not found:
                ok = False
                break
        out[t - t0] = ok
    return out


def _evaluate_batch(spec: ArmEventSpec, p: float, seed: int, lo: int, hi: int) -> int:
    if spec.kind == "oneArm" and not spec.euclidean:
        return int(np.count_nonzero(_one_arm_batch(np.uint64(seed), p, spec.R, lo, hi) >= spec.R))
    if spec.kind == "disjointOpenArms" and not spec.euclidean:
        return int(np.count_nonzero(_disjoint_arms_batch(np.uint64(seed), p, spec.k, spec.r, spec.R, spec.halfPlane, lo, hi)))
    region = spec.region()
    trials = range(lo, hi)
    if spec.kind == "multichromaticArms" and not spec.euclidean:
        seq = [color_code(x) for x in spec.colors]
        cand = _crossing_prefilter(np.uint64(seed), p, spec.r, spec.R, spec.halfPlane, OPEN in seq, CLOSED in seq, lo, hi)
        trials = (lo + np.flatnonzero(cand)).tolist()
    hits = 0
    for t in trials:
        hits += spec.evaluate(sample_configuration(region, p, trial_seed(seed, t)))
    return hits


def _shard_job(args):
    spec, p, seed, lo, hi = args
    return _evaluate_batch(spec, p, seed, lo, hi)


def shard_bounds(trials: int, shards: int):
    return [(trials * i // shards, trials * (i + 1) // shards) for i in range(shards)]


def mc_estimate(spec: ArmEventSpec, p: float, trials: int, seed: int, shards: int = 1, workers: int = 1) -> McEstimate:
    """Monte Carlo estimate of P[spec] at density p.

    Trial t is drawn from the sub-stream (seed, t), so the result does not depend on
    how trials are split into shards or on the number of workers.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    jobs = [(spec, p, seed, lo, hi) for lo, hi in shard_bounds(trials, max(1, shards))]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as ex:
            hits = sum(ex.map(_shard_job, jobs))
    else:
        hits = sum(map(_shard_job, jobs))
    return make_estimate(trials, hits, seed)


# ---------------------------------------------------------------- exponent fits

@dataclass(frozen=True)
class ExponentFit:
    points: list
    slope: float
    intercept: float
    slopeStdErr: float
    meta: dict = field(default_factory=dict)

    @property
    def exponent(self) -> float:
        return -self.slope


def fit_exponent(points, weights=None) -> ExponentFit:
    """Least-squares line of log(probability) against log(scale)."""
    pts = [(float(s), float(q)) for s, q in points]
    if len(pts) < 3:
        raise ValueError("at least 3 points are required")
    for i, (s, q) in enumerate(pts):
        if not q > 0:
            raise ValueError(f"point {i} (scale={s}) has nonpositive probability {q}")
        if not s > 0:
            raise ValueError(f"point {i} has nonpositive scale {s}")
    if len({s for s, _ in pts}) != len(pts):
        raise ValueError("scales must be distinct")
    x = np.log([s for s, _ in pts])
    y = np.log([q for _, q in pts])
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    W = w.sum()
    xm = (w * x).sum() / W
    ym = (w * y).sum() / W
    sxx = (w * (x - xm) ** 2).sum()
    slope = (w * (x - xm) * (y - ym)).sum() / sxx
    intercept = ym - slope * xm
    res = y - intercept - slope * x
    dof = len(x) - 2
    s2 = (w * res**2).sum() / dof if dof > 0 else 0.0
    return ExponentFit(pts, float(slope), float(intercept), float(np.sqrt(s2 / sxx)))
