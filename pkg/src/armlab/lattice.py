"""Triangular lattice geometry, finite regions, site sampling and cluster labels.

Sites are axial pairs (a, b) embedded at x = a + b/2, y = b*sqrt(3)/2.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numba import njit

from .rng import key_for, site_uniform

SQRT3_2 = np.sqrt(3.0) / 2.0
# counterclockwise from (1,0)
NEIGHBORS = np.array([(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)], dtype=np.int64)
KINDS = ("disk", "annulus", "halfPlaneAnnulus", "strip", "rhombus")
CLOSED = -1  # sentinel label for closed sites


class SiteCoord(NamedTuple):
    a: int
    b: int


def embed(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return a + 0.5 * b, SQRT3_2 * b


def hex_distance(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    return (np.abs(a) + np.abs(b) + np.abs(a + b)) // 2


def radius(a, b, euclidean: bool = False):
    """Graph distance to the origin, or the rounded Euclidean norm."""
    if not euclidean:
        return hex_distance(a, b)
    x, y = embed(a, b)
    return np.rint(np.hypot(x, y)).astype(np.int64)


def site_neighbors(s) -> list[SiteCoord]:
    a, b = s
    return [SiteCoord(a + int(da), b + int(db)) for da, db in NEIGHBORS]


@dataclass(frozen=True)
class Region:
    kind: str
    r1: int = 0
    r2: int = 0
    euclidean: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown region kind {self.kind!r}")
        if self.kind in ("annulus", "halfPlaneAnnulus"):
            if not (0 <= self.r1 < self.r2):
                raise ValueError("annulus radii must satisfy 0 <= r1 < r2")
        elif self.r2 < 0:
            raise ValueError("negative size")

    @property
    def size(self) -> int:
        return self.r2


def disk(R: int, euclidean: bool = False) -> Region:
    return Region("disk", 0, R, euclidean)


def annulus(R1: int, R2: int, euclidean: bool = False) -> Region:
    return Region("annulus", R1, R2, euclidean)


def half_plane_annulus(r: int, R: int, euclidean: bool = False) -> Region:
    return Region("halfPlaneAnnulus", r, R, euclidean)


def strip(R: int) -> Region:
    return Region("strip", 0, R)


def rhombus(L: int) -> Region:
    return Region("rhombus", 0, L)


def strip_height(R: int) -> int:
    # the strip is infinite in y; it is truncated at |y| <= 3R
    return 3 * R


def _bounding_box(r: Region):
    R = r.r2
    if r.kind == "rhombus":
        return 0, R - 1, 0, R - 1
    if r.kind == "strip":
        H = strip_height(R)
        bmax = int(np.floor(H / SQRT3_2))
        return -R - bmax - 1, bmax + 1, -bmax, bmax
    ext = 2 * R + 2 if r.euclidean else R
    return -ext, ext, -ext, ext


def _membership(r: Region, a, b):
    if r.kind == "rhombus":
        return (a >= 0) & (a < r.r2) & (b >= 0) & (b < r.r2)
    x, y = embed(a, b)
    if r.kind == "strip":
        return (x <= 0) & (x >= -r.r2) & (np.abs(y) <= strip_height(r.r2))
    d = radius(a, b, r.euclidean)
    if r.kind == "disk":
        return d <= r.r2
    m = (d > r.r1) & (d <= r.r2)
    if r.kind == "halfPlaneAnnulus":
        m &= x <= 0
    return m


def contains(r: Region, s) -> bool:
    return bool(_membership(r, np.int64(s[0]), np.int64(s[1])))


def region_array(r: Region) -> np.ndarray:
    """Sites of a region as an (N, 2) int array, ordered by b then a."""
    if r.r2 <= 0 and r.kind != "disk":
        return np.zeros((0, 2), dtype=np.int64)
    a0, a1, b0, b1 = _bounding_box(r)
    bb, aa = np.meshgrid(np.arange(b0, b1 + 1), np.arange(a0, a1 + 1), indexing="ij")
    aa = aa.ravel()
    bb = bb.ravel()
    m = _membership(r, aa, bb)
    return np.stack([aa[m], bb[m]], axis=1).astype(np.int64)


def region_sites(r: Region) -> list[SiteCoord]:
    return [SiteCoord(int(a), int(b)) for a, b in region_array(r)]


@njit(cache=True)
def _sample_states(key, coords, p):
    out = np.empty(coords.shape[0], dtype=np.bool_)
    for i in range(coords.shape[0]):
        out[i] = site_uniform(key, coords[i, 0], coords[i, 1]) < p
    return out


def site_key(seed: int) -> int:
    return key_for(seed, 0x5173)


@dataclass(frozen=True, eq=False)
class Configuration:
    region: Region
    coords: np.ndarray
    states: np.ndarray
    p: float
    seed: int
    _lookup: tuple = field(default=None, repr=False, compare=False)

    def indices(self, coords) -> np.ndarray:
        """Positions of the given sites in coords, -1 for sites outside the region."""
        table, a0, b0 = self._lookup
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, 2)
        i = coords[:, 0] - a0
        j = coords[:, 1] - b0
        ok = (i >= 0) & (i < table.shape[0]) & (j >= 0) & (j < table.shape[1])
        out = np.full(len(coords), -1, dtype=np.int64)
        out[ok] = table[i[ok], j[ok]]
        return out

    def index(self, s) -> int:
        return int(self.indices([s])[0])

    def state(self, s) -> bool:
        i = self.index(s)
        if i < 0:
            raise KeyError(f"site {tuple(s)} outside the region")
        return bool(self.states[i])

    def grid(self):
        """Dense (a, b) box with -1 outside the region, 0 closed, 1 open."""
        table, a0, b0 = self._lookup
        g = np.full(table.shape, -1, dtype=np.int8)
        if len(self.coords):
            g[self.coords[:, 0] - a0, self.coords[:, 1] - b0] = self.states
        return g, a0, b0


def make_configuration(region: Region, coords: np.ndarray, states: np.ndarray, p: float = float("nan"), seed: int = -1) -> Configuration:
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 2)
    states = np.asarray(states, dtype=bool)
    if len(coords):
        a0, b0 = coords.min(axis=0)
        a1, b1 = coords.max(axis=0)
    else:
        a0 = b0 = a1 = b1 = 0
    table = np.full((a1 - a0 + 1, b1 - b0 + 1), -1, dtype=np.int64)
    table[coords[:, 0] - a0, coords[:, 1] - b0] = np.arange(len(coords))
    return Configuration(region, coords, states, p, seed, (table, int(a0), int(b0)))


def sample_configuration(region: Region, p: float, seed: int) -> Configuration:
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    coords = region_array(region)
    return make_configuration(region, coords, _sample_states(np.uint64(site_key(seed)), coords, p), p, seed)


def configuration_from_states(region: Region, states) -> Configuration:
    """Configuration with explicitly given states, in region_array order."""
    coords = region_array(region)
    states = np.asarray(states, dtype=bool)
    if states.shape != (len(coords),):
        raise ValueError("one state per site is required")
    return make_configuration(region, coords, states)


@njit(cache=True)
def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


@njit(cache=True)
def label_grid(grid, color):
    """Union-find labels of the sites of grid equal to color (-1 elsewhere)."""
    na, nb = grid.shape
    n = na * nb
    parent = np.arange(n)
    for i in range(na):
        for j in range(nb):
            if grid[i, j] != color:
                continue
            u = i * nb + j
            for k in range(3):  # half of the neighbors suffices
                di = (1, 0, -1)[k]
                dj = (0, 1, 1)[k]
                ii = i + di
                jj = j + dj
                if 0 <= ii < na and 0 <= jj < nb and grid[ii, jj] == color:
                    ru = _find(parent, u)
                    rv = _find(parent, ii * nb + jj)
                    if ru != rv:
                        if ru < rv:
                            parent[rv] = ru
                        else:
                            parent[ru] = rv
    labels = np.full((na, nb), -1, dtype=np.int64)
    remap = np.full(n, -1, dtype=np.int64)
    count = 0
    for i in range(na):
        for j in range(nb):
            if grid[i, j] == color:
                r = _find(parent, i * nb + j)
                if remap[r] < 0:
                    remap[r] = count
                    count += 1
                labels[i, j] = remap[r]
    return labels, count


@dataclass(frozen=True)
class ClusterLabeling:
    labels: np.ndarray  # aligned with the configuration coords, CLOSED for closed sites
    clusterCount: int

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels[self.labels >= 0], minlength=self.clusterCount)


def label_clusters(c: Configuration) -> ClusterLabeling:
    if len(c.coords) == 0:
        return ClusterLabeling(np.zeros(0, dtype=np.int64), 0)
    g, a0, b0 = c.grid()
    lab, count = label_grid(g, 1)
    labels = lab[c.coords[:, 0] - a0, c.coords[:, 1] - b0]
    # relabel in site order so ids do not depend on the box layout
    order = {}
    out = np.full(len(labels), CLOSED, dtype=np.int64)
    for i, l in enumerate(labels):
        if l >= 0:
            out[i] = order.setdefault(int(l), len(order))
    return ClusterLabeling(out, count)
