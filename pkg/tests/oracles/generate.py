"""Brute-force truth tables for the small arm-event instances (run once, outputs frozen).

Independent of the package: sites, adjacency and crossings are enumerated here
from the axial-coordinate definitions.  A crossing of the (half-)annulus r..R
contains a minimal one that starts on the inner sphere, ends on the outer sphere
and stays strictly between them in its interior; disjoint minimal crossings are
ordered by the angle of their inner endpoint.  An event with colour sequence seq
holds iff vertex-disjoint minimal crossings with colours seq exist in increasing
angle order (linear order, half-plane instances only).

    python3 tests/oracles/generate.py
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from numba import njit

HERE = Path(__file__).parent
STEPS = ((1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1))


def hex_dist(a, b):
    return (abs(a) + abs(b) + abs(a + b)) // 2


def sites(r, R, half):
    out = []
    for a in range(-R, R + 1):
        for b in range(-R, R + 1):
            d = hex_dist(a, b)
            if r <= d <= R and (not half or a + b / 2 <= 0):
                out.append((a, b))
    return out


def minimal_paths(r, R, half):
    """All simple paths inner sphere -> outer sphere with interior strictly inside."""
    S = sites(r, R, half)
    index = {s: i for i, s in enumerate(S)}
    paths = []

    def extend(path, used):
        a, b = S[path[-1]]
        for da, db in STEPS:
            n = (a + da, b + db)
            j = index.get(n)
            if j is None or used >> j & 1:
                continue
            d = hex_dist(*n)
            if d == R:
                paths.append(path + [j])
            elif r < d < R:
                extend(path + [j], used | 1 << j)

    for i, (a, b) in enumerate(S):
        if hex_dist(a, b) == r:
            extend([i], 1 << i)
    masks = np.array([sum(1 << j for j in p) for p in paths], dtype=np.int64)
    x = np.array([S[p[0]][0] + S[p[0]][1] / 2 for p in paths])
    y = np.array([S[p[0]][1] * math.sqrt(3) / 2 for p in paths])
    ang = np.mod(np.arctan2(y, x), 2 * np.pi)
    if half:
        ang = np.where(ang < 0.5 * np.pi - 1e-9, ang + 2 * np.pi, ang)
    order = np.argsort(ang, kind="stable")
    # rank of the inner endpoint: paths sharing an endpoint are never both used
    start = np.array([p[0] for p in paths])[order]
    return S, masks[order], start


@njit(cache=True)
def _table(nsites, masks, start, seq):
    n = 1 << nsites
    full = (1 << nsites) - 1
    out = np.zeros(n, dtype=np.bool_)
    m = len(masks)
    L = len(seq)
    idx = np.zeros(L, dtype=np.int64)
    for conf in range(n):
        # depth-first search over increasing path indices with disjoint masks
        depth = 0
        idx[0] = -1
        used = np.zeros(L + 1, dtype=np.int64)
        found = False
        while depth >= 0 and not found:
            idx[depth] += 1
            if idx[depth] >= m:
                depth -= 1
                continue
            p = idx[depth]
            pm = masks[p]
            if depth > 0 and start[p] == start[idx[depth - 1]]:
                continue
            if seq[depth] == 1:
                ok = (pm & conf) == pm
            else:
                ok = (pm & (full ^ conf)) == pm
            if not ok or (pm & used[depth]) != 0:
                continue
            if depth + 1 == L:
                found = True
                break
            used[depth + 1] = used[depth] | pm
            depth += 1
            idx[depth] = p
        out[conf] = found
    return out


def truth_table(r, R, half, colors):
    S, masks, start = minimal_paths(r, R, half)
    seq = np.array([1 if c == "O" else 0 for c in colors], dtype=np.int64)
    return S, _table(len(S), masks, start, seq)


INSTANCES = {
    # name: (r, R, halfPlane, colour sequence)
    "annulus12_O": (1, 2, False, "O"),
    "half12_OC": (1, 2, True, "OC"),
    "half13_OOC": (1, 3, True, "OOC"),
    "half13_OCO": (1, 3, True, "OCO"),
    "half13_OO": (1, 3, True, "OO"),
    "half23_OO": (2, 3, True, "OO"),
    "half23_OC": (2, 3, True, "OC"),
    "half23_OCO": (2, 3, True, "OCO"),
    "half23_COC": (2, 3, True, "COC"),
}

if __name__ == "__main__":
    for name, (r, R, half, colors) in INSTANCES.items():
        S, table = truth_table(r, R, half, colors)
        np.savez_compressed(HERE / f"{name}.npz", sites=np.array(S), table=np.packbits(table),
                            count=int(table.sum()), nsites=len(S))
        print(name, len(S), int(table.sum()), f"{int(table.sum())}/2^{len(S)}")
