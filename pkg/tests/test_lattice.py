from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from armlab.lattice import (CLOSED, Region, annulus, configuration_from_states, contains, disk,
                            embed, half_plane_annulus, hex_distance, label_clusters, label_grid,
                            region_array, region_sites, rhombus, sample_configuration, site_neighbors,
                            strip)


def test_disk_site_counts():
    for R in range(11):
        assert len(region_sites(disk(R))) == 3 * R * (R + 1) + 1


def test_annulus_and_rhombus_counts():
    assert len(region_sites(annulus(1, 2))) == 12
    assert len(region_sites(annulus(0, 3))) == 36
    assert len(region_sites(rhombus(5))) == 25
    for s in region_sites(half_plane_annulus(1, 4)):
        assert embed(*s)[0] <= 0


def test_neighbors_are_unit_distance():
    for s in [(0, 0), (3, -2), (-5, 7)]:
        nb = site_neighbors(s)
        assert len(set(nb)) == 6
        for t in nb:
            x0, y0 = embed(*s)
            x1, y1 = embed(*t)
            assert np.hypot(x1 - x0, y1 - y0) == pytest.approx(1.0)
            assert hex_distance(t[0] - s[0], t[1] - s[1]) == 1


def test_region_validation():
    with pytest.raises(ValueError):
        Region("hexagon", 0, 3)
    with pytest.raises(ValueError):
        annulus(3, 3)
    with pytest.raises(ValueError):
        sample_configuration(disk(2), 1.5, 0)


def test_strip_shape():
    sites = region_array(strip(3))
    x, y = embed(sites[:, 0], sites[:, 1])
    assert x.max() <= 0 and x.min() >= -3
    assert contains(strip(3), (0, 0)) and not contains(strip(3), (1, 0))


def test_extension_property():
    # states are a function of (seed, site): a bigger region reproduces the smaller one
    small = sample_configuration(disk(5), 0.5, 17)
    big = sample_configuration(disk(9), 0.5, 17)
    idx = big.indices(small.coords)
    assert np.all(idx >= 0)
    assert np.array_equal(big.states[idx], small.states)
    ann = sample_configuration(annulus(2, 5), 0.5, 17)
    assert np.array_equal(big.states[big.indices(ann.coords)], ann.states)


def test_density_matches_p():
    c = sample_configuration(disk(60), 0.3, 5)
    n = len(c.states)
    assert abs(c.states.mean() - 0.3) < 4 * np.sqrt(0.21 / n)


def test_seed_changes_configuration():
    a = sample_configuration(disk(10), 0.5, 1)
    b = sample_configuration(disk(10), 0.5, 2)
    assert not np.array_equal(a.states, b.states)


def _bfs_clusters(c):
    index = {tuple(s): i for i, s in enumerate(c.coords.tolist())}
    lab = np.full(len(c.coords), -1)
    k = 0
    for i in range(len(c.coords)):
        if not c.states[i] or lab[i] >= 0:
            continue
        lab[i] = k
        stack = [i]
        while stack:
            j = stack.pop()
            for t in site_neighbors(c.coords[j]):
                q = index.get(tuple(t))
                if q is not None and c.states[q] and lab[q] < 0:
                    lab[q] = k
                    stack.append(q)
        k += 1
    return lab, k


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), R=st.integers(1, 8), p=st.floats(0.2, 0.8))
def test_labels_match_bfs(seed, R, p):
    c = sample_configuration(disk(R), p, seed)
    lab = label_clusters(c)
    ref, k = _bfs_clusters(c)
    assert lab.clusterCount == k
    # same partition: labels agree up to renaming
    pairs = {(int(a), int(b)) for a, b in zip(lab.labels, ref)}
    assert len(pairs) == len({a for a, _ in pairs}) == len({b for _, b in pairs})
    assert np.all((lab.labels == CLOSED) == ~c.states)


def test_label_grid_explicit():
    g = np.array([[1, 1, 0], [0, 0, 1], [1, -1, 1]], dtype=np.int8)
    labels, n = label_grid(g, 1)
    # (0,0)-(0,1) joined; (1,2)-(2,2) joined; (2,0) alone
    assert n == 3
    assert labels[0, 0] == labels[0, 1]
    assert labels[1, 2] == labels[2, 2]
    assert labels[2, 0] not in (labels[0, 0], labels[1, 2])
    assert labels[1, 0] == CLOSED and labels[2, 1] == CLOSED


def test_configuration_from_states_shape():
    with pytest.raises(ValueError):
        configuration_from_states(disk(1), [True])
    c = configuration_from_states(disk(1), np.ones(7, bool))
    assert c.state((0, 0))
    with pytest.raises(KeyError):
        c.state((5, 5))
