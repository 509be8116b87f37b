from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from armlab.lattice import configuration_from_states, disk, region_array

ORACLES = Path(__file__).parent / "oracles"


class Oracle:
    """Frozen brute-force truth table over the sites of a small instance."""

    def __init__(self, name: str):
        z = np.load(ORACLES / f"{name}.npz")
        self.sites = z["sites"]
        self.nsites = int(z["nsites"])
        self.count = int(z["count"])
        self.packed = z["table"]
        self.table = np.unpackbits(self.packed)[: 1 << self.nsites].astype(bool)
        self.R = int(np.max((np.abs(self.sites[:, 0]) + np.abs(self.sites[:, 1]) + np.abs(self.sites.sum(axis=1))) // 2))
        self.region = disk(self.R)
        coords = region_array(self.region)
        pos = {tuple(c): i for i, c in enumerate(coords.tolist())}
        self.index = np.array([pos[tuple(s)] for s in self.sites.tolist()])
        self.ncoords = len(coords)

    def configuration(self, conf: int):
        states = np.zeros(self.ncoords, dtype=bool)
        states[self.index] = (int(conf) >> np.arange(self.nsites)) & 1
        return configuration_from_states(self.region, states)


@pytest.fixture(scope="session")
def oracle():
    cache = {}

    def load(name):
        if name not in cache:
            cache[name] = Oracle(name)
        return cache[name]

    return load
