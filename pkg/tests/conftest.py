import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

# property suites run at >= 1000 cases; use the "invariants" profile on any
# test that backs a module's invariants section
settings.register_profile(
    "invariants",
    max_examples=1000,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.register_profile("default", deadline=None)
settings.load_profile("default")

ASSETS = os.path.join(os.path.dirname(__file__), os.pardir, "assets")
DATA = os.path.join(os.path.dirname(__file__), "_data")


def asset(name):
    return os.path.join(ASSETS, name)


@pytest.fixture(scope="session")
def cornell_scene():
    from radcache.scene import load_scene

    return load_scene(asset("cornell.json"))


@pytest.fixture(scope="session")
def furnace_scene():
    from radcache.scene import load_scene

    return load_scene(asset("furnace.json"))


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def tri_soup(rng, n_tris, spread=2.0):
    """Random triangle soup with bounded aspect (degenerate-free)."""
    base = rng.uniform(-spread, spread, size=(n_tris, 3))
    e1 = rng.uniform(-1.0, 1.0, size=(n_tris, 3))
    e2 = rng.uniform(-1.0, 1.0, size=(n_tris, 3))
    area2 = np.linalg.norm(np.cross(e1, e2), axis=1)
    keep = area2 > 1e-3
    base, e1, e2 = base[keep], e1[keep], e2[keep]
    return np.stack([base, base + e1, base + e2], axis=1)
