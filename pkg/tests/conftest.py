"""Shared fixtures: meshes, objects, and hands are expensive, so build once."""

import numpy as np
import pytest

from dualgrasp import geometry, hand


@pytest.fixture(scope="session")
def sphere_mesh():
    return geometry.make_icosphere(0.2, 2)


@pytest.fixture(scope="session")
def box_mesh():
    return geometry.make_box((0.4, 0.4, 0.4))


@pytest.fixture(scope="session")
def slab_mesh():
    # wide thin slab: the +x face is large enough that a hand hovering beside
    # it projects every sample onto that one face (analytic distances)
    return geometry.make_box((0.1, 0.8, 0.8))


@pytest.fixture(scope="session")
def sphere_obj(sphere_mesh):
    return geometry.ObjectModel("sphere", sphere_mesh, density=2500.0)


@pytest.fixture(scope="session")
def slab_obj(slab_mesh):
    return geometry.ObjectModel("slab", slab_mesh, density=1000.0)


@pytest.fixture(scope="session")
def hand22():
    return hand.load_hand(hand.default_hand_path("hand22"))


@pytest.fixture(scope="session")
def pincer():
    return hand.load_hand(hand.default_hand_path("pincer"), allow_small=True)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240917)
