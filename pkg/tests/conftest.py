import math

import numpy as np
import pytest

from ustwind import wilson
from ustwind.lattice import build_square_annulus, build_zipper, build_bent_zipper, ccw_order


@pytest.fixture(scope="session")
def oracle():
    """The 5x5-minus-center lattice with its default zipper."""
    lat = build_square_annulus(2, 0)
    return lat, build_zipper(lat)


@pytest.fixture(scope="session")
def oracle_trees(oracle):
    lat, _ = oracle
    trees, count = wilson.enumerate_spanning_trees(lat)
    assert count == 9600
    return trees


@pytest.fixture(scope="session")
def oracle_marks(oracle):
    """Canonical ccw marked tuples (xs, vs) per branch count on the oracle."""
    lat, _ = oracle
    inner = ccw_order(lat, lat.inner_boundary)
    outer = [
        v
        for v in ccw_order(lat, lat.outer_boundary)
        if any(not lat.is_outer[w] for w in lat.neighbors(v))
    ]
    return {
        1: ([inner[0]], [outer[3]]),
        2: ([inner[1], inner[3]], [outer[1], outer[7]]),
        3: ([inner[0], inner[1], inner[2]], [outer[1], outer[4], outer[7]]),
    }


@pytest.fixture(scope="session")
def bent(oracle):
    lat, _ = oracle
    return build_bent_zipper(lat)


def rng_for(test_tag: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(0xA11CE + test_tag))
