import os

import pytest

from salbhybrid.generate import generate_instance
from salbhybrid.instance import Instance, parse_instance

DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data")

CHAIN = """3 3
5 5 5
4 *
4 *
4 *
2
1 2
2 3
"""


def make_instance(times, capacity, edges=(), eligible=None, name=""):
    """Instance from plain Python data; capacity is a list, one entry per station."""
    n, m = len(times), len(capacity)
    full = frozenset(range(1, m + 1))
    eligible = eligible or {}
    return Instance(n, m, {j: times[j - 1] for j in range(1, n + 1)},
                    {j: frozenset(eligible.get(j, full)) for j in range(1, n + 1)},
                    {i: capacity[i - 1] for i in range(1, m + 1)}, tuple(edges), name)


@pytest.fixture
def data_dir():
    return DATA_DIR


@pytest.fixture
def chain():
    return parse_instance(CHAIN, name="chain")


@pytest.fixture
def random_instance():
    def make(seed, tasks=7, density=0.2, time_range=(1, 9), cycle_time=None, stations=None):
        return generate_instance(tasks, density, seed, time_range, cycle_time, stations, name=f"rand{seed}")
    return make


@pytest.fixture
def make():
    return make_instance
