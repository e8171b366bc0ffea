"""Seeded random instances for the desk-scale suite and the `gen` command."""
import logging
import math

import numpy as np

from salbhybrid.errors import InstanceError
from salbhybrid.instance import Instance, first_fit_upper_bound, serialize_instance, validate

logger = logging.getLogger(__name__)


def generate_instance(tasks, density=0.2, seed=0, time_range=(1, 9), cycle_time=None, stations=None, name=""):
    """
    Random plain instance: task times uniform in time_range, and an edge
    (j1, j2) for j1 < j2 with probability density (no transitive closure).
    Without a cycle time, CT is the larger of the longest task and a third of
    the total time. Without a station count, m is the first-fit bound.
    The same arguments always produce the same instance.
    """
    if tasks < 1:
        raise InstanceError(f"need at least one task, got {tasks}")
    if not 0.0 <= density <= 1.0:
        raise InstanceError(f"density must lie in [0, 1], got {density}")
    lo, hi = time_range
    if lo < 1 or hi < lo:
        raise InstanceError(f"bad time range {lo}..{hi}")

    rng = np.random.default_rng(seed)
    times = rng.integers(lo, hi + 1, size=tasks)
    task_time = {j: int(times[j - 1]) for j in range(1, tasks + 1)}
    edges = []
    for j1 in range(1, tasks + 1):
        draws = rng.random(tasks - j1)
        edges.extend((j1, j2) for j2, u in zip(range(j1 + 1, tasks + 1), draws) if u < density)

    if cycle_time is None:
        cycle_time = max(max(task_time.values()), math.ceil(sum(task_time.values()) / 3))
    if cycle_time < max(task_time.values()):
        raise InstanceError(f"cycle time {cycle_time} is below the longest task time {max(task_time.values())}")

    # provisional m = n, then first-fit unless a station count is given
    full = frozenset(range(1, tasks + 1))
    inst = Instance(tasks, tasks, task_time, {j: full for j in task_time},
                    {i: cycle_time for i in range(1, tasks + 1)}, tuple(edges), name)
    inst = inst.with_stations(stations if stations is not None else first_fit_upper_bound(inst))
    violations = validate(inst)
    if violations:
        raise InstanceError("; ".join(violations))
    logger.info(f"generated n={tasks} m={inst.m} CT={cycle_time} edges={len(edges)} seed={seed}")
    return inst


def generate_text(*args, **kwargs):
    return serialize_instance(generate_instance(*args, **kwargs))


def parse_time_range(text):
    """'LO..HI' -> (LO, HI)."""
    try:
        lo, hi = (int(part) for part in text.split(".."))
    except ValueError:
        raise InstanceError(f"time range must look like LO..HI, got {text!r}")
    return lo, hi
