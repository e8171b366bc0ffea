"""
Coefficient computation for lifting a valid inequality alpha.x <= beta by one
more variable x_(i0, j0).

With task j0 placed at station i0, the best the left side can still reach is
bounded by gamma, the optimum of a relaxation that keeps one station per task
and, per station, a cardinality bound on every prefix of a task permutation.
The lifted coefficient is beta - gamma.
"""
import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Optional, Tuple

import networkx as nx

logger = logging.getLogger(__name__)


def prefix_capacity(times, capacity):
    """
    v[s] = most items among the first s (in the given order) that fit into
    capacity together. Taking the smallest first is exact for cardinality.
    """
    caps = {}
    for s in range(1, len(times) + 1):
        total = 0
        count = 0
        for t in sorted(times[:s]):
            if total + t > capacity:
                break
            total += t
            count += 1
        caps[s] = count
    return caps


@dataclass
class LiftContext:
    target: Tuple[int, int]
    a_star: FrozenSet[Tuple[int, int]]
    permutations: Dict[int, Tuple[int, ...]]
    prefix_caps: Dict[int, Dict[int, int]]
    position: Dict[int, Dict[int, int]] = field(default_factory=dict)
    gamma: Optional[int] = None

    def __post_init__(self):
        if not self.position:
            self.position = {i: {j: s for s, j in enumerate(perm, start=1)}
                             for i, perm in self.permutations.items()}


def build_lift_context(inst, coeffs, target):
    """
    Keeps the pairs of the inequality that can still be 1 alongside x_target = 1
    and builds one permutation per station: inequality tasks by decreasing
    |coefficient|, then the remaining station tasks by decreasing time.
    """
    i0, j0 = target
    a_star = set()
    for (i, j) in coeffs:
        if j == j0:
            continue
        if i > i0 and inst.precedes(j, j0):
            continue
        if i < i0 and inst.precedes(j0, j):
            continue
        a_star.add((i, j))

    permutations, prefix_caps = {}, {}
    for i in sorted({i for i, _ in a_star}):
        lifted = sorted((j for s, j in a_star if s == i), key=lambda j: (-abs(coeffs[(i, j)]), j))
        rest = sorted((j for j in inst.station_tasks.get(i, ()) if j not in lifted and j != j0),
                      key=lambda j: (-inst.task_time[j], j))
        perm = tuple(lifted) + tuple(rest)
        capacity = inst.capacity[i] - (inst.task_time[j0] if i == i0 else 0)
        permutations[i] = perm
        prefix_caps[i] = prefix_capacity([inst.task_time[j] for j in perm], capacity)
    return LiftContext(target, frozenset(a_star), permutations, prefix_caps)


def _positive(ctx, alpha):
    return {p: a for p, a in alpha.items() if p in ctx.a_star and a > 0}


def lift_gamma(ctx, alpha):
    """
    Maximum of sum(alpha * z) over the relaxation, as a min-cost flow: every
    task sends at most one unit into the slot of its permutation position at
    one station, and the chain arc leaving slot s of station i carries at
    most v[i][s] units.
    """
    weights = _positive(ctx, alpha)
    if not weights:
        ctx.gamma = 0
        return 0
    tasks = sorted({j for _, j in weights})
    supply = len(tasks)

    g = nx.DiGraph()
    g.add_node("s", demand=-supply)
    g.add_node("t", demand=supply)
    g.add_edge("s", "t", capacity=supply, weight=0)
    for j in tasks:
        g.add_edge("s", ("task", j), capacity=1, weight=0)
    for (i, j), a in weights.items():
        g.add_edge(("task", j), ("slot", i, ctx.position[i][j]), capacity=1, weight=-int(a))
    for i, perm in ctx.permutations.items():
        if not any(p[0] == i for p in weights):
            continue
        caps = ctx.prefix_caps[i]
        last = len(perm)
        for s in range(1, last):
            g.add_edge(("slot", i, s), ("slot", i, s + 1), capacity=caps[s], weight=0)
        g.add_edge(("slot", i, last), "t", capacity=caps[last], weight=0)

    cost, _ = nx.network_simplex(g)
    ctx.gamma = int(-cost)
    return ctx.gamma


def lift_gamma_exhaustive(ctx, alpha):
    """Same optimum by enumeration, for small contexts and cross-checks."""
    weights = _positive(ctx, alpha)
    by_task = {}
    for (i, j) in sorted(weights):
        by_task.setdefault(j, []).append(i)
    tasks = sorted(by_task)
    best = 0
    for choice in itertools.product(*[[None] + by_task[j] for j in tasks]):
        used = {}
        for j, i in zip(tasks, choice):
            if i is not None:
                used.setdefault(i, []).append(ctx.position[i][j])
        if not all(_prefix_ok(sorted(ps), ctx.prefix_caps[i]) for i, ps in used.items()):
            continue
        value = sum(weights[(i, j)] for j, i in zip(tasks, choice) if i is not None)
        best = max(best, value)
    return int(best)


def _prefix_ok(positions, caps):
    # the k-th chosen position (1-based) must have capacity for k items
    return all(caps[p] >= k for k, p in enumerate(positions, start=1))


def lift_coefficient(inst, coeffs, rhs, target, exhaustive=False):
    ctx = build_lift_context(inst, coeffs, target)
    gamma = lift_gamma_exhaustive(ctx, coeffs) if exhaustive else lift_gamma(ctx, coeffs)
    ctx.gamma = gamma
    return max(0, int(rhs) - gamma), ctx
