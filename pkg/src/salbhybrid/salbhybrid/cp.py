"""
The constraint model: task j starts at its station (duration 1, resource use
t_j), a cumulative constraint with capacity CT_max over stations 1..m, and
start_a <= start_b for every precedence edge. Heterogeneous capacities are
turned into the single bound CT_max by one fixed artificial task per station
that uses CT_max - CT_i.
"""
import logging
import time
from dataclasses import dataclass
from typing import Dict, FrozenSet, Optional, Tuple

from salbhybrid.instance import Assignment
from salbhybrid.log import trace_enabled

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CpModel:
    inst: object
    n_bar: int
    res: Dict[int, int]
    v_cap: int
    horizon: int
    edges: Tuple[Tuple[int, int], ...]
    initial: Dict[int, FrozenSet[int]]

    @property
    def n(self):
        return self.inst.n

    def duration(self, j):
        return 1

    def artificial(self, i):
        return self.inst.n + i

    def new_store(self):
        return DomainStore(self.initial, self.inst.n)


class DomainStore:
    """Candidate stations per task with a trail for undo."""

    def __init__(self, domains, n):
        self.n = n
        self.dom = {j: set(s) for j, s in domains.items()}
        self.trail = []
        self.failed = any(not s for s in self.dom.values())

    def remove(self, j, i):
        d = self.dom[j]
        if i not in d:
            return False
        d.discard(i)
        self.trail.append((j, i))
        if not d:
            self.failed = True
        return True

    def assign(self, j, i):
        for other in sorted(self.dom[j]):
            if other != i:
                self.remove(j, other)
        if i not in self.dom[j]:
            self.failed = True

    def checkpoint(self):
        return len(self.trail), self.failed

    def restore(self, mark):
        length, failed = mark
        while len(self.trail) > length:
            j, i = self.trail.pop()
            self.dom[j].add(i)
        self.failed = failed

    def is_fixed(self, j):
        return len(self.dom[j]) == 1

    def value(self, j):
        return next(iter(self.dom[j]))

    def size(self):
        """Sum of |S_j| over the real tasks."""
        return sum(len(self.dom[j]) for j in range(1, self.n + 1))

    def task_domains(self):
        return {j: frozenset(self.dom[j]) for j in range(1, self.n + 1)}


def build_cp(inst, domains=None):
    if domains is None:
        real = {j: frozenset(inst.eligible[j]) for j in inst.tasks}
    else:
        if hasattr(domains, "task_domains"):
            domains = domains.task_domains()
        real = {j: frozenset(domains[j]) for j in inst.tasks}
    v_cap = inst.ct_max
    res = {j: inst.task_time[j] for j in inst.tasks}
    initial = dict(real)
    for i in inst.stations:
        res[inst.n + i] = v_cap - inst.capacity[i]
        initial[inst.n + i] = frozenset({i})
    return CpModel(inst, inst.n + inst.m, res, v_cap, inst.m + 1, inst.edges, initial)


def _prune(store, j, i, rule, traced):
    if store.remove(j, i):
        if traced:
            logger.debug(f"prune task={j} station={i} rule={rule}")
        return True
    return False


def _timetable(model, store, traced):
    load = {}
    for j, d in store.dom.items():
        if len(d) == 1:
            i = next(iter(d))
            load[i] = load.get(i, 0) + model.res[j]
    if any(v > model.v_cap for v in load.values()):
        store.failed = True
        return False
    changed = False
    for j, d in store.dom.items():
        if len(d) < 2:
            continue
        for i in sorted(d):
            if load.get(i, 0) + model.res[j] > model.v_cap:
                changed |= _prune(store, j, i, "timetable", traced)
        if store.failed:
            break
    return changed


def _precedence(model, store, traced):
    changed = False
    for a, b in model.edges:
        if not store.dom[a] or not store.dom[b]:
            store.failed = True
            return changed
        low = min(store.dom[a])
        for i in sorted(v for v in store.dom[b] if v < low):
            changed |= _prune(store, b, i, "precedence", traced)
        if not store.dom[b]:
            return changed
        high = max(store.dom[b])
        for i in sorted(v for v in store.dom[a] if v > high):
            changed |= _prune(store, a, i, "precedence", traced)
        if store.failed:
            return changed
    return changed


def propagate(model, store):
    """
    Runs time-tabling and precedence bounds to a fixpoint. Returns False
    when some domain empties or a station is overloaded by fixed tasks.
    """
    if store.failed:
        return False
    traced = trace_enabled(logger)
    changed = True
    while changed and not store.failed:
        changed = _timetable(model, store, traced)
        if store.failed:
            break
        changed |= _precedence(model, store, traced)
    return not store.failed


@dataclass
class LabelResult:
    status: str  # found | infeasible | budget_exceeded
    assignment: Optional[Assignment] = None
    nodes: int = 0

    @property
    def found(self):
        return self.status == "found"


class _OutOfBudget(Exception):
    pass


def select_task(model, store):
    """
    Next task to label: smallest domain, then least remaining slack, then
    lowest index. The slack of j is the most room any station of its domain
    keeps after the fixed tasks and j itself are placed there. None when
    every real task is fixed.
    """
    load = {}
    for j, d in store.dom.items():
        if len(d) == 1:
            i = next(iter(d))
            load[i] = load.get(i, 0) + model.res[j]
    open_tasks = [j for j in range(1, model.n + 1) if len(store.dom[j]) > 1]
    if not open_tasks:
        return None

    def slack(j):
        return max(model.v_cap - load.get(i, 0) - model.res[j] for i in store.dom[j])

    return min(open_tasks, key=lambda j: (len(store.dom[j]), slack(j), j))


def label(model, store, node_limit=10_000, time_limit_ms=200.0):
    """
    Depth-first labeling in select_task order, stations in increasing order,
    propagation after every choice. time_limit_ms None means no deadline and
    0 is already out of budget. The store is left as it was on entry.
    """
    deadline = time.monotonic() + time_limit_ms / 1000.0 if time_limit_ms is not None else None
    start = store.checkpoint()
    nodes = 0
    real = range(1, model.n + 1)

    def search():
        nonlocal nodes
        nodes += 1
        if node_limit is not None and nodes > node_limit:
            raise _OutOfBudget()
        if deadline is not None and time.monotonic() >= deadline:
            raise _OutOfBudget()
        if not propagate(model, store):
            return None
        j = select_task(model, store)
        if j is None:
            return Assignment({j: store.value(j) for j in real})
        for i in sorted(store.dom[j]):
            mark = store.checkpoint()
            store.assign(j, i)
            found = search()
            if found is not None:
                return found
            store.restore(mark)
        return None

    try:
        assignment = search()
        status = "found" if assignment is not None else "infeasible"
    except _OutOfBudget:
        assignment, status = None, "budget_exceeded"
    finally:
        store.restore(start)
    return LabelResult(status, assignment, nodes)
