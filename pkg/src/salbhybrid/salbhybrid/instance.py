"""Instances of the simple assembly line balancing problem.

Tasks and stations are numbered from 1. An instance knows its task times,
the stations each task may use, the station capacities and the immediate
precedence edges. Two text formats are read: the native one (eligible sets
and per-station capacities) and the precedence-list benchmark format, which
carries neither cycle time nor station count.
"""
import logging
import math
import time
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, FrozenSet, Iterator, List, Tuple

import networkx as nx

from salbhybrid.errors import BudgetExceeded, InfeasibleError, InstanceError

logger = logging.getLogger(__name__)

FORMATS = ("native", "precedence_list")


@dataclass(frozen=True)
class Instance:
    n: int
    m: int
    task_time: Dict[int, int]
    eligible: Dict[int, FrozenSet[int]]
    capacity: Dict[int, int]
    edges: Tuple[Tuple[int, int], ...]
    name: str = ""

    @property
    def tasks(self):
        return range(1, self.n + 1)

    @property
    def stations(self):
        return range(1, self.m + 1)

    @cached_property
    def graph(self):
        g = nx.DiGraph()
        g.add_nodes_from(self.tasks)
        g.add_edges_from(self.edges)
        return g

    @cached_property
    def topological_order(self) -> List[int]:
        return list(nx.lexicographical_topological_sort(self.graph))

    @cached_property
    def ancestors(self) -> Dict[int, FrozenSet[int]]:
        return {j: frozenset(nx.ancestors(self.graph, j)) for j in self.tasks}

    @cached_property
    def predecessors(self) -> Dict[int, Tuple[int, ...]]:
        return {j: tuple(sorted(self.graph.predecessors(j))) for j in self.tasks}

    @cached_property
    def station_tasks(self) -> Dict[int, Tuple[int, ...]]:
        # T_i = {j : i in S_j}
        return {i: tuple(j for j in self.tasks if i in self.eligible[j]) for i in self.stations}

    def precedes(self, a, b):
        """True when a precedes b transitively, or a == b."""
        return a == b or a in self.ancestors[b]

    def comparable(self, a, b):
        return self.precedes(a, b) or self.precedes(b, a)

    @property
    def total_time(self):
        return sum(self.task_time.values())

    @property
    def ct_max(self):
        return max(self.capacity.values())

    @property
    def cycle_time(self):
        """The common capacity; raises if the stations differ."""
        values = set(self.capacity.values())
        if len(values) != 1:
            raise InstanceError("station capacities are not uniform")
        return values.pop()

    @property
    def is_plain(self):
        # uniform capacity and every task allowed everywhere
        full = frozenset(self.stations)
        return len(set(self.capacity.values())) == 1 and all(self.eligible[j] == full for j in self.tasks)

    def lower_bound(self):
        return max(1, math.ceil(self.total_time / self.ct_max))

    def with_stations(self, m):
        """
        Same instance on m stations. Eligible sets are cut to 1..m; when m grows,
        tasks that could use every old station may use the new ones too, which
        needs a uniform capacity.
        """
        if m == self.m:
            return self
        if m < 1:
            raise InstanceError(f"station count must be positive, got {m}")
        old_full = frozenset(self.stations)
        new_full = frozenset(range(1, m + 1))
        if m > self.m:
            ct = self.cycle_time
            capacity = {i: self.capacity.get(i, ct) for i in range(1, m + 1)}
            eligible = {j: (new_full if s == old_full else s) for j, s in self.eligible.items()}
        else:
            capacity = {i: self.capacity[i] for i in range(1, m + 1)}
            eligible = {j: frozenset(i for i in s if i <= m) for j, s in self.eligible.items()}
        return Instance(self.n, m, dict(self.task_time), eligible, capacity, self.edges, self.name)

    def with_cycle_time(self, ct):
        return Instance(self.n, self.m, dict(self.task_time), dict(self.eligible),
                        {i: ct for i in self.stations}, self.edges, self.name)


@dataclass(frozen=True)
class Assignment:
    station_of: Dict[int, int]

    @property
    def highest_station(self):
        return max(self.station_of.values(), default=0)

    def loads(self, inst):
        loads = {i: 0 for i in inst.stations}
        for j, i in self.station_of.items():
            loads[i] = loads.get(i, 0) + inst.task_time[j]
        return loads

    def as_tuple(self):
        return tuple(self.station_of[j] for j in sorted(self.station_of))


@dataclass
class OptimumReport:
    stations_used: int
    assignment: Assignment
    node_count: int = 0
    cut_count: int = 0
    elapsed: float = 0.0  # seconds
    optimal: bool = True
    status: str = "optimal"


# -------------------
# Parsing
# -------------------

def _content_lines(text):
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield number, line


def _ints(line, number, what):
    try:
        return [int(tok) for tok in line.split()]
    except ValueError:
        raise InstanceError(f"expected integers for {what}, got {line!r}", number)


def _parse_native(text, name):
    lines = list(_content_lines(text))
    if not lines:
        raise InstanceError("empty instance", 1)
    cursor = iter(lines)

    def next_line(what):
        try:
            return next(cursor)
        except StopIteration:
            last = lines[-1][0] if lines else 1
            raise InstanceError(f"unexpected end of file while reading {what}", last)

    number, line = next_line("header")
    header = _ints(line, number, "header 'n m'")
    if len(header) != 2:
        raise InstanceError("header must be 'n m'", number)
    n, m = header
    if n < 1 or m < 1:
        raise InstanceError("n and m must be positive", number)

    number, line = next_line("capacities")
    caps = _ints(line, number, "capacities")
    if len(caps) != m:
        raise InstanceError(f"expected {m} capacities, got {len(caps)}", number)
    capacity = {i: caps[i - 1] for i in range(1, m + 1)}

    task_time, eligible = {}, {}
    for j in range(1, n + 1):
        number, line = next_line(f"task {j}")
        parts = line.split()
        if len(parts) < 2:
            raise InstanceError(f"task {j}: expected 't_j S'", number)
        try:
            task_time[j] = int(parts[0])
        except ValueError:
            raise InstanceError(f"task {j}: bad time {parts[0]!r}", number)
        if parts[1] == "*":
            if len(parts) != 2:
                raise InstanceError(f"task {j}: trailing tokens after '*'", number)
            eligible[j] = frozenset(range(1, m + 1))
        else:
            values = _ints(" ".join(parts[1:]), number, f"task {j} stations")
            k, stations = values[0], values[1:]
            if k != len(stations):
                raise InstanceError(f"task {j}: announced {k} stations, listed {len(stations)}", number)
            eligible[j] = frozenset(stations)

    number, line = next_line("edge count")
    count = _ints(line, number, "edge count")
    if len(count) != 1 or count[0] < 0:
        raise InstanceError("edge count must be a single non-negative integer", number)
    edges = []
    for _ in range(count[0]):
        number, line = next_line("edge")
        pair = _ints(line, number, "edge")
        if len(pair) != 2:
            raise InstanceError("edge must be 'j1 j2'", number)
        edges.append((pair[0], pair[1]))
    for number, line in cursor:
        raise InstanceError(f"unexpected trailing content {line!r}", number)
    return Instance(n, m, task_time, eligible, capacity, tuple(edges), name)


def _parse_precedence_list(text, name, cycle_time):
    lines = list(_content_lines(text))
    if not lines:
        raise InstanceError("empty instance", 1)
    number, line = lines[0]
    header = _ints(line, number, "task count")
    if len(header) != 1 or header[0] < 1:
        raise InstanceError("first line must be the task count", number)
    n = header[0]
    if len(lines) < n + 1:
        raise InstanceError(f"expected {n} task times", lines[-1][0])
    task_time = {}
    for j in range(1, n + 1):
        number, line = lines[j]
        value = _ints(line, number, f"time of task {j}")
        if len(value) != 1:
            raise InstanceError(f"time of task {j} must be a single integer", number)
        task_time[j] = value[0]
    edges = []
    terminated = False
    for number, line in lines[n + 1:]:
        if terminated:
            raise InstanceError(f"content after '-1,-1': {line!r}", number)
        parts = line.split(",")
        if len(parts) != 2:
            raise InstanceError(f"precedence must be 'a,b', got {line!r}", number)
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError:
            raise InstanceError(f"precedence must be 'a,b', got {line!r}", number)
        if (a, b) == (-1, -1):
            terminated = True
            continue
        edges.append((a, b))
    if not terminated:
        raise InstanceError("precedence list is not terminated by '-1,-1'", lines[-1][0])
    if cycle_time is None:
        raise InstanceError("precedence-list instances need a cycle time override")
    # provisional m = n; parse_instance shrinks it to the first-fit bound
    full = frozenset(range(1, n + 1))
    return Instance(n, n, task_time, {j: full for j in range(1, n + 1)},
                    {i: cycle_time for i in range(1, n + 1)}, tuple(edges), name)


def parse_instance(text, fmt="native", cycle_time=None, stations=None, name=""):
    """
    Parses an instance and validates it. cycle_time overrides every capacity,
    stations overrides the station count.
    """
    if fmt == "scholl":
        fmt = "precedence_list"
    if fmt not in FORMATS:
        raise InstanceError(f"unknown format {fmt!r}")
    if cycle_time is not None and cycle_time < 1:
        raise InstanceError(f"cycle time must be positive, got {cycle_time}")

    if fmt == "native":
        inst = _parse_native(text, name)
        if cycle_time is not None:
            inst = inst.with_cycle_time(cycle_time)
    else:
        inst = _parse_precedence_list(text, name, cycle_time)

    violations = validate(inst)
    if violations:
        raise InstanceError("; ".join(violations))

    if stations is not None:
        inst = inst.with_stations(stations)
    elif fmt == "precedence_list":
        inst = inst.with_stations(first_fit_upper_bound(inst))
    violations = validate(inst)
    if violations:
        raise InstanceError("; ".join(violations))
    logger.info(f"parsed {name or 'instance'}: n={inst.n} m={inst.m} edges={len(inst.edges)}")
    return inst


def read_instance(path, fmt="native", cycle_time=None, stations=None):
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    stem = str(path).replace("\\", "/").rsplit("/", 1)[-1].rsplit(".", 1)[0]
    return parse_instance(text, fmt, cycle_time=cycle_time, stations=stations, name=stem)


def serialize_instance(inst):
    """Native-format text of an instance."""
    out = [f"{inst.n} {inst.m}", " ".join(str(inst.capacity[i]) for i in inst.stations)]
    full = frozenset(inst.stations)
    for j in inst.tasks:
        stations = inst.eligible[j]
        if stations == full:
            out.append(f"{inst.task_time[j]} *")
        else:
            listed = " ".join(str(i) for i in sorted(stations))
            out.append(f"{inst.task_time[j]} {len(stations)} {listed}".rstrip())
    out.append(str(len(inst.edges)))
    out.extend(f"{a} {b}" for a, b in inst.edges)
    return "\n".join(out) + "\n"


# -------------------
# Validation and bounds
# -------------------

def validate(inst) -> List[str]:
    violations = []
    if inst.n < 1:
        violations.append("instance has no tasks")
    if inst.m < 1:
        violations.append("instance has no stations")
    if set(inst.capacity) != set(inst.stations):
        violations.append("capacities must be given for stations 1..m")
    for i, ct in inst.capacity.items():
        if ct < 1:
            violations.append(f"station {i} has capacity {ct} < 1")
    for j in inst.tasks:
        t = inst.task_time.get(j)
        if t is None:
            violations.append(f"task {j} has no time")
            continue
        if t < 1:
            violations.append(f"task {j} has time {t} < 1")
        stations = inst.eligible.get(j, frozenset())
        if not stations:
            violations.append(f"task {j} has empty eligible set")
            continue
        bad = [i for i in stations if not 1 <= i <= inst.m]
        if bad:
            violations.append(f"task {j} lists unknown stations {sorted(bad)}")
        if all(t > inst.capacity.get(i, 0) for i in stations):
            violations.append(f"task {j} fits no station")
    for a, b in inst.edges:
        if not (1 <= a <= inst.n and 1 <= b <= inst.n):
            violations.append(f"edge ({a},{b}) references an unknown task")
        elif a == b:
            violations.append(f"edge ({a},{b}) is a self loop")
    if not any("edge" in v for v in violations):
        g = nx.DiGraph()
        g.add_nodes_from(inst.tasks)
        g.add_edges_from(inst.edges)
        if not nx.is_directed_acyclic_graph(g):
            cycle = nx.find_cycle(g)
            violations.append("precedence cycle " + " -> ".join(str(a) for a, _ in cycle))
    return violations


def check_assignment(inst, assignment) -> List[str]:
    """Violated Assignment invariants, against the original capacities."""
    problems = []
    station_of = assignment.station_of
    for j in inst.tasks:
        if j not in station_of:
            problems.append(f"task {j} is unassigned")
        elif station_of[j] not in inst.eligible[j]:
            problems.append(f"task {j} sits on ineligible station {station_of[j]}")
    for i, load in assignment.loads(inst).items():
        if i not in inst.capacity:
            problems.append(f"station {i} does not exist")
        elif load > inst.capacity[i]:
            problems.append(f"station {i} load {load} exceeds {inst.capacity[i]}")
    for a, b in inst.edges:
        if a in station_of and b in station_of and station_of[a] > station_of[b]:
            problems.append(f"edge ({a},{b}) violated: {station_of[a]} > {station_of[b]}")
    return problems


def first_fit_assignment(inst, ct=None):
    """
    Tasks in topological order go to the lowest station that respects capacity
    and precedence. Stations are opened as needed, so the result may use more
    than inst.m stations. Eligible sets are ignored.
    """
    if ct is None:
        ct = inst.cycle_time
    if max(inst.task_time.values()) > ct:
        raise InstanceError(f"cycle time {ct} is below the largest task time")
    loads = []
    station_of = {}
    for j in inst.topological_order:
        earliest = max((station_of[p] for p in inst.predecessors[j]), default=1)
        k = earliest
        while True:
            while len(loads) < k:
                loads.append(0)
            if loads[k - 1] + inst.task_time[j] <= ct:
                break
            k += 1
        loads[k - 1] += inst.task_time[j]
        station_of[j] = k
    return Assignment(station_of)


def first_fit_upper_bound(inst):
    return first_fit_assignment(inst).highest_station


# -------------------
# Exhaustive oracle
# -------------------

class _StationSearch:
    """
    Station-by-station enumeration: station k is filled with tasks taken in
    topological order among those whose predecessors are already placed, then
    closed. Plain instances never close an empty station.
    """

    def __init__(self, inst, limit, deadline=None):
        self.inst = inst
        self.limit = limit
        self.deadline = deadline
        self.order = inst.topological_order
        self.plain = inst.is_plain
        self.nodes = 0
        self.best = None
        self.best_value = inst.m + 1
        self.station_of = {}
        self.remaining = inst.total_time

    def run(self):
        self._visit(1, 0, -1)
        return self.best

    def _lower_bound(self, k, load):
        # remaining tasks still need station k or later
        if self.plain:
            return k - 1 + math.ceil((load + self.remaining) / self.inst.capacity[1])
        return k

    def _visit(self, k, load, last_pos):
        self.nodes += 1
        if self.nodes > self.limit:
            raise BudgetExceeded(f"oracle exceeded {self.limit} nodes")
        if self.deadline is not None and self.nodes % 1024 == 0 and time.monotonic() > self.deadline:
            raise BudgetExceeded("oracle exceeded its time budget")
        inst = self.inst
        if len(self.station_of) == inst.n:
            value = max(self.station_of.values())
            if value < self.best_value:
                self.best_value = value
                self.best = Assignment(dict(self.station_of))
            return
        if self._lower_bound(k, load) >= self.best_value:
            return
        cap = inst.capacity[k]
        for pos in range(last_pos + 1, len(self.order)):
            j = self.order[pos]
            if j in self.station_of or k not in inst.eligible[j]:
                continue
            t = inst.task_time[j]
            if load + t > cap:
                continue
            if any(p not in self.station_of for p in inst.predecessors[j]):
                continue
            self.station_of[j] = k
            self.remaining -= t
            self._visit(k, load + t, pos)
            self.remaining += t
            del self.station_of[j]
        if k < inst.m and (load > 0 or not self.plain):
            self._visit(k + 1, 0, -1)


def oracle_optimum(inst, limit=2_000_000, time_budget=None):
    """
    Provably minimal highest station index by exhaustive search, within
    inst.m stations. Meant for small instances (n <= ~15).
    """
    start = time.monotonic()
    deadline = start + time_budget if time_budget else None
    search = _StationSearch(inst, limit, deadline)
    best = search.run()
    if best is None:
        raise InfeasibleError(f"no assignment on {inst.m} stations", "oracle")
    return OptimumReport(stations_used=best.highest_station, assignment=best,
                         node_count=search.nodes, elapsed=time.monotonic() - start)


def iter_feasible_assignments(inst) -> Iterator[Assignment]:
    """Every integral feasible assignment, task by task in topological order."""
    order = inst.topological_order
    loads = {i: 0 for i in inst.stations}
    station_of = {}

    def visit(pos):
        if pos == len(order):
            yield Assignment(dict(station_of))
            return
        j = order[pos]
        earliest = max((station_of[p] for p in inst.predecessors[j]), default=1)
        for i in sorted(inst.eligible[j]):
            if i < earliest or loads[i] + inst.task_time[j] > inst.capacity[i]:
                continue
            station_of[j] = i
            loads[i] += inst.task_time[j]
            yield from visit(pos + 1)
            loads[i] -= inst.task_time[j]
            del station_of[j]

    yield from visit(0)


def feasible_pairs(inst):
    """All (station, task) pairs used by at least one feasible assignment."""
    pairs = set()
    for a in iter_feasible_assignments(inst):
        pairs.update((i, j) for j, i in a.station_of.items())
    return pairs
