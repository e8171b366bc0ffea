"""
Separation of the knapsack and line-balancing inequality families, lifting of
separated cuts, and the cut pool.

Every cut is alpha.x <= beta over (station, task) pairs with integer data and
carries a certificate: the sets that make it valid. Separators are heuristics;
a cut is only emitted once its certificate checks out and the LP point
violates it by more than the tolerance.
"""
import itertools
import logging
import threading
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, FrozenSet, Optional, Tuple

from salbhybrid.lifting import lift_coefficient
from salbhybrid.log import trace_enabled

logger = logging.getLogger(__name__)

VIOLATION_TOL = 1e-4
SUPPORT_TOL = 1e-6


class CutKind(str, Enum):
    COVER = "cover"
    ONE_D_CONFIG = "one_d_config"
    MIC = "mic"
    FOUR_CYCLE = "four_cycle"
    EXTENDED_COVER = "extended_cover"
    HETERO_TWO_COVER = "hetero_two_cover"
    LIFTED = "lifted"


STANDARD_FAMILIES = (CutKind.COVER, CutKind.ONE_D_CONFIG)
ALL_FAMILIES = (CutKind.COVER, CutKind.ONE_D_CONFIG, CutKind.MIC, CutKind.FOUR_CYCLE,
                CutKind.EXTENDED_COVER, CutKind.HETERO_TWO_COVER)
LIFTABLE = (CutKind.COVER, CutKind.ONE_D_CONFIG, CutKind.FOUR_CYCLE)


def families_for(cut_mode):
    if cut_mode == "none":
        return ()
    if cut_mode == "standard":
        return STANDARD_FAMILIES
    if cut_mode == "all":
        return ALL_FAMILIES
    raise ValueError(f"unknown cut mode {cut_mode!r}")


@dataclass(frozen=True)
class CoverCertificate:
    """
    The sets behind a cut. `cover` is C (C_k for a 4-cycle), `second` is D
    (C_l for a 4-cycle), `fitting` is H of a (1,d)-configuration and
    `closure` the predecessor closure of a minimal induced cover.
    """
    kind: CutKind
    stations: Tuple[int, ...]
    cover: FrozenSet[int] = frozenset()
    second: FrozenSet[int] = frozenset()
    fitting: FrozenSet[int] = frozenset()
    closure: FrozenSet[int] = frozenset()
    z: Optional[int] = None
    d: Optional[int] = None
    u: Optional[int] = None
    v: Optional[int] = None


@dataclass(frozen=True)
class Cut:
    coeffs: Dict[Tuple[int, int], int]
    rhs: int
    kind: CutKind
    certificate: CoverCertificate
    lifted: Tuple[Tuple[int, int], ...] = field(default=())

    def lhs(self, point):
        return sum(a * point.get(p, 0.0) for p, a in self.coeffs.items())

    def violation(self, point):
        return self.lhs(point) - self.rhs

    def satisfied_by(self, assignment):
        value = sum(a for (i, j), a in self.coeffs.items() if assignment.station_of.get(j) == i)
        return value <= self.rhs

    def key(self):
        return (self.kind.value, tuple(sorted(self.coeffs.items())), self.rhs)

    def stations(self):
        return sorted({i for i, _ in self.coeffs})

    def __str__(self):
        terms = " + ".join(f"{a}*x[{i},{j}]" for (i, j), a in sorted(self.coeffs.items()))
        return f"{self.kind.value}: {terms} <= {self.rhs}"


# -------------------
# Knapsack helpers
# -------------------

def min_weight_cover(items, threshold):
    """
    items: (task, time, weight). Returns the task set of least total weight
    whose times sum to at least threshold, or None. Exact DP over the sum
    capped at threshold.
    """
    if threshold <= 0:
        return frozenset()
    inf = float("inf")
    best = [inf] * (threshold + 1)
    best[0] = 0.0
    layers = []
    for task, t, w in items:
        w = max(0.0, w)
        nxt = list(best)
        parent = [-1] * (threshold + 1)
        for s in range(threshold + 1):
            if best[s] == inf:
                continue
            target = min(threshold, s + t)
            if best[s] + w < nxt[target] - 1e-12:
                nxt[target] = best[s] + w
                parent[target] = s
        layers.append((task, parent))
        best = nxt
    if best[threshold] == inf:
        return None
    chosen = []
    s = threshold
    for task, parent in reversed(layers):
        if parent[s] >= 0:
            chosen.append(task)
            s = parent[s]
    return frozenset(chosen)


def _minimalize(members, times, threshold, x):
    """Drops members, smallest x first, while the time sum stays >= threshold."""
    members = set(members)
    total = sum(times[j] for j in members)
    for j in sorted(members, key=lambda j: (x.get(j, 0.0), -j)):
        if total - times[j] >= threshold:
            members.discard(j)
            total -= times[j]
    return frozenset(members)


def _exact_cover(times, capacity, xk, exclude=()):
    items = [(j, times[j], 1.0 - xk.get(j, 0.0)) for j in sorted(times) if j not in exclude]
    cover = min_weight_cover(items, capacity + 1)
    if cover is None:
        return None
    return _minimalize(cover, times, capacity + 1, xk)


# -------------------
# Single-knapsack families
# -------------------

def separate_cover(k, times, capacity, xk, tol=VIOLATION_TOL):
    """Most violated minimal cover of knapsack k, found exactly."""
    if sum(times.values()) <= capacity:
        return []
    cover = _exact_cover(times, capacity, xk)
    if not cover:
        return []
    cut = Cut({(k, j): 1 for j in cover}, len(cover) - 1, CutKind.COVER,
              CoverCertificate(CutKind.COVER, (k,), cover=cover))
    return [cut] if sum(xk.get(j, 0.0) for j in cover) > len(cover) - 1 + tol else []


def one_d_degree(fitting_times, t_z, capacity):
    """
    Smallest d >= 2 such that every d-subset of H plus z overflows the
    capacity while every (d-1)-subset plus z fits, or None.
    """
    ordered = sorted(fitting_times)
    for d in range(2, len(ordered) + 1):
        smallest = sum(ordered[:d])
        largest = sum(ordered[len(ordered) - d + 1:])
        if smallest + t_z > capacity and largest + t_z <= capacity:
            return d
    return None


def separate_one_d_config(k, times, capacity, xk, tol=VIOLATION_TOL):
    cuts = []
    fractional = [z for z in sorted(times) if tol < xk.get(z, 0.0) < 1.0 - tol]
    for z in sorted(fractional, key=lambda z: (-xk[z], z)):
        t_z = times[z]
        candidates = sorted((j for j in times if j != z and times[j] + t_z <= capacity),
                            key=lambda j: (-xk.get(j, 0.0), j))
        fitting, load = [], 0
        for j in candidates:
            if load + times[j] <= capacity:
                fitting.append(j)
                load += times[j]
        if len(fitting) < 2:
            continue
        d = one_d_degree([times[j] for j in fitting], t_z, capacity)
        if d is None:
            continue
        h = frozenset(fitting)
        coeffs = {(k, j): 1 for j in h}
        coeffs[(k, z)] = len(h) - d + 1
        cut = Cut(coeffs, len(h), CutKind.ONE_D_CONFIG,
                  CoverCertificate(CutKind.ONE_D_CONFIG, (k,), fitting=h, z=z, d=d))
        if cut.violation({(k, j): xk.get(j, 0.0) for j in times}) > tol:
            cuts.append(cut)
    return cuts


# -------------------
# Line-balancing families
# -------------------

def predecessor_closure(inst, tasks):
    closure = set(tasks)
    for j in tasks:
        closure |= inst.ancestors[j]
    return frozenset(closure)


def _mic_holds(inst, members, capacity):
    return sum(inst.task_time[j] for j in predecessor_closure(inst, members)) > capacity


def separate_mic(inst, k, point, tol=VIOLATION_TOL, max_candidates=5):
    """
    Minimal induced covers of station k: pairwise incomparable tasks whose
    predecessor closure overflows CT_k. Earlier-station placements of the
    closure enter with coefficient -1.
    """
    capacity = inst.capacity[k]
    xk = {j: point.get((k, j), 0.0) for j in inst.station_tasks[k]}
    candidates = sorted((j for j, v in xk.items() if v > SUPPORT_TOL), key=lambda j: (-xk[j], j))
    cuts, seen = [], set()
    for seed in candidates[:max_candidates]:
        members = [seed]
        if not _mic_holds(inst, members, capacity):
            for j in candidates:
                if j in members or any(inst.comparable(j, c) for c in members):
                    continue
                members.append(j)
                if _mic_holds(inst, members, capacity):
                    break
        if not _mic_holds(inst, members, capacity):
            continue
        members = set(members)
        for j in sorted(members, key=lambda j: (xk[j], -j)):
            if len(members) > 1 and _mic_holds(inst, members - {j}, capacity):
                members.discard(j)
        members = frozenset(members)
        if members in seen:
            continue
        seen.add(members)
        closure = predecessor_closure(inst, members)
        coeffs = {(k, j): 1 for j in members}
        for j in closure - members:
            for i in inst.eligible[j]:
                if i < k:
                    coeffs[(i, j)] = -1
        cut = Cut(coeffs, len(members) - 1, CutKind.MIC,
                  CoverCertificate(CutKind.MIC, (k,), cover=members, closure=closure))
        if cut.violation(point) > tol:
            cuts.append(cut)
    return cuts


def _station_items(inst, point, i, exclude=()):
    return {j: inst.task_time[j] for j in inst.station_tasks[i] if j not in exclude}, \
        {j: point.get((i, j), 0.0) for j in inst.station_tasks[i]}


def _cover_part(times, x, threshold, exclude):
    items = [(j, times[j], 1.0 - x.get(j, 0.0)) for j in sorted(times) if j not in exclude]
    part = min_weight_cover(items, threshold)
    if part is None:
        return None
    return _minimalize(part, times, threshold, x)


def separate_four_cycle(inst, point, tol=VIOLATION_TOL, lift_targets=0, limit=None, max_candidates=None):
    """
    Two stations k, l sharing tasks u, v (t_u <= t_v) with C_k a cover of k
    holding u and v, C_l a cover of l holding u but not v, and C_k, C_l
    meeting in u only. The inequality
        sum_{C_k} x_k + sum_{C_l} x_l + x_lv <= |C_k| + |C_l| - 2
    holds for every feasible assignment.

    Candidates (k, l, u, v) are tried in decreasing x_ku + x_lu + x_kv + x_lv,
    at most max_candidates of them.
    """
    candidates = []
    for k, l in itertools.permutations(inst.stations, 2):
        shared = sorted(set(inst.station_tasks[k]) & set(inst.station_tasks[l]))
        live = [j for j in shared
                if point.get((k, j), 0.0) > SUPPORT_TOL and point.get((l, j), 0.0) > SUPPORT_TOL]
        for u, v in itertools.permutations(live, 2):
            if (inst.task_time[u], u) > (inst.task_time[v], v):
                continue
            score = point[(k, u)] + point[(l, u)] + point[(k, v)] + point[(l, v)]
            candidates.append((-score, k, l, u, v))
    candidates.sort()
    if max_candidates is not None:
        candidates = candidates[:max_candidates]

    items = {}
    cuts = []
    for _, k, l, u, v in candidates:
        cut = _four_cycle_cut(inst, point, k, l, u, v, items)
        if cut is None or cut.violation(point) <= tol:
            continue
        if lift_targets:
            cut = lift_cut(inst, cut, point, lift_targets)
        cuts.append(cut)
        if limit is not None and len(cuts) >= limit:
            break
    return cuts


def _four_cycle_cut(inst, point, k, l, u, v, items=None):
    items = {} if items is None else items
    for i in (k, l):
        if i not in items:
            items[i] = _station_items(inst, point, i)
    t_u, t_v = inst.task_time[u], inst.task_time[v]
    times_k, x_k = items[k]
    times_l, x_l = items[l]
    part_k = _cover_part(times_k, x_k, inst.capacity[k] - t_u - t_v + 1, exclude={u, v})
    if part_k is None:
        return None
    c_k = part_k | {u, v}
    part_l = _cover_part(times_l, x_l, inst.capacity[l] - t_u + 1, exclude=c_k)
    if part_l is None:
        return None
    c_l = part_l | {u}
    cert = CoverCertificate(CutKind.FOUR_CYCLE, (k, l), cover=frozenset(c_k), second=frozenset(c_l), u=u, v=v)
    if verify_four_cycle(inst, cert):
        return None
    coeffs = {(k, j): 1 for j in c_k}
    for j in c_l:
        coeffs[(l, j)] = 1
    coeffs[(l, v)] = 1
    return Cut(coeffs, len(c_k) + len(c_l) - 2, CutKind.FOUR_CYCLE, cert)


def separate_extended_cover(inst, point, tol=VIOLATION_TOL, limit=None):
    """
    C a cover of station k, D drawn from station l so that D plus any single
    member of C overflows CT_l:
        sum_C (x_k + x_l) + sum_D x_l <= |C| + |D| - 1
    """
    if inst.m < 2:
        return []
    cuts = []
    for k in inst.stations:
        times_k, x_k = _station_items(inst, point, k)
        if sum(times_k.values()) <= inst.capacity[k]:
            continue
        cover = _exact_cover(times_k, inst.capacity[k], x_k)
        if not cover:
            continue
        smallest = min(inst.task_time[j] for j in cover)
        for l in inst.stations:
            if l == k:
                continue
            cap_l = inst.capacity[l]
            x_l = {j: point.get((l, j), 0.0) for j in inst.station_tasks[l]}
            pool = sorted((j for j in inst.station_tasks[l] if j not in cover and x_l[j] > SUPPORT_TOL),
                          key=lambda j: (-x_l[j], j))
            extra, load = [], 0
            for j in pool:
                if load + smallest > cap_l:
                    break
                extra.append(j)
                load += inst.task_time[j]
            if load + smallest <= cap_l:
                continue
            extra = set(extra)
            for j in sorted(extra, key=lambda j: (x_l[j], -j)):
                if load - inst.task_time[j] + smallest > cap_l:
                    extra.discard(j)
                    load -= inst.task_time[j]
            extra = frozenset(extra)
            coeffs = {}
            for j in cover:
                coeffs[(k, j)] = 1
                coeffs[(l, j)] = 1
            for j in extra:
                coeffs[(l, j)] = 1
            cut = Cut(coeffs, len(cover) + len(extra) - 1, CutKind.EXTENDED_COVER,
                      CoverCertificate(CutKind.EXTENDED_COVER, (k, l), cover=cover, second=extra))
            if cut.violation(point) > tol:
                cuts.append(cut)
                if limit is not None and len(cuts) >= limit:
                    return cuts
    return cuts


def _all_c_subsets_cover(times, size, capacity):
    # every size-subset overflows iff the size smallest do
    return len(times) >= size and sum(sorted(times)[:size]) > capacity


def separate_hetero_two_cover(inst, point, tol=VIOLATION_TOL, limit=None):
    """
    C a cover of station k such that every |C|-subset of C u D is a cover of
    station l:
        sum_C x_k + (|C| - 1) * sum_{C u D} x_l <= |C| (|C| - 1)
    """
    if inst.m < 2:
        return []
    cuts = []
    for k in inst.stations:
        times_k, x_k = _station_items(inst, point, k)
        if sum(times_k.values()) <= inst.capacity[k]:
            continue
        cover = _exact_cover(times_k, inst.capacity[k], x_k)
        if not cover or len(cover) < 2:
            continue
        size = len(cover)
        cover_times = [inst.task_time[j] for j in cover]
        for l in inst.stations:
            if l == k or not _all_c_subsets_cover(cover_times, size, inst.capacity[l]):
                continue
            x_l = {j: point.get((l, j), 0.0) for j in inst.station_tasks[l]}
            extra = []
            for j in sorted((j for j in inst.station_tasks[l] if j not in cover and x_l[j] > SUPPORT_TOL),
                            key=lambda j: (-x_l[j], j)):
                trial = cover_times + [inst.task_time[i] for i in extra] + [inst.task_time[j]]
                if _all_c_subsets_cover(trial, size, inst.capacity[l]):
                    extra.append(j)
            extra = frozenset(extra)
            coeffs = {(k, j): 1 for j in cover}
            for j in cover | extra:
                coeffs[(l, j)] = size - 1
            cut = Cut(coeffs, size * (size - 1), CutKind.HETERO_TWO_COVER,
                      CoverCertificate(CutKind.HETERO_TWO_COVER, (k, l), cover=cover, second=extra))
            if cut.violation(point) > tol:
                cuts.append(cut)
                if limit is not None and len(cuts) >= limit:
                    return cuts
    return cuts


# -------------------
# Certificates
# -------------------

def verify_four_cycle(inst, cert):
    problems = []
    k, l = cert.stations
    c_k, c_l, u, v = cert.cover, cert.second, cert.u, cert.v
    if not (u in c_k and v in c_k):
        problems.append("u and v must both lie in C_k")
    if not (u in c_l and v not in c_l):
        problems.append("u must lie in C_l and v must not")
    if c_k & c_l != {u}:
        problems.append("C_k and C_l must meet in u only")
    if inst.task_time[u] > inst.task_time[v]:
        problems.append("t_u must not exceed t_v")
    if sum(inst.task_time[j] for j in c_k) <= inst.capacity[k]:
        problems.append(f"C_k is no cover of station {k}")
    if sum(inst.task_time[j] for j in c_l) <= inst.capacity[l]:
        problems.append(f"C_l is no cover of station {l}")
    return problems


def verify_certificate(inst, cut):
    """Violated defining conditions of the cut's family; empty when valid."""
    cert = cut.certificate
    t = inst.task_time
    problems = []
    if cert.kind == CutKind.COVER:
        k, = cert.stations
        if sum(t[j] for j in cert.cover) <= inst.capacity[k]:
            problems.append("cover does not overflow the station")
    elif cert.kind == CutKind.ONE_D_CONFIG:
        k, = cert.stations
        if sum(t[j] for j in cert.fitting) > inst.capacity[k]:
            problems.append("H does not fit the station")
        if one_d_degree([t[j] for j in cert.fitting], t[cert.z], inst.capacity[k]) != cert.d:
            problems.append("d does not make every d-subset with z a minimal cover")
    elif cert.kind == CutKind.MIC:
        k, = cert.stations
        for a, b in itertools.combinations(sorted(cert.cover), 2):
            if inst.comparable(a, b):
                problems.append(f"tasks {a} and {b} are comparable")
        if predecessor_closure(inst, cert.cover) != cert.closure:
            problems.append("closure is not the predecessor closure of C")
        if sum(t[j] for j in cert.closure) <= inst.capacity[k]:
            problems.append("closure does not overflow the station")
    elif cert.kind == CutKind.FOUR_CYCLE:
        problems.extend(verify_four_cycle(inst, cert))
    elif cert.kind == CutKind.EXTENDED_COVER:
        k, l = cert.stations
        if sum(t[j] for j in cert.cover) <= inst.capacity[k]:
            problems.append("C is no cover of station k")
        load = sum(t[j] for j in cert.second)
        if any(load + t[i] <= inst.capacity[l] for i in cert.cover):
            problems.append("D plus some member of C fits station l")
    elif cert.kind == CutKind.HETERO_TWO_COVER:
        k, l = cert.stations
        if sum(t[j] for j in cert.cover) <= inst.capacity[k]:
            problems.append("C is no cover of station k")
        times = [t[j] for j in cert.cover | cert.second]
        if not _all_c_subsets_cover(times, len(cert.cover), inst.capacity[l]):
            problems.append("some |C|-subset of C u D fits station l")
    return problems


# -------------------
# Lifting
# -------------------

def lift_inequality(cut, target, inst, exhaustive=False):
    """Adds x_target with coefficient beta - gamma; unchanged if that is 0."""
    if target in cut.coeffs:
        return cut
    alpha, _ = lift_coefficient(inst, cut.coeffs, cut.rhs, target, exhaustive=exhaustive)
    if alpha <= 0:
        return cut
    coeffs = dict(cut.coeffs)
    coeffs[target] = alpha
    return replace(cut, coeffs=coeffs, kind=CutKind.LIFTED, lifted=cut.lifted + (target,))


def lift_cut(inst, cut, point, limit):
    """Lifts the cut's stations' positive-valued variables one at a time."""
    stations = set(cut.stations())
    targets = sorted((p for p, v in point.items()
                      if p[0] in stations and p not in cut.coeffs and v > SUPPORT_TOL),
                     key=lambda p: (-point[p], p[1], p[0]))
    for target in targets[:limit]:
        cut = lift_inequality(cut, target, inst)
    return cut


# -------------------
# Pool and loop
# -------------------

class CutPool:
    """Deduplicated store of globally valid cuts."""

    def __init__(self):
        self._cuts = {}
        self._lock = threading.Lock()

    def add(self, cut):
        key = cut.key()
        with self._lock:
            if key in self._cuts:
                return False
            self._cuts[key] = cut
            return True

    def __contains__(self, cut):
        return cut.key() in self._cuts

    def __len__(self):
        return len(self._cuts)

    def __iter__(self):
        return iter(list(self._cuts.values()))

    def count_by_kind(self):
        counts = {}
        for cut in self._cuts.values():
            name = cut.certificate.kind.value
            counts[name] = counts.get(name, 0) + 1
        return counts


def separate(model, x, families, cfg):
    """All violated cuts of the requested families at LP point x, most violated first."""
    inst = model.inst
    point = model.point(x)
    tol = cfg.violation_tol
    found = []
    for k in inst.stations:
        times = {j: inst.task_time[j] for j in inst.station_tasks[k] if (k, j) in model.var_index}
        xk = {j: point[(k, j)] for j in times}
        if CutKind.COVER in families:
            found.extend(separate_cover(k, times, inst.capacity[k], xk, tol))
        if CutKind.ONE_D_CONFIG in families:
            found.extend(separate_one_d_config(k, times, inst.capacity[k], xk, tol))
        if CutKind.MIC in families:
            found.extend(separate_mic(inst, k, point, tol, cfg.mic_candidates))
    found = [lift_cut(inst, c, point, cfg.lift_targets) if c.kind in LIFTABLE and cfg.lift_targets else c
             for c in found]
    if CutKind.FOUR_CYCLE in families:
        found.extend(separate_four_cycle(inst, point, tol, cfg.lift_targets, limit=cfg.cuts_per_round,
                                         max_candidates=cfg.four_cycle_candidates))
    if CutKind.EXTENDED_COVER in families:
        found.extend(separate_extended_cover(inst, point, tol, limit=cfg.cuts_per_round))
    if CutKind.HETERO_TWO_COVER in families:
        found.extend(separate_hetero_two_cover(inst, point, tol, limit=cfg.cuts_per_round))
    found.sort(key=lambda c: -c.violation(point))
    return found


def cutting_plane_loop(model, pool, cfg, families, rounds=None, deadline=None):
    """
    Solve, separate, add, re-solve until no violated cut is found, the LP
    turns infeasible or integral, the round and cut caps are reached or the
    monotonic deadline has passed.
    Returns (last LP solution, number of cuts added to the model).
    """
    solution = model.lp.solve()
    rounds = cfg.cut_rounds if rounds is None else rounds
    if not families or not solution.optimal:
        return solution, 0
    added = 0
    for _ in range(rounds):
        if model.is_integral(solution.x, cfg.integrality_tol) or added >= cfg.cuts_per_node:
            break
        if deadline is not None and time.monotonic() > deadline:
            break
        fresh = 0
        for cut in separate(model, solution.x, families, cfg):
            if fresh >= cfg.cuts_per_round or added >= cfg.cuts_per_node:
                break
            if model.add_cut(cut) is None:
                continue
            pool.add(cut)
            fresh += 1
            added += 1
            if trace_enabled(logger):
                logger.debug(f"cut {cut}")
        if not fresh:
            break
        solution = model.lp.solve()
        if not solution.optimal:
            break
    return solution, added
