"""
Cooperation between the constraint model and the LP relaxation: shrinking the
station domains before the search, propagating at search nodes, and turning
fractional LP points into assignments by labeling on their support.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from salbhybrid.config import SolverConfig
from salbhybrid.cp import build_cp, label, propagate
from salbhybrid.cuts import CutPool, cutting_plane_loop, families_for
from salbhybrid.errors import InfeasibleError
from salbhybrid.ip_model import build_ip, station_index_objective, task_index_objective

logger = logging.getLogger(__name__)

SUPPORT_TOL = 1e-6
BOUND_GUARD = 1e-6


@dataclass
class ReductionReport:
    name: str
    n: int
    m: int
    cycle_time: Optional[int]
    initial_size: int
    after_cp: int
    after_lp: int
    fixed: Dict[int, int] = field(default_factory=dict)  # task -> x_ij fixed to 0 by LP bounds
    cp_ms: float = 0.0
    lp_ms: float = 0.0
    passes: int = 0
    lp_solves: int = 0
    cuts: int = 0
    timed_out: bool = False

    @property
    def total_ms(self):
        return self.cp_ms + self.lp_ms

    def problems(self):
        out = []
        if not self.initial_size >= self.after_cp >= self.after_lp >= self.n:
            out.append(f"sizes not monotone: {self.initial_size} {self.after_cp} {self.after_lp} (n={self.n})")
        return out


@dataclass
class Reduction:
    store: object
    report: ReductionReport
    pool: CutPool


def _cycle_time(inst):
    return inst.capacity[1] if len(set(inst.capacity.values())) == 1 else None


def reduce_problem(inst, cut_mode=None, cfg=None, pool=None, domains=None, deadline=None):
    """
    Step 1 propagates the constraint model without labeling. Step 2 bounds the
    station index of each task from below and above with the LP relaxation
    (plus cuts, no branching), drops the stations outside the bounds and
    propagates again, until a pass changes nothing or the pass cap is hit.
    Starting domains default to the eligible sets. Past the monotonic
    deadline the LP stage stops and the domains reached so far are kept;
    report.timed_out is set.
    """
    cfg = (cfg or SolverConfig()).with_overrides(cut_mode=cut_mode)
    pool = pool if pool is not None else CutPool()

    start = time.monotonic()
    cp_model = build_cp(inst, domains)
    store = cp_model.new_store()
    initial = store.size()
    if not propagate(cp_model, store):
        raise InfeasibleError("propagation emptied a domain", "cp")
    after_cp = store.size()
    cp_ms = (time.monotonic() - start) * 1000.0
    logger.info(f"{inst.name or 'instance'}: domain size {initial} -> {after_cp} after propagation")

    report = ReductionReport(inst.name, inst.n, inst.m, _cycle_time(inst), initial, after_cp, after_cp, cp_ms=cp_ms)
    if not cfg.reduce or cfg.reduction_passes == 0:
        return Reduction(store, report, pool)

    start = time.monotonic()
    model = build_ip(inst, store)
    for cut in pool:
        model.add_cut(cut)
    cut_mode = cfg.cut_mode
    families = families_for(cut_mode)
    cuts_before = len(pool)
    if cfg.reduction_cuts == "initial_lp" and families:
        # every family on the first LP only; the per-task LPs keep the standard ones
        model.apply_objective(station_index_objective(model))
        solution, _ = cutting_plane_loop(model, pool, cfg, families, deadline=deadline)
        if solution.status == "infeasible":
            raise InfeasibleError("LP relaxation infeasible", "lp")
        families = families_for("standard")

    for _ in range(cfg.reduction_passes):
        report.passes += 1
        changed = False
        for j in inst.tasks:
            if len(store.dom[j]) == 1:
                continue
            if _expired(deadline):
                report.timed_out = True
                break
            bounds = {}
            for direction in ("min", "max"):
                model.apply_objective(task_index_objective(model, j, direction))
                solution, _ = cutting_plane_loop(model, pool, cfg, families, deadline=deadline)
                report.lp_solves += 1
                if solution.status == "infeasible":
                    raise InfeasibleError(f"LP relaxation infeasible while bounding task {j}", "lp")
                if solution.optimal:
                    bounds[direction] = solution.objective_value
            if len(bounds) < 2:
                continue
            low = math.floor(bounds["min"] + BOUND_GUARD)
            high = math.ceil(bounds["max"] - BOUND_GUARD)
            dropped = [i for i in sorted(store.dom[j]) if i < low or i > high]
            if not dropped:
                continue
            changed = True
            for i in dropped:
                store.remove(j, i)
            if not propagate(cp_model, store):
                raise InfeasibleError(f"no station left for task {j}", "lp")
            _sync_fixings(model, store, report)
        if not changed or report.timed_out:
            break

    report.after_lp = store.size()
    report.lp_ms = (time.monotonic() - start) * 1000.0
    report.cuts = len(pool) - cuts_before
    logger.info(f"{inst.name or 'instance'}: domain size {after_cp} -> {report.after_lp} "
                f"after {report.lp_solves} LP solves ({cut_mode} cuts)")
    if report.timed_out:
        logger.warning(f"{inst.name or 'instance'}: time limit hit during reduction, keeping {report.after_lp} domain values")
    return Reduction(store, report, pool)


def _expired(deadline):
    return deadline is not None and time.monotonic() > deadline


def _sync_fixings(model, store, report):
    # back-propagation: removed domain values become x_ij = 0
    for (i, j), col in model.var_index.items():
        if i not in store.dom[j] and model.lp.upper[col] > 0.0:
            model.fix_zero(i, j)
            report.fixed[j] = report.fixed.get(j, 0) + 1


@dataclass
class NodeBounds:
    columns: List[Tuple[int, int]]
    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def from_model(cls, model):
        lower, upper = model.column_bounds()
        return cls(list(model.columns), lower, upper)

    def copy(self):
        return NodeBounds(self.columns, self.lower.copy(), self.upper.copy())

    def fixed(self, col, value):
        child = self.copy()
        child.lower[col] = value
        child.upper[col] = value
        return child

    def domains(self):
        """S_j = {i : d+_ij = 1}, or {i} when d-_ij = 1."""
        doms = {}
        forced = {}
        for col, (i, j) in enumerate(self.columns):
            doms.setdefault(j, set())
            if self.upper[col] > 0.5:
                doms[j].add(i)
            if self.lower[col] > 0.5:
                forced.setdefault(j, set()).add(i)
        for j, stations in forced.items():
            doms[j] = stations & doms[j] if len(stations) == 1 else set()
        return doms


def node_propagate(inst, bounds):
    """
    Propagates the constraint model on the node's domains and writes every
    removed value back as an upper bound of 0. Returns None on failure.
    """
    doms = bounds.domains()
    for j in inst.tasks:
        doms.setdefault(j, set())
    if any(not doms[j] for j in inst.tasks):
        return None
    cp_model = build_cp(inst, doms)
    store = cp_model.new_store()
    if not propagate(cp_model, store):
        return None
    tightened = bounds.copy()
    for col, (i, j) in enumerate(bounds.columns):
        if i not in store.dom[j]:
            tightened.upper[col] = 0.0
    return tightened


def round_solution(inst, point, node_limit=10_000, time_limit_ms=200.0):
    """
    Labels the constraint model restricted to the LP support
    S_j = {i : x*_ij > 1e-6}. Returns an assignment or None.
    """
    doms = {j: set() for j in inst.tasks}
    for (i, j), v in point.items():
        if v > SUPPORT_TOL:
            doms[j].add(i)
    if any(not s for s in doms.values()):
        return None
    cp_model = build_cp(inst, doms)
    result = label(cp_model, cp_model.new_store(), node_limit, time_limit_ms)
    return result.assignment if result.found else None
