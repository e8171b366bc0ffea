import heapq
import itertools
import logging
import math
import time
from dataclasses import dataclass
from typing import Optional

from salbhybrid.config import SolverConfig
from salbhybrid.cp import build_cp, label
from salbhybrid.cuts import CutPool, cutting_plane_loop, families_for
from salbhybrid.errors import InfeasibleError
from salbhybrid.hybrid import NodeBounds, node_propagate, reduce_problem, round_solution
from salbhybrid.instance import OptimumReport, check_assignment, first_fit_assignment
from salbhybrid.ip_model import (build_ip, station_cost_objective, station_cost_vector,
                                 station_index_objective)
from salbhybrid.lp import LpBasis

logger = logging.getLogger(__name__)


@dataclass
class SearchNode:
    bounds: NodeBounds
    basis: Optional[LpBasis]
    depth: int
    bound: float  # LP value of the parent, a lower bound here


@dataclass
class BranchDecision:
    column: int
    pair: tuple
    value: float


@dataclass
class FixedMResult:
    status: str  # optimal | feasible | infeasible | limit
    assignment: Optional[object] = None
    objective: Optional[int] = None
    nodes: int = 0
    cuts: int = 0
    gap: Optional[float] = None

    @property
    def found(self):
        return self.assignment is not None


def select_branch(inst, columns, x, bounds=None, tol=1e-6):
    """
    Most fractional free column; ties go to the longer task, then to the
    lower station. None when x is integral on the free columns.
    """
    best, best_key = None, None
    for col, (i, j) in enumerate(columns):
        v = float(x[col])
        if min(v, 1.0 - v) <= tol:
            continue
        if bounds is not None and bounds.lower[col] == bounds.upper[col]:
            continue
        key = (abs(v - 0.5), -inst.task_time[j], i, j)
        if best_key is None or key < best_key:
            best, best_key = BranchDecision(col, (i, j), v), key
    return best


class _Limit(Exception):
    pass


class BranchAndCut:
    """
    Branch-and-cut over one station count. The model's domains are the reduced
    ones; pool cuts are added up front.
    """

    def __init__(self, inst, config, domains=None, pool=None, deadline=None):
        self.inst = inst
        self.config = config
        self.deadline = deadline
        self.model = build_ip(inst, domains)
        self.pool = pool if pool is not None else CutPool()
        for cut in self.pool:
            self.model.add_cut(cut)
        self.families = families_for(config.cut_mode)
        if config.objective == "station_cost":
            self.costs = station_cost_vector(inst.n, inst.m)
            self.model.apply_objective(station_cost_objective(self.model, self.costs))
            self.scale = float(self.costs[inst.m])
        else:
            self.costs = None
            self.model.apply_objective(station_index_objective(self.model))
            self.scale = 1.0
        self.incumbent = None
        self.incumbent_value = None
        self.incumbents = []
        self.nodes = 0
        self.cuts = 0

    def value_of(self, assignment):
        if self.costs is not None:
            return self.costs.value(assignment)
        return sum(assignment.station_of.values())

    def offer(self, assignment, source):
        """Stores the assignment if it is valid and better than the incumbent."""
        if assignment is None or check_assignment(self.inst, assignment):
            return False
        value = self.value_of(assignment)
        if self.incumbent_value is not None and value >= self.incumbent_value:
            return False
        self.incumbent, self.incumbent_value = assignment, value
        self.incumbents.append(assignment)
        logger.info(f"new incumbent from {source}: value {value}, "
                    f"highest station {assignment.highest_station}")
        return True

    def _prunable(self, bound):
        if self.incumbent_value is None or not math.isfinite(bound):
            return False
        # integer objective: the node must be able to reach incumbent - 1
        return bound * self.scale > self.incumbent_value - 1 + 1e-6 * self.scale

    def _check_limits(self):
        cfg = self.config
        if cfg.node_limit is not None and self.nodes >= cfg.node_limit:
            raise _Limit()
        if self.deadline is not None and time.monotonic() > self.deadline:
            raise _Limit()

    def _pop(self, open_nodes, heap):
        selection = self.config.node_selection
        depth_first = selection == "depth_first" or (selection == "depth_then_best" and self.incumbent is None)
        if not depth_first:
            for node in open_nodes:
                heapq.heappush(heap, (node.bound, -node.depth, next(self._seq), node))
            open_nodes.clear()
        if open_nodes:
            return open_nodes.pop()
        if heap:
            return heapq.heappop(heap)[3]
        return None

    def _solve_node(self, node):
        cfg = self.config
        model = self.model
        model.set_column_bounds(node.bounds.lower, node.bounds.upper)
        if node.basis is not None:
            model.lp.last_basis = node.basis
        at_root = self.nodes == 1
        if self.families and (at_root or cfg.cut_placement == "every_node"):
            solution, added = cutting_plane_loop(model, self.pool, cfg, self.families, deadline=self.deadline)
            self.cuts += added
        else:
            solution = model.lp.solve()
        return solution

    def solve(self, first_solution=False):
        cfg = self.config
        hybrid = cfg.mode == "hybrid"
        self._seq = itertools.count()
        root = SearchNode(NodeBounds.from_model(self.model), None, 0, -math.inf)
        open_nodes, heap = [root], []
        complete = True
        try:
            while open_nodes or heap:
                node = self._pop(open_nodes, heap)
                if node is None:
                    break
                if self._prunable(node.bound):
                    continue
                self._check_limits()
                self.nodes += 1

                if hybrid and cfg.node_propagation:
                    tightened = node_propagate(self.inst, node.bounds)
                    if tightened is None:
                        continue
                    node.bounds = tightened

                solution = self._solve_node(node)
                if solution.status == "infeasible":
                    continue
                if not solution.optimal:
                    complete = False
                    logger.warning(f"LP at depth {node.depth} hit its iteration cap; node dropped")
                    continue
                bound = max(solution.objective_value, node.bound)
                if self._prunable(bound):
                    continue

                x = solution.x
                if self.model.is_integral(x, cfg.integrality_tol):
                    self.offer(self.model.assignment_from(x), "LP")
                    if first_solution and self.incumbent is not None:
                        return self._result("feasible")
                    continue

                if hybrid and cfg.rounding:
                    rounded = round_solution(self.inst, self.model.point(x), cfg.rounding_nodes, cfg.rounding_ms)
                    if self.offer(rounded, "rounding") and first_solution:
                        return self._result("feasible")
                    if self._prunable(bound):
                        continue

                decision = select_branch(self.inst, self.model.columns, x, node.bounds, cfg.integrality_tol)
                if decision is None:
                    # fractional only on fixed columns
                    complete = False
                    continue
                down = SearchNode(node.bounds.fixed(decision.column, 0.0), solution.basis, node.depth + 1, bound)
                up = SearchNode(node.bounds.fixed(decision.column, 1.0), solution.basis, node.depth + 1, bound)
                # the up child is explored first under depth-first selection
                open_nodes.append(down)
                open_nodes.append(up)
        except _Limit:
            return self._result("limit", open_nodes, heap)
        if not complete:
            return self._result("limit")
        if self.incumbent is None:
            return self._result("infeasible")
        return self._result("optimal")

    def _result(self, status, open_nodes=(), heap=()):
        gap = None
        if status == "limit" and self.incumbent_value is not None:
            bounds = [n.bound for n in open_nodes] + [entry[3].bound for entry in heap]
            finite = [b * self.scale for b in bounds if math.isfinite(b)]
            if finite:
                gap = max(0.0, self.incumbent_value - min(finite))
        return FixedMResult(status, self.incumbent, self.incumbent_value, self.nodes, self.cuts, gap)


def _deadline(cfg):
    return time.monotonic() + cfg.time_limit if cfg.time_limit else None


def solve_fixed_m(inst, m, cfg=None, first_solution=False, pool=None, deadline=None):
    """
    Solves the instance restricted to stations 1..m: reduction, then
    branch-and-cut (modes hybrid and ip) or labeling alone (mode cp).
    """
    cfg = cfg or SolverConfig()
    inst_m = inst.with_stations(m)
    pool = pool if pool is not None else CutPool()
    deadline = deadline if deadline is not None else _deadline(cfg)
    domains = None
    try:
        if cfg.reduce:
            reduction = reduce_problem(inst_m, cfg.cut_mode, cfg, pool, deadline=deadline)
            domains = reduction.store
            if reduction.report.timed_out:
                return FixedMResult("limit")
    except InfeasibleError as e:
        logger.info(f"m={m}: {e}")
        return FixedMResult("infeasible")

    if cfg.mode == "cp":
        cp_model = build_cp(inst_m, domains)
        remaining = None if deadline is None else max(0.0, (deadline - time.monotonic()) * 1000.0)
        if remaining == 0.0:
            return FixedMResult("limit")
        result = label(cp_model, cp_model.new_store(), cfg.node_limit, remaining)
        if result.found:
            return FixedMResult("feasible", result.assignment, None, result.nodes)
        return FixedMResult("infeasible" if result.status == "infeasible" else "limit", nodes=result.nodes)

    try:
        search = BranchAndCut(inst_m, cfg, domains, pool, deadline)
    except InfeasibleError:
        return FixedMResult("infeasible")
    result = search.solve(first_solution=first_solution)
    logger.info(f"m={m}: {result.status} after {result.nodes} nodes, {result.cuts} cuts")
    return result


def minimize_stations(inst, cfg=None):
    """
    Smallest highest station index over all assignments on at most inst.m
    stations. Descends from an upper bound: each feasible solve at m yields a
    solution using h <= m stations and the next solve asks for h - 1; the
    first infeasible answer proves h optimal.
    """
    cfg = cfg or SolverConfig()
    started = time.monotonic()
    deadline = _deadline(cfg)
    pool = CutPool()
    nodes = 0
    cuts = 0

    if cfg.objective == "station_cost" and cfg.mode != "cp":
        result = solve_fixed_m(inst, inst.m, cfg, pool=pool, deadline=deadline)
        if result.status == "infeasible":
            raise InfeasibleError(f"no assignment on {inst.m} stations", "search")
        return _report(result.assignment, result.status == "optimal", result.status,
                       result.nodes, result.cuts, started)

    lower = inst.lower_bound()
    best = None
    m = inst.m
    if inst.is_plain:
        ff = first_fit_assignment(inst)
        if ff.highest_station <= inst.m and not check_assignment(inst, ff):
            best = ff
            m = ff.highest_station - 1
    status = "optimal"
    while m >= lower:
        result = solve_fixed_m(inst, m, cfg, first_solution=True, pool=pool, deadline=deadline)
        nodes += result.nodes
        cuts += result.cuts
        if result.status == "infeasible":
            break
        if not result.found:
            status = "limit"
            break
        best = result.assignment
        m = best.highest_station - 1
    if best is None:
        if status == "limit":
            return OptimumReport(0, None, nodes, cuts, time.monotonic() - started, False, "limit")
        raise InfeasibleError(f"no assignment on {inst.m} stations", "search")
    return _report(best, status == "optimal", status, nodes, cuts, started)


def _report(assignment, optimal, status, nodes, cuts, started):
    used = assignment.highest_station if assignment is not None else 0
    return OptimumReport(used, assignment, nodes, cuts, time.monotonic() - started, optimal, status)
