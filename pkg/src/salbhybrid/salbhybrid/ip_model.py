import logging
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from salbhybrid.errors import InfeasibleError, SalbError
from salbhybrid.instance import Assignment
from salbhybrid.lp import LpProblem

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ObjectiveSpec:
    coeffs: Dict[int, float]  # LP column -> coefficient
    sense: str = "min"


@dataclass(frozen=True)
class CostScheme:
    """Station costs c_1..c_m with n * c_i < c_(i+1), exact integers."""
    costs: Tuple[int, ...]

    def __getitem__(self, i):
        return self.costs[i - 1]

    def value(self, assignment):
        return sum(self[i] for i in assignment.station_of.values())


def station_cost_vector(n, m):
    if n < 1 or m < 1:
        raise SalbError(f"cost scheme needs n >= 1 and m >= 1, got n={n} m={m}")
    costs = [1]
    for _ in range(m - 1):
        costs.append(n * costs[-1] + 1)
    return CostScheme(tuple(costs))


def _task_domains(inst, domains):
    if domains is None:
        return {j: frozenset(inst.eligible[j]) for j in inst.tasks}
    if hasattr(domains, "task_domains"):
        domains = domains.task_domains()
    return {j: frozenset(domains[j]) for j in inst.tasks}


class IpModel:
    """
    The 0-1 program over the admissible pairs A = {(i, j) : i in S_j}:
    one assignment row per task, one knapsack row per station and one
    precedence row per (station k, edge) pair, all held in an LpProblem.
    """

    def __init__(self, inst, domains):
        self.inst = inst
        self.domains = domains
        self.lp = LpProblem()
        self.var_index: Dict[Tuple[int, int], int] = {}
        self.columns = []
        for j in inst.tasks:
            for i in sorted(domains[j]):
                self.var_index[(i, j)] = self.lp.add_column(0.0, 1.0)
                self.columns.append((i, j))

        self.sos_rows = {}
        for j in inst.tasks:
            coeffs = {self.var_index[(i, j)]: 1.0 for i in sorted(domains[j])}
            self.sos_rows[j] = self.lp.add_row(coeffs, "=", 1.0)

        self.knapsack_rows = {}
        for i in inst.stations:
            coeffs = {self.var_index[(i, j)]: inst.task_time[j]
                      for j in inst.station_tasks[i] if (i, j) in self.var_index}
            self.knapsack_rows[i] = self.lp.add_row(coeffs, "<=", inst.capacity[i])

        self.precedence_rows = {}
        for k in inst.stations:
            for a, b in inst.edges:
                coeffs = {}
                for i in range(1, k + 1):
                    if (i, a) in self.var_index:
                        coeffs[self.var_index[(i, a)]] = coeffs.get(self.var_index[(i, a)], 0.0) + 1.0
                    if (i, b) in self.var_index:
                        coeffs[self.var_index[(i, b)]] = coeffs.get(self.var_index[(i, b)], 0.0) - 1.0
                self.precedence_rows[(k, a, b)] = self.lp.add_row(coeffs, ">=", 0.0)

        self.cut_rows = []  # (row id, Cut)
        self.cut_keys = set()

    @property
    def num_columns(self):
        return len(self.columns)

    def column(self, i, j):
        return self.var_index.get((i, j))

    def apply_objective(self, spec):
        self.lp.set_objective(spec.coeffs, spec.sense)

    def fix_zero(self, i, j):
        col = self.var_index.get((i, j))
        if col is not None:
            self.lp.set_bounds(col, 0.0, 0.0)

    def set_column_bounds(self, lower, upper):
        for col in range(self.num_columns):
            self.lp.set_bounds(col, float(lower[col]), float(upper[col]))

    def column_bounds(self):
        return np.array(self.lp.lower), np.array(self.lp.upper)

    def add_cut(self, cut):
        """Adds the cut as a row; returns None if the model already has it."""
        key = cut.key()
        if key in self.cut_keys:
            return None
        self.cut_keys.add(key)
        # pairs outside A are zero in every point of this model
        coeffs = {self.var_index[p]: a for p, a in cut.coeffs.items() if p in self.var_index}
        row = self.lp.add_row(coeffs, "<=", cut.rhs)
        self.cut_rows.append((row, cut))
        return row

    def point(self, x):
        """LP values keyed by (station, task)."""
        return {p: float(x[col]) for p, col in self.var_index.items()}

    def is_integral(self, x, tol=1e-6):
        x = np.asarray(x)
        return bool(np.all(np.minimum(np.abs(x), np.abs(1.0 - x)) <= tol))

    def assignment_from(self, x):
        station_of = {}
        for (i, j), col in self.var_index.items():
            if x[col] > 0.5:
                station_of[j] = i
        return Assignment(station_of)


def build_ip(inst, domains=None):
    domains = _task_domains(inst, domains)
    for j in inst.tasks:
        if not domains[j]:
            raise InfeasibleError(f"task {j} has an empty domain", "lp")
        if not domains[j] <= inst.eligible[j]:
            raise SalbError(f"domain of task {j} leaves its eligible set")
    model = IpModel(inst, domains)
    logger.debug(f"ip model: {model.num_columns} columns, {model.lp.num_rows} rows")
    return model


def station_index_objective(model):
    """Minimise sum of i * x_ij, the default inner objective."""
    return ObjectiveSpec({col: float(i) for (i, _), col in model.var_index.items()}, "min")


def task_index_objective(model, j, direction="min"):
    if direction not in ("min", "max"):
        raise SalbError(f"unknown direction {direction!r}")
    coeffs = {col: float(i) for (i, task), col in model.var_index.items() if task == j}
    return ObjectiveSpec(coeffs, direction)


def station_cost_objective(model, costs=None):
    """
    Cost c_i on every x_ij, scaled by 1/c_m so the LP sees values in (0, 1].
    Incumbents are still compared with the exact integers.
    """
    if costs is None:
        costs = station_cost_vector(model.inst.n, model.inst.m)
    top = costs[model.inst.m]
    return ObjectiveSpec({col: costs[i] / top for (i, _), col in model.var_index.items()}, "min")
