"""
Bounded-variable primal simplex on dense numpy arrays.

Every row a.x (sense) b gets a slack s with a.x + s = b, so the working matrix
is [A | I]. Slack bounds encode the sense: "<=" -> [0, inf), ">=" -> (-inf, 0],
"=" -> [0, 0]. Phase 1 minimises the sum of bound violations of the basic
variables starting from whatever basis is installed, which is what makes warm
starts after cuts and bound changes cheap.
"""
import logging
from dataclasses import dataclass
from typing import Dict, FrozenSet, Optional, Tuple

import numpy as np

from salbhybrid.errors import LpError, LpNumericalError

logger = logging.getLogger(__name__)

INF = float("inf")
PRIMAL_TOL = 1e-7
DUAL_TOL = 1e-7
PIVOT_TOL = 1e-9
ZERO_STEP = 1e-12
REFACTOR_EVERY = 100
BLAND_AFTER = 1000

SENSES = ("<=", ">=", "=")


@dataclass(frozen=True)
class LpBasis:
    # structural column j is coded j, the slack of row r is coded -(r + 1)
    basic: Tuple[int, ...]
    at_upper: FrozenSet[int]


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | iteration_limit
    x: np.ndarray
    objective_value: float
    basis: Optional[LpBasis] = None
    iterations: int = 0

    @property
    def optimal(self):
        return self.status == "optimal"


class LpProblem:
    def __init__(self):
        self.lower = []
        self.upper = []
        self.rows = []  # (coeffs, sense, rhs)
        self.objective: Dict[int, float] = {}
        self.sense = "min"
        self.last_basis: Optional[LpBasis] = None
        self._dense = None

    @property
    def num_columns(self):
        return len(self.lower)

    @property
    def num_rows(self):
        return len(self.rows)

    def add_column(self, lo=0.0, hi=1.0):
        if lo > hi:
            raise LpError(f"column bounds {lo} > {hi}")
        self.lower.append(float(lo))
        self.upper.append(float(hi))
        self._dense = None
        return len(self.lower) - 1

    def add_row(self, coeffs, sense, rhs):
        """Appends a row sum(coeffs[j] * x_j) (sense) rhs and returns its id."""
        if sense not in SENSES:
            raise LpError(f"unknown row sense {sense!r}")
        clean = {}
        for j, a in coeffs.items():
            if not 0 <= j < self.num_columns:
                raise LpError(f"row references unknown column {j}")
            if a != 0:
                clean[j] = float(a)
        self.rows.append((clean, sense, float(rhs)))
        self._dense = None
        return len(self.rows) - 1

    def set_bounds(self, col, lo, hi):
        if not 0 <= col < self.num_columns:
            raise LpError(f"unknown column {col}")
        if lo > hi:
            raise LpError(f"column {col}: lower bound {lo} exceeds upper bound {hi}")
        self.lower[col] = float(lo)
        self.upper[col] = float(hi)

    def set_objective(self, coeffs, sense="min"):
        if sense not in ("min", "max"):
            raise LpError(f"unknown objective sense {sense!r}")
        for j in coeffs:
            if not 0 <= j < self.num_columns:
                raise LpError(f"objective references unknown column {j}")
        self.objective = {j: float(a) for j, a in coeffs.items() if a != 0}
        self.sense = sense

    def copy(self):
        other = LpProblem()
        other.lower = list(self.lower)
        other.upper = list(self.upper)
        other.rows = list(self.rows)  # row tuples are never mutated
        other.objective = dict(self.objective)
        other.sense = self.sense
        other.last_basis = self.last_basis
        other._dense = self._dense
        return other

    def dense_matrix(self):
        if self._dense is None:
            a = np.zeros((self.num_rows, self.num_columns))
            for r, (coeffs, _, _) in enumerate(self.rows):
                for j, v in coeffs.items():
                    a[r, j] = v
            self._dense = a
        return self._dense

    def violations(self, x, tol=PRIMAL_TOL):
        """Rows and bounds violated by x beyond tol, as readable strings."""
        out = []
        for j in range(self.num_columns):
            if x[j] < self.lower[j] - tol or x[j] > self.upper[j] + tol:
                out.append(f"column {j} = {x[j]} outside [{self.lower[j]}, {self.upper[j]}]")
        for r, (coeffs, sense, rhs) in enumerate(self.rows):
            lhs = sum(a * x[j] for j, a in coeffs.items())
            if (sense == "<=" and lhs > rhs + tol) or (sense == ">=" and lhs < rhs - tol) \
                    or (sense == "=" and abs(lhs - rhs) > tol):
                out.append(f"row {r}: {lhs} {sense} {rhs}")
        return out

    def solve(self, warm_start=None, max_iterations=None):
        """
        Solves the LP. Without an explicit warm start the basis of the previous
        solve is reused. A singular basis triggers one cold restart from the
        slack basis before LpNumericalError is raised.
        """
        basis = warm_start if warm_start is not None else self.last_basis
        try:
            solution = _Simplex(self, basis).run(max_iterations)
        except np.linalg.LinAlgError as e:
            logger.debug(f"refactorization failed ({e}), restarting from the slack basis")
            try:
                solution = _Simplex(self, None).run(max_iterations)
            except np.linalg.LinAlgError as e2:
                raise LpNumericalError(f"basis stays singular after a cold restart: {e2}") from e2
        if solution.basis is not None:
            self.last_basis = solution.basis
        return solution


class _Simplex:
    def __init__(self, problem, basis):
        a = problem.dense_matrix()
        self.m, self.n = a.shape
        m, n = self.m, self.n
        self.matrix = np.hstack([a, np.eye(m)])
        self.b = np.array([rhs for _, _, rhs in problem.rows], dtype=float)

        slack_lo = [0.0 if s in ("<=", "=") else -INF for _, s, _ in problem.rows]
        slack_hi = [0.0 if s in (">=", "=") else INF for _, s, _ in problem.rows]
        self.lo = np.array(problem.lower + slack_lo, dtype=float)
        self.hi = np.array(problem.upper + slack_hi, dtype=float)
        self.fixed = self.hi - self.lo <= ZERO_STEP

        self.sign = -1.0 if problem.sense == "max" else 1.0
        self.c = np.zeros(n + m)
        for j, v in problem.objective.items():
            self.c[j] = self.sign * v

        self.basic = None
        self.at_upper = np.zeros(n + m, dtype=bool)
        if basis is not None:
            self._install(basis)
        if self.basic is None:
            self.basic = list(range(n, n + m))
            self.at_upper[:] = False
        # variables without a finite lower bound rest at their upper bound
        self.at_upper |= np.isinf(self.lo)
        self.at_upper &= ~np.isinf(self.hi)
        self.is_basic = np.zeros(n + m, dtype=bool)
        self.is_basic[self.basic] = True
        self.updates = 0

    def _decode(self, code):
        if code >= 0:
            return code if code < self.n else None
        r = -code - 1
        return self.n + r if r < self.m else None

    def _install(self, basis):
        basic = []
        for code in basis.basic:
            v = self._decode(code)
            if v is None:
                return
            basic.append(v)
        # rows added since the basis was taken enter with their slack
        for r in range(len(basis.basic), self.m):
            basic.append(self.n + r)
        if len(basic) != self.m or len(set(basic)) != self.m:
            return
        self.basic = basic
        for code in basis.at_upper:
            v = self._decode(code)
            if v is not None:
                self.at_upper[v] = True
        self.at_upper[basic] = False

    def _refactor(self):
        if self.m == 0:
            self.binv = np.zeros((0, 0))
        else:
            b = self.matrix[:, self.basic]
            binv = np.linalg.inv(b)
            if not np.all(np.isfinite(binv)) or np.abs(binv @ b - np.eye(self.m)).max() > 1e-6:
                raise np.linalg.LinAlgError("ill-conditioned basis")
            self.binv = binv
        self.updates = 0

    def _nonbasic_values(self):
        x = np.where(self.at_upper, self.hi, self.lo)
        x[self.is_basic] = 0.0
        return x

    def _compute(self):
        x = self._nonbasic_values()
        self.x_b = self.binv @ (self.b - self.matrix @ x) if self.m else np.zeros(0)

    def _price(self, d, bland):
        at_lower = ~self.at_upper
        ok = ~self.is_basic & ~self.fixed & ((at_lower & (d < -DUAL_TOL)) | (self.at_upper & (d > DUAL_TOL)))
        candidates = np.flatnonzero(ok)
        if candidates.size == 0:
            return None
        if bland:
            return int(candidates[0])
        return int(candidates[np.argmax(np.abs(d[candidates]))])

    def _ratio(self, rho, below, above, bland):
        """
        Longest step before a basic variable hits a breakpoint. Returns
        (theta, row, leaves_at_upper) or (inf, None, None).
        """
        lo_b = self.lo[self.basic]
        hi_b = self.hi[self.basic]
        x_b = self.x_b
        theta = np.full(self.m, INF)
        at_up = np.zeros(self.m, dtype=bool)
        feasible = ~below & ~above
        with np.errstate(divide="ignore", invalid="ignore"):
            up = rho > PIVOT_TOL
            down = rho < -PIVOT_TOL
            # feasible variables stop at the bound they move toward
            mask = up & feasible & np.isfinite(hi_b)
            theta[mask] = (hi_b[mask] - x_b[mask]) / rho[mask]
            at_up[mask] = True
            mask = down & feasible & np.isfinite(lo_b)
            theta[mask] = (x_b[mask] - lo_b[mask]) / -rho[mask]
            # infeasible ones stop when they reach the violated bound
            mask = up & below
            theta[mask] = (lo_b[mask] - x_b[mask]) / rho[mask]
            mask = down & above
            theta[mask] = (x_b[mask] - hi_b[mask]) / -rho[mask]
            at_up[mask] = True
        theta = np.maximum(theta, 0.0)
        best = theta.min() if self.m else INF
        if not np.isfinite(best):
            return INF, None, None
        ties = np.flatnonzero(theta <= best + ZERO_STEP)
        if bland:
            r = int(min(ties, key=lambda i: self.basic[i]))
        else:
            r = int(ties[np.argmax(np.abs(rho[ties]))])
        return float(theta[r]), r, bool(at_up[r])

    def _pivot(self, r, alpha):
        row = self.binv[r] / alpha[r]
        self.binv -= np.outer(alpha, row)
        self.binv[r] = row
        self.updates += 1

    def _basis(self):
        codes = tuple(v if v < self.n else -(v - self.n + 1) for v in self.basic)
        upper = frozenset(v if v < self.n else -(v - self.n + 1)
                          for v in np.flatnonzero(self.at_upper & ~self.is_basic))
        return LpBasis(codes, upper)

    def _solution(self, status, iterations):
        x = self._nonbasic_values()
        x[self.basic] = self.x_b
        structural = np.clip(x[:self.n], self.lo[:self.n], self.hi[:self.n])
        value = float(self.sign * (self.c[:self.n] @ structural)) if status == "optimal" else float("nan")
        return LpSolution(status, structural, value, self._basis(), iterations)

    def run(self, max_iterations=None):
        limit = max_iterations if max_iterations is not None else 50 * (self.m + self.n)
        self._refactor()
        self._compute()
        iterations = 0
        degenerate = 0
        bland = False
        while True:
            lo_b = self.lo[self.basic]
            hi_b = self.hi[self.basic]
            below = self.x_b < lo_b - PRIMAL_TOL
            above = self.x_b > hi_b + PRIMAL_TOL
            phase1 = bool(below.any() or above.any())
            if phase1:
                c_b = np.where(below, -1.0, np.where(above, 1.0, 0.0))
                d = -(c_b @ self.binv) @ self.matrix
            else:
                c_b = self.c[self.basic]
                d = self.c - (c_b @ self.binv) @ self.matrix if self.m else self.c.copy()
            j = self._price(d, bland)
            if j is None:
                if self.updates:
                    # confirm on a fresh factorization before concluding
                    self._refactor()
                    self._compute()
                    continue
                status = "infeasible" if phase1 else "optimal"
                return self._solution(status, iterations)
            if iterations >= limit:
                logger.info(f"simplex hit its iteration cap of {limit}")
                return self._solution("iteration_limit", iterations)
            iterations += 1

            direction = 1.0 if not self.at_upper[j] else -1.0
            alpha = self.binv @ self.matrix[:, j] if self.m else np.zeros(0)
            rho = -direction * alpha
            flip = self.hi[j] - self.lo[j]
            theta, r, leaves_upper = self._ratio(rho, below, above, bland)
            if r is None or flip <= theta + ZERO_STEP:
                if not np.isfinite(flip):
                    raise LpError("LP is unbounded")
                self.x_b = self.x_b + flip * rho
                self.at_upper[j] = not self.at_upper[j]
                continue

            if theta < ZERO_STEP:
                degenerate += 1
                if degenerate > BLAND_AFTER and not bland:
                    logger.debug("switching to Bland's rule after repeated degenerate pivots")
                    bland = True
            start = self.hi[j] if self.at_upper[j] else self.lo[j]
            self.x_b = self.x_b + theta * rho
            leaving = self.basic[r]
            self.at_upper[leaving] = leaves_upper
            self.is_basic[leaving] = False
            self.basic[r] = j
            self.is_basic[j] = True
            self.at_upper[j] = False
            self.x_b[r] = start + direction * theta
            self._pivot(r, alpha)
            if self.updates >= REFACTOR_EVERY:
                self._refactor()
                self._compute()
