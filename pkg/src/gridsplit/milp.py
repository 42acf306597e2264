"""Small dense MILP solver: bounded-variable simplex plus branch and bound.

Scope is deliberately narrow. Models here have a hundred-odd variables with
finite bounds on every structural column, so a dense revised simplex with an
explicitly maintained basis inverse is both fast enough and easy to audit.
No presolve, no cutting planes; faulted or otherwise dead binaries are fixed
through their bounds by the caller.

Minimization throughout. Integer variables must carry integral finite bounds.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

FEAS_TOL = 1e-7          # constraint satisfaction guarantee on Optimal
INT_TOL = 1e-6           # integrality acceptance in branch and bound
DUAL_TOL = 1e-9          # reduced-cost threshold for entering candidates
PIVOT_TOL = 1e-9         # smallest pivot element magnitude accepted
DEGEN_STEP = 1e-10       # step lengths below this count as degenerate
BLAND_AFTER = 1000       # degenerate pivots before switching to Bland's rule
REFACTOR_EVERY = 128     # pivots between basis-inverse refactorizations
PRUNE_EPS = 1e-9         # node bound vs incumbent pruning slack


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration_limit"


class SolverError(Exception):
    """Numerical failure or unsupported model (e.g. unbounded LP)."""


@dataclass
class SolveReport:
    status: SolveStatus
    objective: float
    values: np.ndarray
    node_count: int = 0
    lp_iterations: int = 0
    wall_time_s: float = 0.0


@dataclass
class _Row:
    coeffs: dict[int, float]
    sense: str
    rhs: float
    name: str


class MilpModel:
    """Incrementally built model: bounded columns, sparse rows, linear cost."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.var_names: list[str] = []
        self.lower: list[float] = []
        self.upper: list[float] = []
        self.is_integer: list[bool] = []
        self.objective: list[float] = []
        self.rows: list[_Row] = []
        self.offset = 0.0  # constant term carried into reported objectives

    def add_variable(self, name: str, lower: float, upper: float, *,
                     integer: bool = False, objective: float = 0.0) -> int:
        if lower > upper:
            raise ValueError(f"variable {name}: lower {lower} > upper {upper}")
        if integer:
            if not (np.isfinite(lower) and np.isfinite(upper)):
                raise ValueError(f"integer variable {name} needs finite bounds")
            if lower != round(lower) or upper != round(upper):
                raise ValueError(f"integer variable {name} needs integral bounds")
        self.var_names.append(name)
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        self.is_integer.append(integer)
        self.objective.append(float(objective))
        return len(self.var_names) - 1

    def add_objective(self, var: int, coeff: float) -> None:
        self.objective[var] += float(coeff)

    def add_constraint(self, coeffs: dict[int, float], sense: str, rhs: float,
                       name: str = "") -> int:
        if sense not in ("<=", ">=", "=="):
            raise ValueError(f"bad sense {sense!r}")
        for j in coeffs:
            if not 0 <= j < len(self.var_names):
                raise ValueError(f"constraint {name!r} references unknown column {j}")
        self.rows.append(_Row(dict(coeffs), sense, float(rhs),
                              name or f"r{len(self.rows)}"))
        return len(self.rows) - 1

    @property
    def n_variables(self) -> int:
        return len(self.var_names)

    @property
    def n_constraints(self) -> int:
        return len(self.rows)

    def integer_indices(self) -> list[int]:
        return [j for j, f in enumerate(self.is_integer) if f]

    def dense(self) -> tuple[np.ndarray, list[str], np.ndarray,
                             np.ndarray, np.ndarray, np.ndarray]:
        m, n = len(self.rows), self.n_variables
        a = np.zeros((m, n))
        b = np.zeros(m)
        senses = []
        for i, row in enumerate(self.rows):
            for j, v in row.coeffs.items():
                a[i, j] = v
            b[i] = row.rhs
            senses.append(row.sense)
        return (a, senses, b, np.array(self.lower), np.array(self.upper),
                np.array(self.objective))

    def to_lp_string(self) -> str:
        """Serialize in LP text format for cross-checking with other solvers.

        The objective constant (``offset``) has no LP-format slot and is noted
        in a leading comment.
        """
        def num(x: float) -> str:
            return repr(float(x))

        def term(coef: float, name: str, first: bool) -> str:
            sign = "- " if coef < 0 else ("" if first else "+ ")
            mag = abs(coef)
            return f"{sign}{num(mag)} {name}"

        out = [f"\\ {self.name}", f"\\ objective offset: {num(self.offset)}",
               "Minimize", " obj:"]
        parts = []
        for j, c in enumerate(self.objective):
            if c != 0.0:
                parts.append(term(c, self.var_names[j], not parts))
        out[-1] += " " + (" ".join(parts) if parts else "0 " + self.var_names[0])
        out.append("Subject To")
        op = {"<=": "<=", ">=": ">=", "==": "="}
        for row in self.rows:
            parts = []
            for j in sorted(row.coeffs):
                if row.coeffs[j] != 0.0:
                    parts.append(term(row.coeffs[j], self.var_names[j], not parts))
            body = " ".join(parts) if parts else "0 " + self.var_names[0]
            out.append(f" {row.name}: {body} {op[row.sense]} {num(row.rhs)}")
        out.append("Bounds")
        for j, name in enumerate(self.var_names):
            lo, hi = self.lower[j], self.upper[j]
            if lo == hi:
                out.append(f" {name} = {num(lo)}")
            else:
                lo_s = num(lo) if np.isfinite(lo) else "-inf"
                hi_s = num(hi) if np.isfinite(hi) else "+inf"
                out.append(f" {lo_s} <= {name} <= {hi_s}")
        ints = [self.var_names[j] for j in self.integer_indices()]
        if ints:
            out.append("Generals")
            out.append(" " + " ".join(ints))
        out.append("End")
        return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# bounded-variable primal simplex
# ---------------------------------------------------------------------------

_AT_LOWER, _AT_UPPER, _BASIC = 0, 1, 2


class _Simplex:
    """One LP solve over the augmented system [A | slacks | artificials].

    Slack bounds encode the row sense ("<=": [0,inf), ">=": (-inf,0],
    "==": [0,0]). Phase 1 drives artificial columns to zero; phase 2
    minimizes the real cost with artificials pinned.
    """

    def __init__(self, a: np.ndarray, senses: list[str], b: np.ndarray,
                 lower: np.ndarray, upper: np.ndarray, cost: np.ndarray,
                 pivot_cap: int):
        m, n = a.shape
        self.m, self.n = m, n
        self.pivot_cap = pivot_cap
        self.pivots = 0
        self.degenerate = 0
        self.bland = False

        slack_lo = np.zeros(m)
        slack_hi = np.zeros(m)
        for i, s in enumerate(senses):
            if s == "<=":
                slack_lo[i], slack_hi[i] = 0.0, np.inf
            elif s == ">=":
                slack_lo[i], slack_hi[i] = -np.inf, 0.0
            else:
                slack_lo[i] = slack_hi[i] = 0.0

        # full column space: structural, slack, artificial
        self.art0 = n + m
        self.full = np.concatenate([a, np.eye(m), np.zeros((m, m))], axis=1)
        self.lo = np.concatenate([lower, slack_lo, np.zeros(m)])
        self.hi = np.concatenate([upper, slack_hi, np.zeros(m)])
        self.cost = np.concatenate([cost, np.zeros(2 * m)])
        self.b = b.astype(float)

        # park nonbasic columns at a bound (0 for fully free columns)
        vals = np.where(np.isfinite(self.lo), self.lo,
                        np.where(np.isfinite(self.hi), self.hi, 0.0))
        stat = np.where(np.isfinite(self.lo) | ~np.isfinite(self.hi),
                        _AT_LOWER, _AT_UPPER)
        self.values = vals.astype(float)
        self.stat = stat.astype(np.int8)

        # initial basis: the row's slack when it can absorb the residual,
        # a signed artificial otherwise
        resid = self.b - a @ self.values[:n]
        basis = np.empty(m, dtype=int)
        for i in range(m):
            s_req = resid[i]
            if slack_lo[i] - 1e-11 <= s_req <= slack_hi[i] + 1e-11:
                basis[i] = n + i
                self.values[n + i] = s_req
            else:
                near = min(max(s_req, slack_lo[i]), slack_hi[i])
                self.values[n + i] = near
                rho = s_req - near
                j = self.art0 + i
                self.full[i, j] = 1.0 if rho > 0 else -1.0
                self.hi[j] = np.inf
                self.values[j] = abs(rho)
                basis[i] = j
        self.basis = basis
        self.stat[basis] = _BASIC
        self.binv = np.eye(m)
        for i in range(m):
            j = basis[i]
            if j >= self.art0 and self.full[i, j] < 0:
                self.binv[i, i] = -1.0
        self.xb = self.values[basis].copy()

    # -- helpers ------------------------------------------------------------

    def _refactor(self) -> None:
        bmat = self.full[:, self.basis]
        try:
            self.binv = np.linalg.inv(bmat)
        except np.linalg.LinAlgError as exc:
            raise SolverError("singular basis during refactorization") from exc
        self.values[self.basis] = 0.0
        rhs = self.b - self.full @ self.values
        self.xb = self.binv @ rhs
        self.values[self.basis] = self.xb

    def _entering(self, d: np.ndarray) -> tuple[int, int] | None:
        movable = (self.hi - self.lo) > 0
        nonbasic = self.stat != _BASIC
        free = ~np.isfinite(self.lo) & ~np.isfinite(self.hi)
        up_ok = nonbasic & movable & ((self.stat == _AT_LOWER) | free)
        dn_ok = nonbasic & movable & ((self.stat == _AT_UPPER) | free)
        up_viol = np.where(up_ok, -d, 0.0)
        dn_viol = np.where(dn_ok, d, 0.0)
        if self.bland:
            cand = np.nonzero((up_viol > DUAL_TOL) | (dn_viol > DUAL_TOL))[0]
            if cand.size == 0:
                return None
            q = int(cand[0])
            return q, (1 if up_viol[q] > DUAL_TOL else -1)
        best = np.maximum(up_viol, dn_viol)
        q = int(np.argmax(best))
        if best[q] <= DUAL_TOL:
            return None
        return q, (1 if up_viol[q] >= dn_viol[q] else -1)

    def _run(self, cost: np.ndarray) -> str:
        m = self.m
        while True:
            if self.pivots >= self.pivot_cap:
                return "limit"
            y = cost[self.basis] @ self.binv
            d = cost - y @ self.full
            pick = self._entering(d)
            if pick is None:
                return "optimal"
            q, sigma = pick

            w = self.binv @ self.full[:, q]
            rate = -sigma * w  # basic values move by t * rate

            # ratio test: own bound span, then each basic variable's slack
            span = self.hi[q] - self.lo[q]
            t_best = span if np.isfinite(span) else np.inf
            limits = np.full(m, np.inf)
            dec = rate < -PIVOT_TOL
            inc = rate > PIVOT_TOL
            lo_b = self.lo[self.basis]
            hi_b = self.hi[self.basis]
            with np.errstate(invalid="ignore"):
                limits[dec] = (self.xb[dec] - lo_b[dec]) / -rate[dec]
                limits[inc] = (hi_b[inc] - self.xb[inc]) / rate[inc]
            limits = np.where(np.isnan(limits), np.inf, limits)
            t_rows = limits.min() if m else np.inf
            t_star = min(t_best, t_rows)
            if not np.isfinite(t_star):
                raise SolverError("LP is unbounded")
            t_star = max(t_star, 0.0)

            if t_star <= DEGEN_STEP:
                self.degenerate += 1
                if self.degenerate >= BLAND_AFTER:
                    self.bland = True

            self.pivots += 1
            if t_rows > t_star + 1e-12:
                # entering variable swings to its other bound; basis unchanged
                self.xb += t_star * rate
                self.values[self.basis] = self.xb
                self.values[q] = self.hi[q] if sigma > 0 else self.lo[q]
                self.stat[q] = _AT_UPPER if sigma > 0 else _AT_LOWER
                continue

            # leaving row: among tight rows take the largest pivot magnitude
            tight = np.nonzero(limits <= t_star + 1e-12)[0]
            order = sorted(tight, key=lambda i: (-abs(w[i]), self.basis[i]))
            r = int(order[0])
            if abs(w[r]) <= PIVOT_TOL:
                raise SolverError("pivot element vanished in ratio test")

            leave = self.basis[r]
            self.xb += t_star * rate
            self.values[self.basis] = self.xb
            self.values[leave] = lo_b[r] if rate[r] < 0 else hi_b[r]
            self.stat[leave] = _AT_LOWER if rate[r] < 0 else _AT_UPPER
            enter_val = self.values[q] + sigma * t_star

            piv_row = self.binv[r] / w[r]
            self.binv -= np.outer(w, piv_row)
            self.binv[r] = piv_row
            self.basis[r] = q
            self.stat[q] = _BASIC
            self.values[q] = enter_val
            self.xb = self.values[self.basis].copy()

            if self.pivots % REFACTOR_EVERY == 0:
                self._refactor()

    def _evict_artificials(self) -> None:
        # swap any basic artificial for a real column sharing its row; rows
        # with no such column are redundant and keep a pinned artificial
        for r in range(self.m):
            j = self.basis[r]
            if j < self.art0:
                continue
            row = self.binv[r] @ self.full[:, :self.art0]
            cands = [k for k in np.nonzero(np.abs(row) > 1e-7)[0]
                     if self.stat[k] != _BASIC]
            if not cands:
                continue
            q = int(cands[0])
            w = self.binv @ self.full[:, q]
            piv_row = self.binv[r] / w[r]
            self.binv -= np.outer(w, piv_row)
            self.binv[r] = piv_row
            self.stat[j] = _AT_LOWER
            self.values[j] = 0.0
            self.basis[r] = q
            self.stat[q] = _BASIC
            self.xb = self.values[self.basis].copy()
            self.xb[r] = self.values[q]
            self.values[self.basis] = self.xb

    def solve(self) -> tuple[str, np.ndarray]:
        phase1 = np.zeros_like(self.cost)
        phase1[self.art0:] = 1.0
        if np.any(self.basis >= self.art0):
            status = self._run(phase1)
            if status == "limit":
                return "limit", self.values[:self.n]
            self._refactor()
            infeas = float(np.sum(self.values[self.art0:]))
            if infeas > FEAS_TOL:
                return "infeasible", self.values[:self.n]
            self._evict_artificials()
            self.hi[self.art0:] = 0.0
            self.values[self.art0:][self.stat[self.art0:] != _BASIC] = 0.0

        status = self._run(self.cost)
        if status == "limit":
            return "limit", self.values[:self.n]
        self._refactor()

        # tolerance audit before claiming optimality
        x = self.values.copy()
        resid = self.full @ x - self.b
        if np.max(np.abs(resid), initial=0.0) > FEAS_TOL:
            raise SolverError("optimal basis violates feasibility tolerance")
        below = np.where(np.isfinite(self.lo), self.lo - x, 0.0)
        above = np.where(np.isfinite(self.hi), x - self.hi, 0.0)
        if max(below.max(initial=0.0), above.max(initial=0.0)) > FEAS_TOL:
            raise SolverError("optimal point violates variable bounds")
        return "optimal", x[:self.n]


def _solve_lp_arrays(a, senses, b, lower, upper, cost,
                     pivot_cap: int) -> tuple[str, float, np.ndarray, int]:
    sx = _Simplex(a, senses, b, lower, upper, cost, pivot_cap)
    status, x = sx.solve()
    obj = float(cost @ x) if status == "optimal" else float("nan")
    return status, obj, x, sx.pivots


def solve_lp(model: MilpModel, *, pivot_cap: int | None = None) -> SolveReport:
    """Simplex on the LP relaxation (integrality ignored)."""
    a, senses, b, lower, upper, cost = model.dense()
    if pivot_cap is None:
        pivot_cap = 100 * (model.n_constraints + model.n_variables)
    t0 = time.perf_counter()
    status, obj, x, pivots = _solve_lp_arrays(a, senses, b, lower, upper, cost,
                                              pivot_cap)
    wall = time.perf_counter() - t0
    smap = {"optimal": SolveStatus.OPTIMAL, "infeasible": SolveStatus.INFEASIBLE,
            "limit": SolveStatus.ITERATION_LIMIT}
    return SolveReport(smap[status], obj + model.offset if status == "optimal"
                       else float("nan"), x, 0, pivots, wall)


# ---------------------------------------------------------------------------
# branch and bound
# ---------------------------------------------------------------------------

@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    lower: np.ndarray = field(compare=False)
    upper: np.ndarray = field(compare=False)


def solve_milp(model: MilpModel, *, node_limit: int = 1_000_000,
               pivot_cap: int | None = None,
               warm_integer_values: dict[int, float] | None = None) -> SolveReport:
    """Best-first branch and bound over the model's integer variables.

    Branches on the most fractional integer variable (ties to the lowest
    variable id), prunes nodes whose LP bound is within ``PRUNE_EPS`` of the
    incumbent, and accepts integrality at ``INT_TOL``. An optional warm point
    (integer variable -> value) seeds the incumbent; it never changes the
    optimum, only the amount of pruning.
    """
    t0 = time.perf_counter()
    a, senses, b, lower, upper, cost = model.dense()
    int_idx = np.array(model.integer_indices(), dtype=int)
    if pivot_cap is None:
        pivot_cap = 100 * (model.n_constraints + model.n_variables)

    total_pivots = 0
    nodes = 0
    incumbent_obj = np.inf
    incumbent_x: np.ndarray | None = None

    class _PivotBudget(Exception):
        pass

    def lp(lo: np.ndarray, hi: np.ndarray):
        nonlocal total_pivots
        status, obj, x, pivots = _solve_lp_arrays(a, senses, b, lo, hi, cost,
                                                  pivot_cap)
        total_pivots += pivots
        if status == "limit":
            raise _PivotBudget()
        return status, obj, x

    def finish(status: SolveStatus) -> SolveReport:
        obj = incumbent_obj + model.offset if incumbent_x is not None else float("nan")
        vals = incumbent_x if incumbent_x is not None else np.full(model.n_variables, np.nan)
        return SolveReport(status, obj, vals, nodes, total_pivots,
                           time.perf_counter() - t0)

    try:
        if warm_integer_values:
            lo, hi = lower.copy(), upper.copy()
            for j, v in warm_integer_values.items():
                r = round(v)
                if lo[j] - INT_TOL <= r <= hi[j] + INT_TOL:
                    lo[j] = hi[j] = r
                else:
                    break
            else:
                status, obj, x = lp(lo, hi)
                if status == "optimal":
                    incumbent_obj, incumbent_x = obj, x

        heap: list[_Node] = []
        seq = 0
        heapq.heappush(heap, _Node(-np.inf, seq, lower.copy(), upper.copy()))
        while heap:
            node = heapq.heappop(heap)
            if node.bound >= incumbent_obj - PRUNE_EPS:
                continue
            if nodes >= node_limit:
                return finish(SolveStatus.ITERATION_LIMIT)
            nodes += 1
            status, obj, x = lp(node.lower, node.upper)
            if status != "optimal" or obj >= incumbent_obj - PRUNE_EPS:
                continue
            if int_idx.size:
                frac = np.abs(x[int_idx] - np.round(x[int_idx]))
                worst = frac > INT_TOL
            else:
                worst = np.zeros(0, dtype=bool)
            if not worst.any():
                incumbent_obj, incumbent_x = obj, x
                continue
            # most fractional first; ties go to the lowest variable id
            cand = int_idx[worst]
            dist = np.abs((x[cand] - np.floor(x[cand])) - 0.5)
            best = dist.min()
            j = int(cand[dist <= best + 1e-12].min())
            v = x[j]
            for side in (0, 1):
                lo, hi = node.lower.copy(), node.upper.copy()
                if side == 0:
                    hi[j] = np.floor(v)
                else:
                    lo[j] = np.ceil(v)
                if lo[j] > hi[j]:
                    continue
                seq += 1
                heapq.heappush(heap, _Node(obj, seq, lo, hi))
        if incumbent_x is None:
            return SolveReport(SolveStatus.INFEASIBLE, float("nan"),
                               np.full(model.n_variables, np.nan), nodes,
                               total_pivots, time.perf_counter() - t0)
        return finish(SolveStatus.OPTIMAL)
    except _PivotBudget:
        return finish(SolveStatus.ITERATION_LIMIT)
