"""Alternating convex search for the biconvex reformulation, plus the scenario baseline.

With the multipliers ``lambda`` fixed the problem in ``U`` is a second-order
cone program (mean affine in ``U``, std a norm of ``U``).  With ``U`` fixed the
cost does not depend on ``lambda``, so the multiplier step only has to keep the
allocation feasible; it picks the largest admissible value per row.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .constraints import (
    ConeConstraint,
    RiskAllocation,
    build_cone_rows,
    check_alpha,
    lambda_floor,
    total_risk,
    uniform_allocation,
)
from .errors import DomainError
from .problem import ChanceProblem
from .uncertainty import sample_all

log = logging.getLogger(__name__)

_ACCEPTED = (cp.OPTIMAL, cp.OPTIMAL_INACCURATE)
_INFEASIBLE = (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE)


@dataclass(frozen=True)
class ACSConfig:
    max_iterations: int = 20
    convergence_tol: float = 1e-6
    subproblem_tol: float = 1e-8
    lambda_max: float = 1e6
    lambda_eps: float = 1e-9

    def __post_init__(self):
        if self.max_iterations < 1:
            raise DomainError("max_iterations must be >= 1")
        if min(self.convergence_tol, self.subproblem_tol, self.lambda_eps) <= 0:
            raise DomainError("tolerances must be positive")

    def to_dict(self) -> dict:
        return {
            "max_iterations": self.max_iterations,
            "convergence_tol": self.convergence_tol,
            "subproblem_tol": self.subproblem_tol,
            "lambda_max": self.lambda_max,
            "lambda_eps": self.lambda_eps,
        }


@dataclass
class ConeProgram:
    """``min U^T U`` over a box, cone rows and optional linear rows ``A_ub U <= b_ub``."""

    lower: np.ndarray
    upper: np.ndarray
    cone_rows: list[ConeConstraint] = field(default_factory=list)
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != self.upper.shape or np.any(self.lower > self.upper):
            raise DomainError("box bounds must match in shape with lower <= upper")
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise DomainError("box bounds must be finite")

    @property
    def n(self) -> int:
        return self.lower.size

    def max_violation(self, U) -> float:
        U = np.ravel(U)
        v = [0.0, float(np.max(self.lower - U, initial=0.0)), float(np.max(U - self.upper, initial=0.0))]
        v += [-row.slack(U) for row in self.cone_rows]
        if self.A_ub is not None:
            v.append(float(np.max(self.A_ub @ U - self.b_ub, initial=0.0)))
        return max(v)


@dataclass
class Solution:
    U_star: np.ndarray | None
    allocation: RiskAllocation | None
    cost: float
    iterations: int
    status: str
    per_row_slack: np.ndarray
    method: str
    cost_history: list[float] = field(default_factory=list)
    solve_time: float = 0.0
    n_scenarios: int | None = None
    violated_rows: list[tuple[int, int]] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.status != "infeasible"


def _cvx_solve(prob: cp.Problem, tol: float) -> str:
    attempts = [
        # the cost is quadratic, so a gap of eps moves U by about sqrt(eps)
        ("CLARABEL", dict(tol_gap_abs=1e-4 * tol, tol_gap_rel=1e-4 * tol, tol_feas=tol, tol_ktratio=1e-4 * tol, max_iter=500)),
        ("CLARABEL", dict(tol_gap_abs=tol, tol_gap_rel=tol, tol_feas=tol, max_iter=500)),
        ("CVXOPT", dict(abstol=tol, reltol=tol, feastol=tol)),
        ("SCS", dict(eps_abs=tol, eps_rel=tol, max_iters=200_000)),
    ]
    for name, opts in attempts:
        if name not in cp.installed_solvers():
            continue
        try:
            with warnings.catch_warnings():
                warnings.filterwarnings("ignore", message="Solution may be inaccurate")
                prob.solve(solver=name, **opts)
        except cp.error.SolverError:
            log.debug("solver %s failed, trying the next backend", name)
            continue
        if prob.status in _ACCEPTED or prob.status in _INFEASIBLE:
            if prob.status == cp.OPTIMAL_INACCURATE:
                log.debug("%s stopped at reduced accuracy", name)
            return prob.status
    return prob.status or "solver_error"


def _scale(program: ConeProgram) -> float:
    s = float(max(np.max(np.abs(program.lower), initial=0.0), np.max(np.abs(program.upper), initial=0.0)))
    return s if s > 0 else 1.0


def solve_U_step(program: ConeProgram, tol: float = 1e-8) -> np.ndarray | None:
    """Optimal ``U`` for fixed multipliers, or ``None`` if the cone program is infeasible."""
    s = _scale(program)
    z = cp.Variable(program.n)
    cons = [z >= program.lower / s, z <= program.upper / s]
    if program.cone_rows:
        width = max(row.norm_map.shape[0] for row in program.cone_rows)
        R = len(program.cone_rows)
        Mall = np.zeros((R, width, program.n))
        a = np.empty((R, program.n))
        rhs = np.empty(R)
        for r, row in enumerate(program.cone_rows):
            Mr = row.scale * row.norm_map * s
            ar = row.affine * s
            # unit-scale rows keep large multipliers from wrecking the conditioning
            c = max(float(np.linalg.norm(ar)), float(np.linalg.norm(Mr)), 1e-300)
            Mall[r, : row.norm_map.shape[0]] = Mr / c
            a[r] = ar / c
            rhs[r] = (row.bound - row.offset) / c
        t = rhs - a @ z
        X = cp.reshape(Mall.reshape(R * width, program.n) @ z, (R, width), order="C")
        cons.append(cp.SOC(t, X, axis=1))
    if program.A_ub is not None and program.A_ub.size:
        cons.append(program.A_ub @ z * s <= program.b_ub)
    prob = cp.Problem(cp.Minimize(cp.sum_squares(z)), cons)
    status = _cvx_solve(prob, tol)
    if status not in _ACCEPTED or z.value is None:
        return None
    return np.clip(np.asarray(z.value, dtype=float) * s, program.lower, program.upper)


def build_program(problem: ChanceProblem, allocation: RiskAllocation) -> ConeProgram:
    lo, hi = problem.box
    rows = build_cone_rows(problem.polytopes, allocation, problem.gradient_data)
    return ConeProgram(lo, hi, rows)


def solve_lambda_step(problem: ChanceProblem, U, method: str | None = None, config: ACSConfig = ACSConfig()) -> RiskAllocation | None:
    """Largest admissible multiplier per row for fixed ``U``; ``None`` if no feasible allocation exists."""
    method = method or problem.method
    mean = problem.row_means(U)
    std = problem.row_stds(U)
    h = problem.bounds
    lam = np.full(mean.size, config.lambda_max)
    random_rows = std > 0
    if np.any(mean[~random_rows] > h[~random_rows]):
        return None
    lam[random_rows] = (h[random_rows] - mean[random_rows]) / std[random_rows]
    lam = np.clip(lam, lambda_floor(method) + config.lambda_eps, config.lambda_max)
    alloc = RiskAllocation(lam, problem.alpha, method)
    if total_risk(alloc) > problem.alpha:
        return None
    return alloc


def _violated_rows(problem: ChanceProblem, allocation: RiskAllocation, tol: float) -> list[tuple[int, int]]:
    """Rows that must be relaxed to make the cone program feasible (elastic program)."""
    program = build_program(problem, allocation)
    s = _scale(program)
    z = cp.Variable(program.n)
    e = cp.Variable(len(program.cone_rows), nonneg=True)
    cons = [z >= program.lower / s, z <= program.upper / s]
    for r, row in enumerate(program.cone_rows):
        cons.append(row.affine @ z * s + row.offset + row.scale * cp.norm(row.norm_map @ z * s) <= row.bound + e[r])
    prob = cp.Problem(cp.Minimize(cp.sum(e)), cons)
    _cvx_solve(prob, tol)
    if e.value is None:
        return []
    return [problem.polytopes.row_index[r] for r in np.flatnonzero(e.value > 1e-6)]


def acs_solve(
    problem: ChanceProblem,
    config: ACSConfig = ACSConfig(),
    method: str | None = None,
    initial: RiskAllocation | None = None,
) -> Solution:
    method = method or problem.method
    t0 = time.perf_counter()
    alloc = initial if initial is not None else uniform_allocation(problem.polytopes, problem.alpha, method)
    if alloc.method != method:
        raise DomainError("initial allocation uses a different concentration bound")
    # rows with no randomness ignore their multiplier
    inert = np.array([not M.any() for _, _, M in problem.gradient_data], dtype=bool)
    history: list[float] = []
    best: tuple[float, np.ndarray, RiskAllocation] | None = None
    status = "max_iter"
    for it in range(1, config.max_iterations + 1):
        U = solve_U_step(build_program(problem, alloc), config.subproblem_tol)
        if U is None:
            if best is None:
                violated = _violated_rows(problem, alloc, config.subproblem_tol)
                return Solution(
                    None, alloc, math.inf, it, "infeasible", np.array([]), method,
                    history, time.perf_counter() - t0, violated_rows=violated,
                )
            log.warning("U-step failed at iteration %d; keeping the best iterate", it)
            break
        cost = problem.cost(U)
        history.append(cost)
        new_alloc = solve_lambda_step(problem, U, method, config)
        iterate_alloc = new_alloc if new_alloc is not None else alloc
        if best is None or cost <= best[0]:
            best = (cost, U, iterate_alloc)
        log.debug("ACS iteration %d: cost %.6e", it, cost)
        if new_alloc is None:
            log.warning("lambda step found no feasible reallocation at iteration %d", it)
            break
        if np.all(inert | (new_alloc.lambdas == alloc.lambdas)):
            # the next cone program would be identical
            status = "converged"
            break
        if len(history) >= 2 and abs(history[-1] - history[-2]) <= config.convergence_tol * max(abs(history[-2]), 1e-300):
            status = "converged"
            break
        alloc = new_alloc
    cost, U, final_alloc = best
    slack = problem.bounds - (problem.row_means(U) + final_alloc.lambdas * problem.row_stds(U))
    return Solution(
        U, final_alloc, cost, len(history), status, slack, method, history, time.perf_counter() - t0
    )


def scenario_sample_count(alpha: float, delta: float, m: int, N: int) -> int:
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    if not 0 < delta < 1:
        raise DomainError("delta must lie in (0, 1)")
    return math.ceil((2.0 / alpha) * (math.log(1.0 / delta) + m * N))


def scenario_constraints(problem: ChanceProblem, control_matrices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Linear rows ``A U <= b`` enforcing every half-space under each sampled ``B``.

    ``control_matrices`` has shape ``(S, N, n, m)``; rows are sample-major.
    """
    sys_ = problem.system
    N, n, m = sys_.horizon, sys_.state_dim, sys_.input_dim
    steps, G, h = problem.polytopes.stacked()
    W = np.zeros((steps.size, N, n))
    for r, k in enumerate(steps):
        for j in range(k):
            W[r, j] = G[r] @ sys_.powers[k - 1 - j]
    free = np.array([G[r] @ sys_.free_response(k) for r, k in enumerate(steps)])
    coef = np.einsum("rjn,sjnc->srjc", W, control_matrices)
    S = control_matrices.shape[0]
    return coef.reshape(S * steps.size, N * m), np.tile(h - free, S)


def scenario_solve(
    problem: ChanceProblem,
    delta: float,
    rng: np.random.Generator,
    n_samples: int | None = None,
    tol: float = 1e-8,
) -> Solution:
    """Sampled convex program with ``N_s`` i.i.d. realizations of all control matrices."""
    check_alpha(problem.alpha, "cantelli")
    t0 = time.perf_counter()
    N, m = problem.system.horizon, problem.system.input_dim
    if n_samples is None:
        n_samples = scenario_sample_count(problem.alpha, delta, m, N)
    Bs = sample_all(problem.uncertainty, rng, n_samples)
    A_ub, b_ub = scenario_constraints(problem, Bs)
    lo, hi = problem.box
    U = solve_U_step(ConeProgram(lo, hi, A_ub=A_ub, b_ub=b_ub), tol)
    elapsed = time.perf_counter() - t0
    if U is None:
        return Solution(None, None, math.inf, 0, "infeasible", np.array([]), "scenario", [], elapsed, n_samples)
    residual = A_ub @ U - b_ub
    slack = -residual.reshape(n_samples, -1).max(axis=0)
    cost = problem.cost(U)
    return Solution(U, None, cost, 0, "converged", slack, "scenario", [cost], elapsed, n_samples)

