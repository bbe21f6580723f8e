"""Small dense NLP and LP solving used by the planner, the MPC and the
stability margins.

Problem sizes here are tiny (at most a few hundred variables), so the NLP
path favours robustness: SLSQP for inequality-constrained problems,
L-BFGS-B when only bounds are present, both fed with caller-supplied or
forward-difference gradients.  KKT multipliers are recovered a posteriori
by a non-negative least-squares fit on the active set so that the reported
stationarity residual can be recomputed independently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

STATUS_OPTIMAL = "optimal"
STATUS_MAX_ITERS = "max_iters"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"


@dataclass
class NlpProblem:
    objective: Callable[[np.ndarray], float]
    x0: np.ndarray
    gradient: Callable[[np.ndarray], np.ndarray] | None = None
    constraints: Callable[[np.ndarray], np.ndarray] | None = None   # g(x) <= 0
    constraints_jac: Callable[[np.ndarray], np.ndarray] | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    tol_stat: float = 1e-8
    tol_feas: float = 1e-8
    tol_obj: float = 1e-12
    max_iter: int = 300

    def __post_init__(self):
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        n = self.x0.size
        self.lower = (np.full(n, -np.inf) if self.lower is None
                      else np.broadcast_to(np.asarray(self.lower, float), (n,)).copy())
        self.upper = (np.full(n, np.inf) if self.upper is None
                      else np.broadcast_to(np.asarray(self.upper, float), (n,)).copy())
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")


@dataclass
class NlpResult:
    x: np.ndarray
    objective: float
    kkt_residual: float
    status: str
    n_iter: int
    constraint_violation: float
    multipliers: dict = field(default_factory=dict)
    message: str = ""


def _fd_gradient(fun, x, f0=None, eps_scale=1e-7):
    f0 = fun(x) if f0 is None else f0
    g = np.empty_like(x)
    for i in range(x.size):
        h = eps_scale * max(1.0, abs(x[i]))
        xp = x.copy()
        xp[i] += h
        g[i] = (fun(xp) - f0) / h
    return g


def active_set_multipliers(problem: NlpProblem, x: np.ndarray,
                           tol_act: float = 1e-6) -> dict:
    """Non-negative least-squares fit of the KKT multipliers at x."""
    grad = problem.gradient(x) if problem.gradient else _fd_gradient(problem.objective, x)
    cols, keys = [], []
    if problem.constraints is not None:
        g = np.atleast_1d(problem.constraints(x))
        jac = (problem.constraints_jac(x) if problem.constraints_jac
               else _fd_jacobian(problem.constraints, x))
        for i in np.nonzero(g >= -tol_act)[0]:
            cols.append(jac[i])
            keys.append(("ineq", int(i)))
    scale = np.maximum(1.0, np.abs(x))
    for i in range(x.size):
        if x[i] - problem.lower[i] <= tol_act * scale[i]:
            e = np.zeros(x.size)
            e[i] = -1.0
            cols.append(e)
            keys.append(("lower", i))
        if problem.upper[i] - x[i] <= tol_act * scale[i]:
            e = np.zeros(x.size)
            e[i] = 1.0
            cols.append(e)
            keys.append(("upper", i))
    mult = {"ineq": {}, "lower": {}, "upper": {}, "gradient": grad}
    if cols:
        A = np.stack(cols, axis=1)
        lam, _ = optimize.nnls(A, -grad)
        for (kind, i), v in zip(keys, lam):
            mult[kind][i] = float(v)
    return mult


def kkt_residual(problem: NlpProblem, x: np.ndarray, multipliers: dict) -> float:
    """Infinity norm of the Lagrangian gradient implied by the multipliers."""
    grad = multipliers["gradient"].copy()
    if multipliers["ineq"]:
        jac = (problem.constraints_jac(x) if problem.constraints_jac
               else _fd_jacobian(problem.constraints, x))
        for i, lam in multipliers["ineq"].items():
            grad += lam * jac[i]
    for i, lam in multipliers["lower"].items():
        grad[i] -= lam
    for i, lam in multipliers["upper"].items():
        grad[i] += lam
    return float(np.max(np.abs(grad)))


def _fd_jacobian(fun, x, eps_scale=1e-7):
    f0 = np.atleast_1d(fun(x))
    J = np.empty((f0.size, x.size))
    for i in range(x.size):
        h = eps_scale * max(1.0, abs(x[i]))
        xp = x.copy()
        xp[i] += h
        J[:, i] = (np.atleast_1d(fun(xp)) - f0) / h
    return J


def solve_nlp(problem: NlpProblem) -> NlpResult:
    """Bound/inequality-constrained smooth minimisation.

    Dispatches to L-BFGS-B when only bounds are present, SLSQP otherwise.
    """
    bounds = list(zip(np.where(np.isfinite(problem.lower), problem.lower, None),
                      np.where(np.isfinite(problem.upper), problem.upper, None)))
    jac = problem.gradient
    if problem.constraints is None:
        res = optimize.minimize(
            problem.objective, problem.x0, jac=jac, method="L-BFGS-B", bounds=bounds,
            options={"maxiter": problem.max_iter, "ftol": problem.tol_obj,
                     "gtol": problem.tol_stat})
    else:
        # scipy's ineq convention is fun(x) >= 0; ours is g(x) <= 0.
        cons = {"type": "ineq", "fun": lambda x: -np.atleast_1d(problem.constraints(x))}
        if problem.constraints_jac is not None:
            cons["jac"] = lambda x: -np.atleast_2d(problem.constraints_jac(x))
        res = optimize.minimize(
            problem.objective, problem.x0, jac=jac, method="SLSQP", bounds=bounds,
            constraints=[cons],
            options={"maxiter": problem.max_iter, "ftol": problem.tol_obj})
    x = np.clip(res.x, problem.lower, problem.upper)
    violation = 0.0
    if problem.constraints is not None:
        violation = float(max(0.0, np.max(np.atleast_1d(problem.constraints(x)))))
    mult = active_set_multipliers(problem, x)
    resid = kkt_residual(problem, x, mult)
    if violation > problem.tol_feas:
        status = STATUS_INFEASIBLE if res.status == 4 or res.success else STATUS_MAX_ITERS
    elif res.success or resid <= problem.tol_stat:
        status = STATUS_OPTIMAL
    else:
        status = STATUS_MAX_ITERS
    return NlpResult(x=x, objective=float(problem.objective(x)), kkt_residual=resid,
                     status=status, n_iter=int(getattr(res, "nit", -1)),
                     constraint_violation=violation, multipliers=mult,
                     message=str(res.message))


@dataclass
class LpProblem:
    c: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    bounds: list | None = None    # per-variable (lo, hi); None entries mean free

    def __post_init__(self):
        self.c = np.atleast_1d(np.asarray(self.c, dtype=float))
        n = self.c.size
        if self.A_ub is None:
            self.A_ub = np.zeros((0, n))
            self.b_ub = np.zeros(0)
        else:
            self.A_ub = np.atleast_2d(np.asarray(self.A_ub, dtype=float))
            self.b_ub = np.atleast_1d(np.asarray(self.b_ub, dtype=float))
        if self.A_ub.shape != (self.b_ub.size, n):
            raise ValueError("A_ub/b_ub dimensions inconsistent with c")
        if self.bounds is None:
            self.bounds = [(None, None)] * n


@dataclass
class LpResult:
    x: np.ndarray | None
    value: float
    status: str
    ineq_duals: np.ndarray | None = None
    slacks: np.ndarray | None = None


def solve_lp(problem: LpProblem, A_eq=None, b_eq=None) -> LpResult:
    """Minimise c.x subject to A_ub x <= b_ub (and optional equalities)."""
    res = optimize.linprog(problem.c, A_ub=problem.A_ub if problem.A_ub.size else None,
                           b_ub=problem.b_ub if problem.b_ub.size else None,
                           A_eq=A_eq, b_eq=b_eq, bounds=problem.bounds,
                           method="highs")
    if res.status == 0:
        duals = res.ineqlin.marginals if problem.A_ub.size else np.zeros(0)
        slack = res.slack if problem.A_ub.size else np.zeros(0)
        return LpResult(res.x, float(res.fun), STATUS_OPTIMAL, duals, slack)
    if res.status == 3:
        return LpResult(None, -np.inf, STATUS_UNBOUNDED)
    return LpResult(None, np.nan, STATUS_INFEASIBLE)


def lp_complementarity_gap(result: LpResult) -> float:
    """max_i |dual_i * slack_i| for the inequality rows of an optimal LP."""
    if result.status != STATUS_OPTIMAL or result.ineq_duals is None:
        raise ValueError("complementarity gap requires an optimal result")
    if result.ineq_duals.size == 0:
        return 0.0
    return float(np.max(np.abs(result.ineq_duals * result.slacks)))
