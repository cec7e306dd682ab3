"""Centralized reference solvers built on :mod:`microdispatch.qpcore`.

``solve_central_saa`` writes the sample-average problem as one QP, with
auxiliary variables bounding each absolute wind deviation from above.
``solve_central_lmp`` handles equal purchase and selling prices, where the
transaction cost is linear in the scheduled wind.
"""

from __future__ import annotations

import numpy as np

from .admm import generation_constraints
from .costs import delta_gamma
from .model import DispatchProblem, Schedule
from .qpcore import QpProblem, QpSolution, require_optimal, solve_qp
from .windgen import ScenarioSet


class PriceConditionError(ValueError):
    pass


def _dispatch_blocks(problem: DispatchProblem, n_aux: int):
    """Objective and constraint blocks shared by both formulations.

    Variable layout: ``p_G`` (M*T, unit-major), ``p_D`` (N*T), ``p_R`` (T),
    then ``n_aux`` auxiliary variables.
    """
    M, N, T = problem.n_gen, problem.n_load, problem.horizon
    nG, nD = M * T, N * T
    n = nG + nD + T + n_aux
    a, b = problem.gen_coefficients()
    c, d = problem.load_coefficients()

    diag = np.zeros(n)
    diag[:nG] = 2.0 * a.ravel()
    diag[nG:nG + nD] = -2.0 * c.ravel()
    q = np.zeros(n)
    q[:nG] = b.ravel()
    q[nG:nG + nD] = -d.ravel()

    E = np.zeros((T, n))
    E[:, :nG] = np.tile(np.eye(T), M)
    E[:, nG:nG + nD] = -np.tile(np.eye(T), N)
    E[:, nG + nD:nG + nD + T] = np.eye(T)
    f = problem.demand.copy()

    A_gen, b_gen = generation_constraints(problem)
    A = np.zeros((A_gen.shape[0], n))
    A[:, :nG] = A_gen

    g_lo, g_hi = problem.gen_bounds()
    d_lo, d_hi = problem.load_bounds()
    lower = np.concatenate([np.repeat(g_lo, T), np.repeat(d_lo, T), np.full(T, problem.p_r_min), np.zeros(n_aux)])
    upper = np.concatenate([np.repeat(g_hi, T), np.repeat(d_hi, T), np.full(T, problem.p_r_max),
                            np.full(n_aux, np.inf)])
    return np.diag(diag), q, E, f, A, b_gen, lower, upper


def _unpack(problem: DispatchProblem, x: np.ndarray) -> Schedule:
    M, N, T = problem.n_gen, problem.n_load, problem.horizon
    nG, nD = M * T, N * T
    return Schedule(x[:nG].reshape(M, T).copy(), x[nG:nG + nD].reshape(N, T).copy(),
                    x[nG + nD:nG + nD + T].copy())


def build_saa_qp(problem: DispatchProblem, scenarios: ScenarioSet) -> tuple[QpProblem, float]:
    """Epigraph QP of the sample-average problem and its constant offset.

    Slots with zero price spread carry no absolute-value term and get no
    auxiliary variables.
    """
    T = problem.horizon
    delta, gamma = delta_gamma(problem.prices)
    slots = np.flatnonzero(delta > 0)
    ns = scenarios.n_samples
    n_aux = slots.size * ns
    Q, q, E, f, A, b, lower, upper = _dispatch_blocks(problem, n_aux)
    n = q.size
    r0 = n - n_aux - T

    q[r0:r0 + T] += gamma
    offset = -float(gamma @ scenarios.mean_total)

    rows = np.zeros((2 * n_aux, n))
    rhs = np.zeros(2 * n_aux)
    for j, t in enumerate(slots):
        w = scenarios.aggregate[:, t]
        idx = n - n_aux + j * ns + np.arange(ns)
        q[idx] = delta[t] / ns
        # p_R - u <= w  and  -p_R - u <= -w
        top = 2 * j * ns + np.arange(ns)
        bot = top + ns
        rows[top, r0 + t] = 1.0
        rows[top, idx] = -1.0
        rhs[top] = w
        rows[bot, r0 + t] = -1.0
        rows[bot, idx] = -1.0
        rhs[bot] = -w
        # a valid cap on |p_R - w| over the p_R box, plus slack to stay off the bound
        upper[idx] = np.maximum(problem.p_r_max - w, w - problem.p_r_min) + 1.0
    A = np.vstack([A, rows])
    b = np.concatenate([b, rhs])
    return QpProblem(Q, q, E, f, A, b, lower, upper), offset


def check_price_condition(problem: DispatchProblem) -> None:
    alpha, beta = problem.prices.alpha_array, problem.prices.beta_array
    bad = np.flatnonzero(beta > alpha)
    if bad.size:
        slots = ", ".join(str(t + 1) for t in bad)
        raise PriceConditionError(
            f"selling price exceeds purchase price at slot(s) {slots}; the transaction cost is not convex")


def solve_central_saa(problem: DispatchProblem, scenarios: ScenarioSet, tol: float = 1e-6,
                      max_iter: int = 100) -> tuple[Schedule, float]:
    """Solve the sample-average dispatch problem in one piece; returns (schedule, objective in cents)."""
    schedule, objective, _ = solve_central_saa_full(problem, scenarios, tol, max_iter)
    return schedule, objective


def solve_central_saa_full(problem: DispatchProblem, scenarios: ScenarioSet, tol: float = 1e-6,
                           max_iter: int = 100) -> tuple[Schedule, float, QpSolution]:
    check_price_condition(problem)
    if scenarios.horizon != problem.horizon:
        raise ValueError("scenario horizon does not match the problem")
    qp, offset = build_saa_qp(problem, scenarios)
    sol = require_optimal(solve_qp(qp, tol=tol, max_iter=max_iter), "centralized sample-average solve")
    return _unpack(problem, sol.x), sol.objective + offset, sol


def solve_central_lmp(problem: DispatchProblem, mean_wind: np.ndarray, tol: float = 1e-6,
                      max_iter: int = 100) -> tuple[Schedule, float]:
    """Equal-price case: the transaction cost is ``sum_t alpha_t (p_R_t - total mean wind_t)``.

    ``mean_wind`` is the per-farm ``(I, T)`` mean matrix or its per-slot total.
    """
    alpha, beta = problem.prices.alpha_array, problem.prices.beta_array
    if not np.array_equal(alpha, beta):
        raise PriceConditionError("equal-price solve needs beta == alpha in every slot")
    W = np.asarray(mean_wind, dtype=float)
    total = W.sum(axis=0) if W.ndim == 2 else W
    T = problem.horizon
    Q, q, E, f, A, b, lower, upper = _dispatch_blocks(problem, 0)
    q[-T:] += alpha
    qp = QpProblem(Q, q, E, f, A, b, lower, upper)
    sol = require_optimal(solve_qp(qp, tol=tol, max_iter=max_iter), "centralized equal-price solve")
    return _unpack(problem, sol.x), sol.objective - float(alpha @ total)
