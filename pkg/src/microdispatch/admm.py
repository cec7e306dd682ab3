"""Decentralized dispatch by three-block ADMM.

Three local controllers (generation, elastic loads, scheduled wind) take
turns minimizing the partially augmented Lagrangian over their own
variables, each broadcasting its new block before the next one acts.
The wind controller then moves the balance multipliers by a dual
gradient step. The loop stops once the Euclidean norm of the slotwise
supply-demand imbalance falls below ``eps_res``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .costs import delta_gamma, net_cost
from .model import DispatchProblem, Schedule
from .qpcore import QpProblem, require_optimal, solve_qp
from .windgen import ScenarioSet


class InitStrategy(str, Enum):
    LOWER_BOUNDS = "lower_bounds"
    BOX_MIDPOINT = "box_midpoint"
    CUSTOM = "custom"


@dataclass(frozen=True)
class AdmmConfig:
    rho: float = 1.0
    nu: float = 0.5
    eps_res: float = 1e-2
    max_iters: int = 500
    init_strategy: InitStrategy = InitStrategy.LOWER_BOUNDS
    initial: Schedule | None = None
    qp_tol: float = 1e-9

    def __post_init__(self) -> None:
        object.__setattr__(self, "init_strategy", InitStrategy(self.init_strategy))
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.nu < 0:
            raise ValueError("nu must be nonnegative")
        if self.eps_res <= 0:
            raise ValueError("eps_res must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.init_strategy is InitStrategy.CUSTOM and self.initial is None:
            raise ValueError("custom initialization needs an initial schedule")


class Agent(str, Enum):
    GEN = "GEN"
    LOAD = "LOAD"
    RES = "RES"
    DUAL = "DUAL"


_ROUND = (Agent.GEN, Agent.LOAD, Agent.RES, Agent.DUAL)


@dataclass(frozen=True)
class Message:
    sender: Agent
    k: int
    payload: np.ndarray


class BusOrderError(RuntimeError):
    pass


class MessageBus:
    """Broadcast channel shared by the local controllers.

    Enforces the per-iteration delivery order GEN, LOAD, RES, DUAL and keeps
    the full message log. Payloads are stored read-only.
    """

    def __init__(self) -> None:
        self.log: list[Message] = []
        self._latest: dict[Agent, np.ndarray] = {}
        self._pos = 0
        self._k = 1

    def broadcast(self, sender: Agent, k: int, payload: np.ndarray) -> None:
        expected = _ROUND[self._pos]
        if sender is not expected or k != self._k:
            raise BusOrderError(f"expected {expected.value} at iteration {self._k}, got {sender.value} at {k}")
        data = np.array(payload, dtype=float, copy=True)
        data.setflags(write=False)
        self.log.append(Message(sender, k, data))
        self._latest[sender] = data
        self._pos = (self._pos + 1) % len(_ROUND)
        if self._pos == 0:
            self._k += 1

    def latest(self, sender: Agent) -> np.ndarray:
        return self._latest[sender]

    def messages(self, k: int) -> list[Message]:
        return [m for m in self.log if m.k == k]


@dataclass(frozen=True)
class TraceRecord:
    k: int
    net_cost: float
    xi: float
    lam: np.ndarray
    p_G: np.ndarray
    p_D: np.ndarray
    p_R: np.ndarray


class AdmmStatus(str, Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"


@dataclass
class AdmmState:
    k: int
    lam: np.ndarray
    p_G: np.ndarray
    p_D: np.ndarray
    p_R: np.ndarray
    xi: float = float("inf")
    trace: list[TraceRecord] = field(default_factory=list)
    status: AdmmStatus = AdmmStatus.MAX_ITER

    def schedule(self) -> Schedule:
        return Schedule(self.p_G.copy(), self.p_D.copy(), self.p_R.copy())


def initial_state(problem: DispatchProblem, config: AdmmConfig) -> AdmmState:
    T = problem.horizon
    g_lo, g_hi = problem.gen_bounds()
    d_lo, d_hi = problem.load_bounds()
    if config.init_strategy is InitStrategy.CUSTOM:
        init = config.initial
        p_G, p_D, p_R = (np.array(v, dtype=float) for v in (init.p_G, init.p_D, init.p_R))
    elif config.init_strategy is InitStrategy.BOX_MIDPOINT:
        p_G = np.repeat(((g_lo + g_hi) / 2)[:, None], T, axis=1)
        p_D = np.repeat(((d_lo + d_hi) / 2)[:, None], T, axis=1)
        p_R = np.full(T, (problem.p_r_min + problem.p_r_max) / 2)
    else:
        p_G = np.repeat(g_lo[:, None], T, axis=1)
        p_D = np.repeat(d_lo[:, None], T, axis=1)
        p_R = np.full(T, problem.p_r_min)
    return AdmmState(k=0, lam=np.zeros(T), p_G=p_G, p_D=p_D, p_R=p_R)


def _slot_sum(n_units: int, T: int) -> np.ndarray:
    return np.tile(np.eye(T), n_units)


@functools.lru_cache(maxsize=16)
def generation_constraints(problem: DispatchProblem) -> tuple[np.ndarray, np.ndarray]:
    """Ramp and reserve rows ``A x <= b`` over ``p_G`` flattened unit-major."""
    M, T = problem.n_gen, problem.horizon
    anchor = problem.gen_anchor
    rows, rhs = [], []
    for m, g in enumerate(problem.generators):
        for t in range(T):
            up = np.zeros(M * T)
            up[m * T + t] = 1.0
            if t == 0:
                rows += [up, -up]
                rhs += [g.ramp_up + anchor[m], g.ramp_down - anchor[m]]
            else:
                up[m * T + t - 1] = -1.0
                rows += [up, -up]
                rhs += [g.ramp_up, g.ramp_down]
    _, g_hi = problem.gen_bounds()
    S = _slot_sum(M, T)
    A = np.vstack([np.array(rows), S])
    b = np.concatenate([np.array(rhs), g_hi.sum() - problem.reserve])
    return A, b


def update_generation(state: AdmmState, problem: DispatchProblem, config: AdmmConfig) -> np.ndarray:
    """Generation block: exact minimizer over boxes, ramps and reserve."""
    M, T = problem.n_gen, problem.horizon
    a, b = problem.gen_coefficients()
    coupling = state.p_R - state.p_D.sum(axis=0) - problem.demand
    S = _slot_sum(M, T)
    Q = np.diag(2.0 * a.ravel()) + config.rho * S.T @ S
    q = b.ravel() + np.tile(state.lam + config.rho * coupling, M)
    g_lo, g_hi = problem.gen_bounds()
    A, rhs = generation_constraints(problem)
    qp = QpProblem(Q, q, A=A, b=rhs, lower=np.repeat(g_lo, T), upper=np.repeat(g_hi, T))
    sol = require_optimal(solve_qp(qp, tol=config.qp_tol), f"generation update at iteration {state.k + 1}")
    return sol.x.reshape(M, T)


def update_loads(state: AdmmState, problem: DispatchProblem, config: AdmmConfig) -> np.ndarray:
    """Elastic-load block: exact minimizer of negative utility plus coupling terms over the boxes."""
    N, T = problem.n_load, problem.horizon
    c, d = problem.load_coefficients()
    supply = state.p_G.sum(axis=0) + state.p_R - problem.demand
    S = _slot_sum(N, T)
    Q = np.diag(-2.0 * c.ravel()) + config.rho * S.T @ S
    q = -d.ravel() - np.tile(state.lam + config.rho * supply, N)
    d_lo, d_hi = problem.load_bounds()
    qp = QpProblem(Q, q, lower=np.repeat(d_lo, T), upper=np.repeat(d_hi, T))
    sol = require_optimal(solve_qp(qp, tol=config.qp_tol), f"load update at iteration {state.k + 1}")
    return sol.x.reshape(N, T)


def piecewise_prox_1d(weights: Sequence[float], breakpoints: Sequence[float], lin: float, quad: float,
                      center: float, lower: float, upper: float) -> float:
    """Smallest minimizer on ``[lower, upper]`` of

        sum_s w_s |x - b_s| + lin * x + quad/2 * (x - center)**2.

    The right derivative is nondecreasing and piecewise affine between
    breakpoints, so the answer is the first point where it turns
    nonnegative: a box end, a breakpoint, or a stationary point inside
    one segment.
    """
    if upper < lower:
        raise ValueError("upper must not be below lower")
    w = np.asarray(weights, dtype=float)
    bp = np.asarray(breakpoints, dtype=float)
    order = np.argsort(bp, kind="stable")
    bp, w = bp[order], w[order]
    cum = np.concatenate([[0.0], np.cumsum(w)])
    total = cum[-1]

    def right_slope(x):
        left = cum[np.searchsorted(bp, x, side="right")]
        return 2.0 * left - total + lin + quad * (x - center)

    inner = bp[(bp > lower) & (bp < upper)]
    pts = np.concatenate([[lower], inner, [upper]])
    slopes = right_slope(pts)
    hit = np.flatnonzero(slopes >= 0.0)
    if hit.size == 0:
        return float(upper)
    j = int(hit[0])
    if j == 0:
        return float(lower)
    # slope on [pts[j-1], pts[j]) is slopes[j-1] + quad*(x - pts[j-1])
    if quad > 0:
        root = pts[j - 1] - slopes[j - 1] / quad
        if root < pts[j]:
            return float(max(root, pts[j - 1]))
    return float(pts[j])


def update_wind_schedule(state: AdmmState, problem: DispatchProblem, scenarios: ScenarioSet,
                         config: AdmmConfig) -> np.ndarray:
    """Scheduled-wind block, separable across slots."""
    delta, gamma = delta_gamma(problem.prices)
    center = problem.demand + state.p_D.sum(axis=0) - state.p_G.sum(axis=0)
    n = scenarios.n_samples
    out = np.empty(problem.horizon)
    for t in range(problem.horizon):
        out[t] = piecewise_prox_1d(
            np.full(n, delta[t] / n), scenarios.aggregate[:, t], gamma[t] + state.lam[t],
            config.rho, center[t], problem.p_r_min, problem.p_r_max)
    return out


def dual_ascent(lam: np.ndarray, nu: float, imbalance: np.ndarray) -> np.ndarray:
    return np.asarray(lam, dtype=float) + nu * np.asarray(imbalance, dtype=float)


def slot_imbalance(p_G: np.ndarray, p_D: np.ndarray, p_R: np.ndarray, L: np.ndarray) -> np.ndarray:
    return np.asarray(p_G).sum(axis=0) + np.asarray(p_R) - np.asarray(p_D).sum(axis=0) - np.asarray(L)


def primal_residual(p_G: np.ndarray, p_D: np.ndarray, p_R: np.ndarray, L: np.ndarray) -> float:
    return float(np.linalg.norm(slot_imbalance(p_G, p_D, p_R, L)))


def run_admm(problem: DispatchProblem, scenarios: ScenarioSet, config: AdmmConfig | None = None,
             bus: MessageBus | None = None) -> tuple[Schedule, AdmmState]:
    """Run the decentralized solver until the primal residual drops below ``eps_res``.

    Hitting ``max_iters`` is not an error: the returned state has status
    ``max_iter`` and a complete trace.
    """
    config = config or AdmmConfig()
    if scenarios.n_samples < 1:
        raise ValueError("scenario set is empty")
    bus = bus if bus is not None else MessageBus()
    state = initial_state(problem, config)
    L = problem.demand

    for k in range(1, config.max_iters + 1):
        bus.broadcast(Agent.GEN, k, update_generation(state, problem, config))
        state.p_G = bus.latest(Agent.GEN)
        bus.broadcast(Agent.LOAD, k, update_loads(state, problem, config))
        state.p_D = bus.latest(Agent.LOAD)
        bus.broadcast(Agent.RES, k, update_wind_schedule(state, problem, scenarios, config))
        state.p_R = bus.latest(Agent.RES)
        imbalance = slot_imbalance(state.p_G, state.p_D, state.p_R, L)
        bus.broadcast(Agent.DUAL, k, dual_ascent(state.lam, config.nu, imbalance))
        state.lam = bus.latest(Agent.DUAL)
        state.k = k
        state.xi = float(np.linalg.norm(imbalance))
        report = net_cost(state.schedule(), problem, scenarios)
        state.trace.append(TraceRecord(k, report.net_cost, state.xi, state.lam, state.p_G, state.p_D, state.p_R))
        if state.xi <= config.eps_res:
            state.status = AdmmStatus.CONVERGED
            break
    return state.schedule(), state
