"""Objective terms: generation cost, load utility, and wind transaction cost.

All values are in cents; energies in kWh per slot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DispatchProblem, GeneratorParams, LoadParams, PriceSchedule, Schedule
from .windgen import ScenarioSet


@dataclass(frozen=True)
class NetCostReport:
    generation_cost: float
    load_utility: float
    transaction_cost: float
    net_cost: float

    @classmethod
    def from_parts(cls, generation_cost: float, load_utility: float,
                   transaction_cost: float) -> NetCostReport:
        return cls(generation_cost, load_utility, transaction_cost,
                   generation_cost - load_utility + transaction_cost)


def gen_cost(g: GeneratorParams, p, t: int | None = None):
    """``a*p**2 + b*p``; ``t`` selects the slot when coefficients vary in time."""
    a, b = _pick(g.a, t), _pick(g.b, t)
    return a * p * p + b * p


def load_utility(l: LoadParams, p, t: int | None = None):
    c, d = _pick(l.c, t), _pick(l.d, t)
    return c * p * p + d * p


def _pick(coeff, t):
    if isinstance(coeff, tuple):
        if t is None:
            return np.asarray(coeff, dtype=float)
        return coeff[t]
    return coeff


def delta_gamma(prices: PriceSchedule) -> tuple[np.ndarray, np.ndarray]:
    """Half-spread and mid price: ``((alpha - beta)/2, (alpha + beta)/2)``."""
    alpha, beta = prices.alpha_array, prices.beta_array
    return (alpha - beta) / 2.0, (alpha + beta) / 2.0


def transaction_cost_sample(p_R, wind, prices: PriceSchedule) -> float:
    """Cost of settling one wind realization: shortfall bought at alpha, surplus sold at beta."""
    gap = np.asarray(p_R, dtype=float) - np.asarray(wind, dtype=float)
    shortfall = np.maximum(gap, 0.0)
    surplus = np.maximum(-gap, 0.0)
    return float(np.sum(prices.alpha_array * shortfall - prices.beta_array * surplus))


def transaction_cost_sample_abs(p_R, wind, prices: PriceSchedule) -> float:
    """Same quantity written as ``delta*|gap| + gamma*gap``."""
    delta, gamma = delta_gamma(prices)
    gap = np.asarray(p_R, dtype=float) - np.asarray(wind, dtype=float)
    return float(np.sum(delta * np.abs(gap) + gamma * gap))


def saa_transaction_cost(p_R, scenarios: ScenarioSet, prices: PriceSchedule) -> float:
    """Sample-average transaction cost.

    The absolute-deviation term averages over the scenario set; the linear
    term uses the separately estimated mean wind power.
    """
    p_R = np.asarray(p_R, dtype=float)
    delta, gamma = delta_gamma(prices)
    dev = np.abs(p_R[None, :] - scenarios.aggregate)
    # np.sum reduces the contiguous scenario axis pairwise
    spread = np.sum(np.ascontiguousarray(dev.T), axis=1) / scenarios.n_samples
    return float(np.dot(delta, spread) + np.dot(gamma, p_R - scenarios.mean_total))


def generation_cost_total(p_G: np.ndarray, problem: DispatchProblem) -> float:
    a, b = problem.gen_coefficients()
    return float(np.sum(a * p_G * p_G + b * p_G))


def utility_total(p_D: np.ndarray, problem: DispatchProblem) -> float:
    c, d = problem.load_coefficients()
    return float(np.sum(c * p_D * p_D + d * p_D))


def net_cost(schedule: Schedule, problem: DispatchProblem, scenarios: ScenarioSet) -> NetCostReport:
    M, N, T = problem.n_gen, problem.n_load, problem.horizon
    p_G, p_D, p_R = (np.asarray(x, dtype=float) for x in (schedule.p_G, schedule.p_D, schedule.p_R))
    if p_G.shape != (M, T) or p_D.shape != (N, T) or p_R.shape != (T,):
        raise ValueError(f"schedule shapes {p_G.shape}, {p_D.shape}, {p_R.shape} do not match "
                         f"problem dimensions M={M}, N={N}, T={T}")
    if scenarios.horizon != T:
        raise ValueError(f"scenario horizon {scenarios.horizon} does not match problem horizon {T}")
    return NetCostReport.from_parts(
        generation_cost_total(p_G, problem),
        utility_total(p_D, problem),
        saa_transaction_cost(p_R, scenarios, problem.prices),
    )
