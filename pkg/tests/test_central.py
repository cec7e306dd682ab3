import numpy as np
import pytest
from scipy.optimize import linprog

from microdispatch.admm import run_admm
from microdispatch.central import (PriceConditionError, build_saa_qp, solve_central_lmp, solve_central_saa,
                                   solve_central_saa_full)
from microdispatch.costs import net_cost
from microdispatch.model import PriceSchedule, Schedule
from microdispatch.windgen import build_scenarios


def balance_residual(sched, prob):
    return np.abs(sched.p_G.sum(axis=0) + sched.p_R - sched.p_D.sum(axis=0) - prob.demand).max()


def test_saa_balance_and_reported_objective(case, scenarios_50):
    sched, obj = solve_central_saa(case, scenarios_50)
    assert balance_residual(sched, case) <= 1e-6
    assert obj == pytest.approx(net_cost(sched, case, scenarios_50).net_cost, abs=1e-5)
    np.testing.assert_allclose(sched.p_R, 60.0, atol=1e-5)


def test_aux_caps_never_bind(case, scenarios_50):
    qp, _ = build_saa_qp(case, scenarios_50)
    _, _, sol = solve_central_saa_full(case, scenarios_50)
    n_aux = 8 * 50
    aux = sol.x[-n_aux:]
    assert np.all(qp.upper[-n_aux:] - aux >= 1.0 - 1e-6)
    assert np.all(sol.box_duals[-n_aux:, 1] <= 1e-8)


def test_zero_spread_equals_lmp(case, scenarios_50):
    prob = case.with_prices(case.prices.lmp())
    qp, _ = build_saa_qp(prob, scenarios_50)
    assert qp.n == 3 * 8 + 3 * 8 + 8  # no auxiliary variables
    _, saa = solve_central_saa(prob, scenarios_50)
    sched, lmp = solve_central_lmp(prob, scenarios_50.means)
    assert saa == pytest.approx(lmp, abs=1e-6)
    np.testing.assert_allclose(sched.p_R, 60.0, atol=1e-5)
    assert balance_residual(sched, prob) <= 1e-6


def test_lmp_mean_shift(case, scenarios_50):
    prob = case.with_prices(case.prices.lmp())
    c = 1.5
    s0, o0 = solve_central_lmp(prob, scenarios_50.means)
    s1, o1 = solve_central_lmp(prob, scenarios_50.means + c)
    assert o1 - o0 == pytest.approx(-float(prob.prices.alpha_array.sum()) * c * prob.n_farm, abs=1e-8)
    np.testing.assert_array_equal(s0.p_G, s1.p_G)
    np.testing.assert_array_equal(s0.p_R, s1.p_R)


def test_lmp_accepts_slot_totals(case, scenarios_50):
    prob = case.with_prices(case.prices.lmp())
    _, a = solve_central_lmp(prob, scenarios_50.means)
    _, b = solve_central_lmp(prob, scenarios_50.mean_total)
    assert a == pytest.approx(b, abs=1e-9)


def test_rejects_selling_above_purchase(case, scenarios_50):
    beta = list(case.prices.beta)
    beta[2] = case.prices.alpha[2] + 0.5
    bad = case.with_prices(PriceSchedule(case.prices.alpha, tuple(beta)))
    with pytest.raises(PriceConditionError, match="slot"):
        solve_central_saa(bad, scenarios_50)
    with pytest.raises(PriceConditionError):
        solve_central_lmp(case, scenarios_50.means)


def random_feasible_schedules(prob, rng, count):
    """Vertices of the feasible set picked out by random linear objectives."""
    M, N, T = prob.n_gen, prob.n_load, prob.horizon
    n = (M + N + 1) * T
    eq = np.hstack([np.tile(np.eye(T), M), -np.tile(np.eye(T), N), np.eye(T)])
    rows, rhs = [], []
    g_lo, g_hi = prob.gen_bounds()
    for m, g in enumerate(prob.generators):
        for t in range(T):
            r = np.zeros(n)
            r[m * T + t] = 1.0
            prev = prob.gen_anchor[m] if t == 0 else 0.0
            if t:
                r[m * T + t - 1] = -1.0
            rows += [r, -r]
            rhs += [prev + g.ramp_up, g.ramp_down - prev]
    for t in range(T):
        r = np.zeros(n)
        r[t:M * T:T] = 1.0
        rows.append(r)
        rhs.append(g_hi.sum() - prob.reserve[t])
    d_lo, d_hi = prob.load_bounds()
    bounds = ([(lo, hi) for lo, hi in zip(g_lo, g_hi) for _ in range(T)]
              + [(lo, hi) for lo, hi in zip(d_lo, d_hi) for _ in range(T)] + [(prob.p_r_min, prob.p_r_max)] * T)
    out = []
    while len(out) < count:
        res = linprog(rng.normal(size=n), A_ub=np.array(rows), b_ub=rhs, A_eq=eq, b_eq=prob.demand,
                      bounds=bounds, method="highs")
        assert res.status == 0
        x = res.x
        out.append(Schedule(x[:M * T].reshape(M, T), x[M * T:(M + N) * T].reshape(N, T), x[-T:]))
    return out


def test_lower_bound_sanity(case, scenarios_50):
    _, obj = solve_central_saa(case, scenarios_50)
    rng = np.random.default_rng(30)
    for sched in random_feasible_schedules(case, rng, 100):
        assert balance_residual(sched, case) <= 1e-6
        assert obj <= net_cost(sched, case, scenarios_50).net_cost + 1e-6


def test_matches_admm_on_ten_scenarios(case):
    sc = build_scenarios(case, 10, seed=4)
    _, central = solve_central_saa(case, sc)
    sched, _ = run_admm(case, sc)
    admm = net_cost(sched, case, sc).net_cost
    assert abs(admm - central) / max(1.0, abs(central)) <= 1e-3


def test_horizon_mismatch(case, scenarios_50):
    from microdispatch.windgen import scenarios_from_arrays
    short = scenarios_from_arrays(scenarios_50.aggregate[:, :4], scenarios_50.means[:, :4])
    with pytest.raises(ValueError, match="horizon"):
        solve_central_saa(case, short)
