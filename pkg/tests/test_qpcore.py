import numpy as np
import pytest

from microdispatch.qpcore import QpProblem, QpSolution, QpStatus, kkt_residuals, solve_qp

from oracles import projected_gradient_box

CLAMP = QpProblem([[2.0]], [-6.0], lower=[0.0], upper=[2.0])


def random_feasible_qp(rng, n, with_general=True):
    B = rng.normal(size=(n, n))
    Q = B @ B.T * rng.uniform(0.0, 1.0)
    if rng.random() < 0.15:
        Q = np.zeros((n, n))
    q = rng.normal(size=n) * 5
    x0 = rng.uniform(-1, 1, n)
    lower = x0 - rng.uniform(0.1, 2, n)
    upper = x0 + rng.uniform(0.1, 2, n)
    if not with_general:
        return QpProblem(Q, q, lower=lower, upper=upper)
    p = int(rng.integers(0, min(3, n)))
    E = rng.normal(size=(p, n))
    m = int(rng.integers(0, 6))
    A = rng.normal(size=(m, n))
    return QpProblem(Q, q, E, E @ x0, A, A @ x0 + rng.uniform(0, 1, m), lower, upper)


def test_clamped_scalar():
    sol = solve_qp(CLAMP)
    assert sol.status is QpStatus.OPTIMAL
    assert sol.x[0] == pytest.approx(2.0, abs=1e-9)


def test_equality_symmetric():
    sol = solve_qp(QpProblem(np.eye(2), [0.0, 0.0], E=[[1.0, 1.0]], f=[2.0]))
    np.testing.assert_allclose(sol.x, [1.0, 1.0], atol=1e-9)
    np.testing.assert_allclose(sol.eq_duals, [-1.0], atol=1e-9)


def test_kkt_exact_solution():
    exact = QpSolution(np.array([2.0]), np.zeros(0), np.zeros(0), np.array([[0.0, 2.0]]),
                       QpStatus.OPTIMAL, None)
    assert kkt_residuals(CLAMP, exact).worst() <= 1e-12


def test_kkt_perturbed_in_binding_direction():
    moved = QpSolution(np.array([2.001]), np.zeros(0), np.zeros(0), np.array([[0.0, 2.0]]),
                       QpStatus.OPTIMAL, None)
    rep = kkt_residuals(CLAMP, moved)
    assert rep.box == pytest.approx(1e-3, rel=1e-6)


def test_kkt_suboptimal_feasible():
    sub = QpSolution(np.array([1.5]), np.zeros(0), np.zeros(0), np.zeros((1, 2)), QpStatus.OPTIMAL, None)
    rep = kkt_residuals(CLAMP, sub)
    assert rep.stationarity > 1e-6
    assert rep.primal == 0.0


def test_general_inequality_duals():
    # min (x-3)^2 + (y-3)^2 s.t. x + y <= 2 -> (1, 1), multiplier 4
    sol = solve_qp(QpProblem(2 * np.eye(2), [-6.0, -6.0], A=[[1.0, 1.0]], b=[2.0]))
    np.testing.assert_allclose(sol.x, [1.0, 1.0], atol=1e-9)
    np.testing.assert_allclose(sol.ineq_duals, [4.0], atol=1e-8)


def test_random_qps_certified():
    rng = np.random.default_rng(10)
    for _ in range(100):
        p = random_feasible_qp(rng, int(rng.integers(1, 11)))
        sol = solve_qp(p, tol=1e-6)
        assert sol.ok, sol.message
        assert kkt_residuals(p, sol).within(1e-6)
        assert np.all(sol.ineq_duals >= -1e-9) and np.all(sol.box_duals >= -1e-9)


def test_box_only_matches_projected_gradient():
    rng = np.random.default_rng(11)
    for _ in range(30):
        n = int(rng.integers(1, 9))
        B = rng.normal(size=(n, n))
        Q = B @ B.T / n + 0.5 * np.eye(n)
        q = rng.normal(size=n) * 3
        lo, up = -rng.uniform(0.1, 2, n), rng.uniform(0.1, 2, n)
        sol = solve_qp(QpProblem(Q, q, lower=lo, upper=up))
        ref = projected_gradient_box(Q, q, lo, up, tol=1e-13)
        np.testing.assert_allclose(sol.x, ref, atol=1e-6)


def test_beats_random_feasible_points():
    rng = np.random.default_rng(12)
    for _ in range(20):
        n = int(rng.integers(1, 6))
        B = rng.normal(size=(n, n))
        Q = B @ B.T
        q = rng.normal(size=n)
        A = rng.normal(size=(3, n))
        b = A @ np.zeros(n) + rng.uniform(0.2, 1.0, 3)
        p = QpProblem(Q, q, A=A, b=b, lower=-np.ones(n), upper=np.ones(n))
        sol = solve_qp(p)
        best = p.objective(sol.x)
        found = 0
        while found < 100:
            x = rng.uniform(-1, 1, n)
            if np.all(A @ x <= b):
                found += 1
                assert best <= p.objective(x) + 1e-9


def test_scaling_invariance():
    rng = np.random.default_rng(13)
    for _ in range(20):
        p = random_feasible_qp(rng, int(rng.integers(2, 9)))
        if not p.Q.any():
            continue
        base = solve_qp(p, tol=1e-6)
        for k in (0.01, 100.0):
            # scaled objective, same argmin when unique (strictly convex case)
            if np.linalg.eigvalsh(p.Q).min() < 1e-3:
                continue
            np.testing.assert_allclose(solve_qp(p.scaled(k), tol=1e-6).x, base.x, atol=1e-5)


def test_deterministic():
    rng = np.random.default_rng(14)
    p = random_feasible_qp(rng, 8)
    a, b = solve_qp(p), solve_qp(p)
    assert a.x.tobytes() == b.x.tobytes()
    assert a.ineq_duals.tobytes() == b.ineq_duals.tobytes()


def test_infeasible_detected():
    sol = solve_qp(QpProblem([[1.0]], [0.0], A=[[1.0]], b=[-1.0], lower=[0.0], upper=[10.0]))
    assert sol.status is QpStatus.INFEASIBLE
    assert "infeasib" in sol.message


def test_iteration_cap_reports_best_iterate():
    rng = np.random.default_rng(15)
    p = random_feasible_qp(rng, 8)
    sol = solve_qp(p, max_iter=2)
    assert sol.status is QpStatus.MAX_ITER
    assert sol.kkt == kkt_residuals(p, sol)


def test_unconstrained_and_equality_only():
    sol = solve_qp(QpProblem(np.diag([2.0, 4.0]), [-2.0, -4.0]))
    np.testing.assert_allclose(sol.x, [1.0, 1.0])
    assert sol.ok


@pytest.mark.parametrize("Q, msg", [([[1.0, 0.0], [0.0, -1.0]], "positive semidefinite"),
                                    ([[1.0, 2.0], [2.0, 1.0]], "positive semidefinite")])
def test_rejects_indefinite(Q, msg):
    with pytest.raises(ValueError, match=msg):
        QpProblem(Q, [0.0, 0.0])


def test_rejects_crossed_bounds():
    with pytest.raises(ValueError, match="lower bound exceeds"):
        QpProblem([[1.0]], [0.0], lower=[1.0], upper=[0.0])
