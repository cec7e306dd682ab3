"""Dense convex QP kernel.

Solves::

    minimize    0.5 x'Qx + q'x
    subject to  E x = f,  A x <= b,  lower <= x <= upper

with a Mehrotra predictor-corrector primal-dual interior-point method.
Box bounds are kept apart from the general inequalities so that they
only touch the diagonal of the reduced Newton matrix. Every returned
solution carries a KKT residual report computed from the original data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class QpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITER = "max_iter"


class QpError(RuntimeError):
    """Raised by callers that need an optimal solve and did not get one."""

    def __init__(self, message: str, solution: QpSolution | None = None):
        super().__init__(message)
        self.solution = solution


@dataclass
class QpProblem:
    Q: np.ndarray
    q: np.ndarray
    E: np.ndarray | None = None
    f: np.ndarray | None = None
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.q = np.asarray(self.q, dtype=float).ravel()
        n = self.q.size
        Q = np.asarray(self.Q, dtype=float).reshape(n, n)
        self.Q = (Q + Q.T) / 2.0
        self.E = np.zeros((0, n)) if self.E is None else np.asarray(self.E, dtype=float).reshape(-1, n)
        self.f = np.zeros(0) if self.f is None else np.asarray(self.f, dtype=float).ravel()
        self.A = np.zeros((0, n)) if self.A is None else np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b = np.zeros(0) if self.b is None else np.asarray(self.b, dtype=float).ravel()
        self.lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float).ravel()
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).ravel()
        if self.f.size != self.E.shape[0]:
            raise ValueError("equality matrix and right-hand side disagree in length")
        if self.b.size != self.A.shape[0]:
            raise ValueError("inequality matrix and right-hand side disagree in length")
        if self.lower.size != n or self.upper.size != n:
            raise ValueError("bounds must have one entry per variable")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        scale = np.abs(self.Q).max() if n else 0.0
        off = self.Q - np.diag(np.diag(self.Q))
        if not off.any():
            min_eig = np.diag(self.Q).min() if n else 0.0
        else:
            min_eig = np.linalg.eigvalsh(self.Q).min()
        if min_eig < -1e-8 * max(scale, 1.0):
            raise ValueError(f"quadratic term is not positive semidefinite (min eigenvalue {min_eig:.3e})")

    @property
    def n(self) -> int:
        return self.q.size

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.Q @ x + self.q @ x)

    def scaled(self, k: float) -> QpProblem:
        return QpProblem(k * self.Q, k * self.q, self.E, self.f, self.A, self.b, self.lower, self.upper)


@dataclass(frozen=True)
class KktReport:
    """Infinity norms of the KKT conditions at a candidate primal-dual point."""

    stationarity: float
    equality: float
    inequality: float
    box: float
    complementarity: float

    @property
    def primal(self) -> float:
        return max(self.equality, self.inequality, self.box)

    def worst(self) -> float:
        return max(self.stationarity, self.equality, self.inequality, self.box, self.complementarity)

    def within(self, tol: float) -> bool:
        return self.worst() <= tol


@dataclass
class QpSolution:
    x: np.ndarray
    eq_duals: np.ndarray
    ineq_duals: np.ndarray
    box_duals: np.ndarray  # (n, 2): columns are lower-bound and upper-bound multipliers
    status: QpStatus
    kkt: KktReport
    iterations: int = 0
    message: str = ""
    objective: float = field(default=float("nan"))

    @property
    def ok(self) -> bool:
        return self.status is QpStatus.OPTIMAL


def _norm_inf(v: np.ndarray) -> float:
    return float(np.abs(v).max()) if v.size else 0.0


def kkt_residuals(p: QpProblem, sol: QpSolution) -> KktReport:
    """KKT residuals of ``sol`` for ``p``, recomputed from the problem data."""
    x = np.asarray(sol.x, dtype=float)
    y = np.asarray(sol.eq_duals, dtype=float)
    z = np.asarray(sol.ineq_duals, dtype=float)
    zb = np.asarray(sol.box_duals, dtype=float).reshape(p.n, 2)
    zl = np.where(np.isfinite(p.lower), zb[:, 0], 0.0)
    zu = np.where(np.isfinite(p.upper), zb[:, 1], 0.0)

    grad = p.Q @ x + p.q + p.E.T @ y + p.A.T @ z + zu - zl
    ineq_gap = p.A @ x - p.b
    lo_gap = np.where(np.isfinite(p.lower), p.lower - x, -np.inf)
    up_gap = np.where(np.isfinite(p.upper), x - p.upper, -np.inf)
    box_viol = np.maximum(np.maximum(lo_gap, up_gap), 0.0)

    comp = [np.abs(z * ineq_gap)]
    fin_l, fin_u = np.isfinite(p.lower), np.isfinite(p.upper)
    comp.append(np.abs(zl[fin_l] * (x[fin_l] - p.lower[fin_l])))
    comp.append(np.abs(zu[fin_u] * (p.upper[fin_u] - x[fin_u])))
    # negative multipliers count as a complementarity/sign violation
    comp.append(np.maximum(-np.concatenate([z, zl[fin_l], zu[fin_u]]), 0.0))

    return KktReport(
        stationarity=_norm_inf(grad),
        equality=_norm_inf(p.E @ x - p.f),
        inequality=_norm_inf(np.maximum(ineq_gap, 0.0)),
        box=_norm_inf(box_viol),
        complementarity=max((_norm_inf(c) for c in comp), default=0.0),
    )


def _solve_kkt(H: np.ndarray, E: np.ndarray, rx: np.ndarray, ry: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, p = H.shape[0], E.shape[0]
    if p == 0:
        try:
            return np.linalg.solve(H, rx), np.zeros(0)
        except np.linalg.LinAlgError:
            return np.linalg.lstsq(H, rx, rcond=None)[0], np.zeros(0)
    K = np.zeros((n + p, n + p))
    K[:n, :n] = H
    K[:n, n:] = E.T
    K[n:, :n] = E
    rhs = np.concatenate([rx, ry])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:n], sol[n:]


def _max_step(v: np.ndarray, dv: np.ndarray) -> float:
    neg = dv < 0
    if not neg.any():
        return 1.0
    return float(min(1.0, np.min(-v[neg] / dv[neg])))


def _starting_point(p: QpProblem, x0: np.ndarray | None) -> np.ndarray:
    if x0 is not None:
        x = np.asarray(x0, dtype=float).copy()
    else:
        x = np.zeros(p.n)
    lo, up = p.lower, p.upper
    both = np.isfinite(lo) & np.isfinite(up)
    lo_f, up_f = np.where(both, lo, 0.0), np.where(both, up, 0.0)
    width = up_f - lo_f
    x = np.where(both, np.clip(x, lo_f + 0.25 * width, up_f - 0.25 * width), x)
    only_lo = np.isfinite(lo) & ~np.isfinite(up)
    only_up = np.isfinite(up) & ~np.isfinite(lo)
    x = np.where(only_lo, np.maximum(x, lo + 1.0), x)
    x = np.where(only_up, np.minimum(x, up - 1.0), x)
    return x


def solve_qp(p: QpProblem, tol: float = 1e-6, max_iter: int = 100,
             x0: np.ndarray | None = None) -> QpSolution:
    """Solve ``p`` to KKT tolerance ``tol`` (absolute, infinity norm).

    Returns a :class:`QpSolution` whose status is ``optimal`` only when the
    recomputed KKT residuals are all within ``tol``. Infeasibility is
    flagged when the multipliers diverge while the primal residual stalls.
    """
    n = p.n
    # iterate on a unit-scale objective so k*(Q, q) runs the same path as (Q, q)
    obj_scale = max(_norm_inf(p.Q), _norm_inf(p.q)) or 1.0
    Q, q, E, f, A, b = p.Q / obj_scale, p.q / obj_scale, p.E, p.f, p.A, p.b
    iu = np.flatnonzero(np.isfinite(p.upper))
    il = np.flatnonzero(np.isfinite(p.lower))
    mA, mu_, ml = A.shape[0], iu.size, il.size
    m = mA + mu_ + ml
    inner_tol = 0.1 * tol / max(1.0, obj_scale)

    x = _starting_point(p, x0)
    y = np.zeros(E.shape[0])

    def pack(zA, zu, zl):
        zb = np.zeros((n, 2))
        zb[il, 0] = zl
        zb[iu, 1] = zu
        return zb

    if m == 0:
        dx, y = _solve_kkt(Q, E, -(Q @ x + q), -(E @ x - f))
        x = x + dx
        y = y * obj_scale
        sol = QpSolution(x, y, np.zeros(0), np.zeros((n, 2)), QpStatus.OPTIMAL,
                         KktReport(0, 0, 0, 0, 0), iterations=1)
        sol.kkt = kkt_residuals(p, sol)
        if not sol.kkt.within(tol):
            sol.status = QpStatus.MAX_ITER
            sol.message = "equality-constrained system solved inexactly"
        sol.objective = p.objective(x)
        return sol

    def G_dot(v):
        return np.concatenate([A @ v, v[iu], -v[il]])

    def GT_dot(w):
        out = A.T @ w[:mA]
        np.add.at(out, iu, w[mA:mA + mu_])
        np.subtract.at(out, il, w[mA + mu_:])
        return out

    h = np.concatenate([b, p.upper[iu], -p.lower[il]])
    s = h - G_dot(x)
    s = np.maximum(s, 1.0)
    z = np.ones(m)
    scale = 1.0 + max(_norm_inf(q), _norm_inf(Q), _norm_inf(h), _norm_inf(f))

    status, message = QpStatus.MAX_ITER, f"iteration limit {max_iter} reached"
    it = 0
    for it in range(1, max_iter + 1):
        rd = Q @ x + q + E.T @ y + GT_dot(z)
        rp = E @ x - f
        ri = G_dot(x) + s - h
        mu = float(s @ z) / m

        if (_norm_inf(rd) <= inner_tol and _norm_inf(rp) <= inner_tol and _norm_inf(ri) <= inner_tol
                and float(np.max(s * z)) <= inner_tol):
            status, message = QpStatus.OPTIMAL, ""
            break
        dual_size = max(_norm_inf(z), _norm_inf(y))
        if it > 10 and dual_size > 1e10 * scale and max(_norm_inf(rp), _norm_inf(ri)) > tol:
            status = QpStatus.INFEASIBLE
            w_eq, w_in = y / dual_size, z / dual_size
            ray = _norm_inf(E.T @ w_eq + GT_dot(w_in))
            gap = float(f @ w_eq + h @ w_in)
            message = (f"multipliers diverge (|dual| = {dual_size:.2e}) while primal residual stalls at "
                       f"{max(_norm_inf(rp), _norm_inf(ri)):.2e}; normalized Farkas ray residual {ray:.2e}, "
                       f"certificate value {gap:.2e} (< 0 proves infeasibility)")
            break

        w = z / s
        Hd = np.zeros(n)
        np.add.at(Hd, iu, w[mA:mA + mu_])
        np.add.at(Hd, il, w[mA + mu_:])
        H = Q + (A.T * w[:mA]) @ A + np.diag(Hd)

        def direction(rc):
            rhs = -rd - GT_dot(w * ri - rc / s)
            dx, dy = _solve_kkt(H, E, rhs, -rp)
            Gdx = G_dot(dx)
            dz = w * (Gdx + ri) - rc / s
            ds = -ri - Gdx
            return dx, dy, dz, ds

        # predictor
        rc = s * z
        dx, dy, dz, ds = direction(rc)
        a_aff = min(_max_step(s, ds), _max_step(z, dz))
        mu_aff = float((s + a_aff * ds) @ (z + a_aff * dz)) / m
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        # corrector
        rc = s * z + ds * dz - sigma * mu
        dx, dy, dz, ds = direction(rc)
        step = min(1.0, 0.99 * min(_max_step(s, ds), _max_step(z, dz)))
        x = x + step * dx
        y = y + step * dy
        z = z + step * dz
        s = s + step * ds

    y, zs = y * obj_scale, z * obj_scale
    sol = QpSolution(x, y, zs[:mA].copy(), pack(zs[:mA], zs[mA:mA + mu_], zs[mA + mu_:]), status,
                     KktReport(0, 0, 0, 0, 0), iterations=it, message=message)
    sol.kkt = kkt_residuals(p, sol)
    if status is QpStatus.OPTIMAL:
        polished = _polish(p, sol, s, z, iu, il)
        if polished is not None:
            sol = polished
    if sol.status is QpStatus.OPTIMAL and not sol.kkt.within(tol):
        sol.status = QpStatus.MAX_ITER
        sol.message = f"interior-point iterate converged but KKT check failed (worst {sol.kkt.worst():.2e})"
    sol.objective = p.objective(sol.x)
    return sol


def _polish(p: QpProblem, sol: QpSolution, s: np.ndarray, z: np.ndarray,
            iu: np.ndarray, il: np.ndarray) -> QpSolution | None:
    """Re-solve with the interior-point active set held as equalities.

    Accepted only if the result is primal-dual feasible and its KKT
    residuals beat the interior-point iterate.
    """
    n, mA, mu_ = p.n, p.A.shape[0], iu.size
    active = z > s
    actA = np.flatnonzero(active[:mA])
    actU = iu[active[mA:mA + mu_]]
    actL = il[active[mA + mu_:]]
    if np.intersect1d(actU, actL).size:
        fixed = np.intersect1d(actU, actL)
        actL = np.setdiff1d(actL, fixed)
    rows = [p.E, p.A[actA], np.eye(n)[actU], -np.eye(n)[actL]]
    C = np.vstack(rows)
    rhs_c = np.concatenate([p.f, p.b[actA], p.upper[actU], -p.lower[actL]])
    k = C.shape[0]
    K = np.zeros((n + k, n + k))
    K[:n, :n] = p.Q
    K[:n, n:] = C.T
    K[n:, :n] = C
    try:
        sol_vec = np.linalg.solve(K, np.concatenate([-p.q, rhs_c]))
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(sol_vec)):
        return None
    x = sol_vec[:n]
    mult = sol_vec[n:]
    pe, na = p.E.shape[0], actA.size
    y = mult[:pe]
    zA = np.zeros(mA)
    zA[actA] = mult[pe:pe + na]
    zb = np.zeros((n, 2))
    zb[actU, 1] = mult[pe + na:pe + na + actU.size]
    zb[actL, 0] = mult[pe + na + actU.size:]
    cand = QpSolution(x, y, zA, zb, QpStatus.OPTIMAL, KktReport(0, 0, 0, 0, 0),
                      iterations=sol.iterations, message="")
    cand.kkt = kkt_residuals(p, cand)
    if cand.kkt.worst() < sol.kkt.worst():
        return cand
    return None


def require_optimal(sol: QpSolution, context: str) -> QpSolution:
    if not sol.ok:
        raise QpError(f"{context}: QP solve ended with status {sol.status.value}: {sol.message}", sol)
    return sol
