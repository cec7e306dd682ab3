"""Dispatch instance types, validation, and the built-in microgrid case study."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Sequence, Union

import numpy as np

Coeff = Union[float, tuple[float, ...]]


def _per_slot(value: Coeff, horizon: int) -> np.ndarray:
    """Broadcast a scalar or per-slot coefficient to a length-``horizon`` array."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(horizon, float(arr))
    if arr.shape != (horizon,):
        raise ValueError(f"expected scalar or length-{horizon} coefficient, got shape {arr.shape}")
    return arr.copy()


def _coeff(value: Any) -> Coeff:
    if isinstance(value, (list, tuple)):
        return tuple(float(v) for v in value)
    return float(value)


@dataclass(frozen=True)
class GeneratorParams:
    """Conventional generator with quadratic cost ``a*p**2 + b*p`` (cents).

    ``a`` and ``b`` may be scalars or per-slot tuples.
    """

    p_min: float
    p_max: float
    ramp_up: float
    ramp_down: float
    a: Coeff
    b: Coeff

    def coefficients(self, horizon: int) -> tuple[np.ndarray, np.ndarray]:
        return _per_slot(self.a, horizon), _per_slot(self.b, horizon)


@dataclass(frozen=True)
class LoadParams:
    """Elastic load with concave utility ``c*p**2 + d*p`` (cents), ``c <= 0``."""

    p_min: float
    p_max: float
    c: Coeff
    d: Coeff

    def coefficients(self, horizon: int) -> tuple[np.ndarray, np.ndarray]:
        return _per_slot(self.c, horizon), _per_slot(self.d, horizon)


@dataclass(frozen=True)
class WindFarmParams:
    weibull_shape: float = 2.0
    weibull_scale: float = 8.0
    v_cut_in: float = 3.0
    v_rated: float = 11.0
    v_cut_out: float = 25.0
    p_rated: float = 20.0
    ar_coeff: float = 0.7


@dataclass(frozen=True)
class PriceSchedule:
    """Purchase (``alpha``) and selling (``beta``) prices per slot, cents/kWh."""

    alpha: tuple[float, ...]
    beta: tuple[float, ...]

    @property
    def alpha_array(self) -> np.ndarray:
        return np.asarray(self.alpha, dtype=float)

    @property
    def beta_array(self) -> np.ndarray:
        return np.asarray(self.beta, dtype=float)

    def scaled(self, alpha_factor: float = 1.0, ratio: float | None = None) -> PriceSchedule:
        """Scale ``alpha``; if ``ratio`` is given, set ``beta = ratio * alpha``."""
        alpha = tuple(float(a) * alpha_factor for a in self.alpha)
        if ratio is None:
            beta = tuple(float(b) * alpha_factor for b in self.beta)
        else:
            beta = tuple(ratio * a for a in alpha)
        return PriceSchedule(alpha=alpha, beta=beta)

    def lmp(self) -> PriceSchedule:
        """Equal purchase and selling prices (``beta`` copied from ``alpha``)."""
        return PriceSchedule(alpha=tuple(self.alpha), beta=tuple(self.alpha))


@dataclass(frozen=True)
class DispatchProblem:
    generators: tuple[GeneratorParams, ...]
    loads: tuple[LoadParams, ...]
    wind_farms: tuple[WindFarmParams, ...]
    farm_correlation: tuple[tuple[float, ...], ...]
    fixed_demand: tuple[float, ...]
    spinning_reserve: tuple[float, ...]
    prices: PriceSchedule
    p_r_min: float = 0.0
    p_r_max: float = 60.0
    initial_gen: tuple[float, ...] | None = None
    horizon: int = field(default=0)

    def __post_init__(self) -> None:
        if self.horizon == 0:
            object.__setattr__(self, "horizon", len(self.fixed_demand))

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    @property
    def n_load(self) -> int:
        return len(self.loads)

    @property
    def n_farm(self) -> int:
        return len(self.wind_farms)

    @property
    def demand(self) -> np.ndarray:
        return np.asarray(self.fixed_demand, dtype=float)

    @property
    def reserve(self) -> np.ndarray:
        return np.asarray(self.spinning_reserve, dtype=float)

    @property
    def correlation(self) -> np.ndarray:
        return np.asarray(self.farm_correlation, dtype=float).reshape(self.n_farm, self.n_farm)

    @property
    def gen_anchor(self) -> np.ndarray:
        """Output before the first slot; defaults to each unit's minimum."""
        if self.initial_gen is None:
            return np.array([g.p_min for g in self.generators], dtype=float)
        return np.asarray(self.initial_gen, dtype=float)

    def gen_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([g.p_min for g in self.generators], dtype=float)
        hi = np.array([g.p_max for g in self.generators], dtype=float)
        return lo, hi

    def load_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([l.p_min for l in self.loads], dtype=float)
        hi = np.array([l.p_max for l in self.loads], dtype=float)
        return lo, hi

    def gen_coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        """(a, b) as M x T arrays."""
        pairs = [g.coefficients(self.horizon) for g in self.generators]
        return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])

    def load_coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        """(c, d) as N x T arrays."""
        pairs = [l.coefficients(self.horizon) for l in self.loads]
        return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])

    def with_prices(self, prices: PriceSchedule) -> DispatchProblem:
        return replace(self, prices=prices)


@dataclass(frozen=True)
class Schedule:
    """Dispatch decision: ``p_G`` (M x T), ``p_D`` (N x T), ``p_R`` (T)."""

    p_G: np.ndarray
    p_D: np.ndarray
    p_R: np.ndarray

    def imbalance(self, demand: np.ndarray) -> np.ndarray:
        """Slotwise supply minus demand."""
        return self.p_G.sum(axis=0) + self.p_R - self.p_D.sum(axis=0) - demand


@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, path: str, message: str) -> None:
        self.violations.append(Violation(path, message))

    def __len__(self) -> int:
        return len(self.violations)

    def __str__(self) -> str:
        return "\n".join(str(v) for v in self.violations)


def validate_problem(problem: DispatchProblem) -> ValidationReport:
    """Check every structural and feasibility invariant of ``problem``.

    Returns a report listing each violation with its field path; slot
    numbers in messages are 1-based.
    """
    rep = ValidationReport()
    T = problem.horizon
    if T < 1:
        rep.add("horizon", "must be at least 1")
        return rep

    for name, seq in (("fixed_demand", problem.fixed_demand),
                      ("spinning_reserve", problem.spinning_reserve),
                      ("prices.alpha", problem.prices.alpha),
                      ("prices.beta", problem.prices.beta)):
        if len(seq) != T:
            rep.add(name, f"length {len(seq)} does not match horizon {T}")
    if not rep.ok:
        return rep

    for m, g in enumerate(problem.generators):
        path = f"generators[{m}]"
        if not 0 <= g.p_min <= g.p_max:
            rep.add(path, f"need 0 <= p_min <= p_max, got p_min={g.p_min}, p_max={g.p_max}")
        if g.ramp_up <= 0:
            rep.add(f"{path}.ramp_up", "must be positive")
        if g.ramp_down <= 0:
            rep.add(f"{path}.ramp_down", "must be positive")
        try:
            a, b = g.coefficients(T)
        except ValueError as exc:
            rep.add(path, str(exc))
            continue
        if np.any(a < 0):
            rep.add(f"{path}.a", "cost curvature must be nonnegative")
        if np.any(b + 2 * a * g.p_min < 0):
            rep.add(f"{path}.b", "cost must be increasing on the feasible range (b + 2*a*p_min >= 0)")

    for n, l in enumerate(problem.loads):
        path = f"loads[{n}]"
        if not 0 <= l.p_min <= l.p_max:
            rep.add(path, f"need 0 <= p_min <= p_max, got p_min={l.p_min}, p_max={l.p_max}")
        try:
            c, _ = l.coefficients(T)
        except ValueError as exc:
            rep.add(path, str(exc))
            continue
        if np.any(c > 0):
            rep.add(f"{path}.c", "utility curvature must be nonpositive (concave utility)")

    for i, w in enumerate(problem.wind_farms):
        path = f"wind_farms[{i}]"
        if w.weibull_shape <= 0:
            rep.add(f"{path}.weibull_shape", "must be positive")
        if w.weibull_scale <= 0:
            rep.add(f"{path}.weibull_scale", "must be positive")
        if not 0 <= w.v_cut_in < w.v_rated < w.v_cut_out:
            rep.add(path, "need 0 <= v_cut_in < v_rated < v_cut_out")
        if w.p_rated <= 0:
            rep.add(f"{path}.p_rated", "must be positive")
        if not 0 <= w.ar_coeff < 1:
            rep.add(f"{path}.ar_coeff", "must lie in [0, 1)")

    I = problem.n_farm
    corr = np.asarray(problem.farm_correlation, dtype=float)
    if corr.shape != (I, I):
        rep.add("farm_correlation", f"expected {I}x{I} matrix, got shape {corr.shape}")
    else:
        if not np.allclose(corr, corr.T, atol=1e-12):
            rep.add("farm_correlation", "must be symmetric")
        if not np.allclose(np.diag(corr), 1.0, atol=1e-12):
            rep.add("farm_correlation", "must have unit diagonal")
        if I and np.linalg.eigvalsh((corr + corr.T) / 2).min() < -1e-10:
            rep.add("farm_correlation", "must be positive semidefinite")

    alpha, beta = problem.prices.alpha_array, problem.prices.beta_array
    for t in range(T):
        if alpha[t] <= 0:
            rep.add(f"prices.alpha[{t}]", f"purchase price must be positive at slot {t + 1}")
        if beta[t] > alpha[t]:
            rep.add(f"prices.beta[{t}]",
                    f"beta exceeds alpha at slot {t + 1} ({beta[t]} > {alpha[t]}); selling price "
                    "must not exceed purchase price for a convex transaction cost")

    if problem.p_r_min > problem.p_r_max:
        rep.add("p_r_min", "must not exceed p_r_max")

    if problem.initial_gen is not None and len(problem.initial_gen) != problem.n_gen:
        rep.add("initial_gen", f"expected {problem.n_gen} entries, got {len(problem.initial_gen)}")

    g_lo, g_hi = problem.gen_bounds()
    d_lo, d_hi = problem.load_bounds()
    reserve, demand = problem.reserve, problem.demand
    for t in range(T):
        if g_hi.sum() - reserve[t] < 0:
            rep.add(f"spinning_reserve[{t}]",
                    f"reserve infeasible at slot {t + 1}: total capacity {g_hi.sum()} < reserve {reserve[t]}")
        supply = (g_lo.sum() + problem.p_r_min, g_hi.sum() + problem.p_r_max)
        need = (d_lo.sum() + demand[t], d_hi.sum() + demand[t])
        if max(supply[0], need[0]) > min(supply[1], need[1]):
            rep.add(f"fixed_demand[{t}]",
                    f"balance infeasible at slot {t + 1}: supply range {supply} misses demand range {need}")
    return rep


# Built-in instance: three generators, three elastic loads, four wind farms, 8 hourly slots.

_CASE_GENERATORS = [
    (5, 70, 30, 0.006, 14),
    (5, 80, 35, 0.003, 20),
    (10, 85, 50, 0.004, 50),
]
_CASE_LOADS = [
    (5, 30, -0.20, 20),
    (8, 50, -0.30, 30),
    (3, 45, -0.17, 17),
]
_CASE_DEMAND = (30, 34, 47, 60, 75, 67, 55, 43)
_CASE_ALPHA = (1.40, 2.20, 4.70, 6.30, 8.50, 7.80, 5.60, 4.50)
_CASE_BETA = (1.12, 1.76, 3.76, 5.04, 6.80, 6.24, 4.48, 3.60)


def exchangeable_correlation(n: int, rho: float) -> tuple[tuple[float, ...], ...]:
    return tuple(tuple(1.0 if i == j else rho for j in range(n)) for i in range(n))


def builtin_case_study() -> DispatchProblem:
    gens = tuple(GeneratorParams(float(lo), float(hi), float(r), float(r), a, float(b))
                 for lo, hi, r, a, b in _CASE_GENERATORS)
    loads = tuple(LoadParams(float(lo), float(hi), c, float(d)) for lo, hi, c, d in _CASE_LOADS)
    T = len(_CASE_DEMAND)
    return DispatchProblem(
        generators=gens,
        loads=loads,
        wind_farms=tuple(WindFarmParams() for _ in range(4)),
        farm_correlation=exchangeable_correlation(4, 0.5),
        fixed_demand=tuple(float(v) for v in _CASE_DEMAND),
        spinning_reserve=(6.66,) * T,
        prices=PriceSchedule(alpha=_CASE_ALPHA, beta=_CASE_BETA),
        p_r_min=0.0,
        p_r_max=60.0,
        initial_gen=None,
        horizon=T,
    )


# Config (de)serialization

class ConfigError(ValueError):
    """Malformed or invalid configuration; ``problems`` lists every issue found."""

    def __init__(self, message: str, problems: Sequence[str] = ()):
        self.problems = list(problems)
        text = message if not self.problems else message + "\n  " + "\n  ".join(self.problems)
        super().__init__(text)


def problem_to_dict(problem: DispatchProblem) -> dict[str, Any]:
    d = asdict(problem)
    d["generators"] = [asdict(g) for g in problem.generators]
    d["loads"] = [asdict(l) for l in problem.loads]
    d["wind_farms"] = [asdict(w) for w in problem.wind_farms]
    d["farm_correlation"] = [list(r) for r in problem.farm_correlation]
    d["prices"] = {"alpha": list(problem.prices.alpha), "beta": list(problem.prices.beta)}
    for key in ("fixed_demand", "spinning_reserve"):
        d[key] = list(d[key])
    if problem.initial_gen is not None:
        d["initial_gen"] = list(problem.initial_gen)
    return d


def _require(tree: dict, key: str, path: str) -> Any:
    if not isinstance(tree, dict) or key not in tree:
        raise ConfigError(f"missing field '{path}{key}'")
    return tree[key]


def _floats(value: Any, path: str) -> tuple[float, ...]:
    if not isinstance(value, list):
        raise ConfigError(f"field '{path}' must be an array of numbers")
    try:
        return tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"field '{path}' must be an array of numbers") from None


def _build(cls, tree: Any, path: str, optional: frozenset = frozenset()):
    if not isinstance(tree, dict):
        raise ConfigError(f"field '{path}' must be an object")
    kwargs = {}
    for name in cls.__dataclass_fields__:
        if name not in tree:
            if name in optional:
                continue
            raise ConfigError(f"missing field '{path}.{name}'")
        try:
            kwargs[name] = _coeff(tree[name])
        except (TypeError, ValueError):
            raise ConfigError(f"field '{path}.{name}' must be numeric") from None
    unknown = set(tree) - set(cls.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown field(s) {sorted(unknown)} in '{path}'")
    return cls(**kwargs)


def problem_from_dict(tree: dict[str, Any]) -> DispatchProblem:
    """Build a problem from a parsed config tree (no validation beyond structure)."""
    gens = tuple(_build(GeneratorParams, g, f"generators[{k}]")
                 for k, g in enumerate(_require(tree, "generators", "")))
    loads = tuple(_build(LoadParams, l, f"loads[{k}]") for k, l in enumerate(_require(tree, "loads", "")))
    farms = tuple(_build(WindFarmParams, w, f"wind_farms[{k}]",
                         optional=frozenset(WindFarmParams.__dataclass_fields__))
                  for k, w in enumerate(_require(tree, "wind_farms", "")))
    corr_raw = _require(tree, "farm_correlation", "")
    if not isinstance(corr_raw, list):
        raise ConfigError("field 'farm_correlation' must be a matrix")
    corr = tuple(_floats(row, f"farm_correlation[{k}]") for k, row in enumerate(corr_raw))
    prices_raw = _require(tree, "prices", "")
    prices = PriceSchedule(alpha=_floats(_require(prices_raw, "alpha", "prices."), "prices.alpha"),
                           beta=_floats(_require(prices_raw, "beta", "prices."), "prices.beta"))
    demand = _floats(_require(tree, "fixed_demand", ""), "fixed_demand")
    initial = tree.get("initial_gen")
    return DispatchProblem(
        generators=gens,
        loads=loads,
        wind_farms=farms,
        farm_correlation=corr,
        fixed_demand=demand,
        spinning_reserve=_floats(_require(tree, "spinning_reserve", ""), "spinning_reserve"),
        prices=prices,
        p_r_min=float(tree.get("p_r_min", 0.0)),
        p_r_max=float(_require(tree, "p_r_max", "")),
        initial_gen=None if initial is None else _floats(initial, "initial_gen"),
        horizon=int(tree.get("horizon", len(demand))),
    )


def case_study_path() -> Path:
    return Path(str(resources.files("microdispatch") / "data" / "case_study.json"))


def read_config_tree(path: str | Path) -> dict[str, Any]:
    text = Path(path).read_text()
    try:
        tree = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(tree, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return tree


def load_problem(path: str | Path) -> DispatchProblem:
    """Read and validate a problem config; raises :class:`ConfigError` listing all violations."""
    problem = problem_from_dict(read_config_tree(path))
    report = validate_problem(problem)
    if not report.ok:
        raise ConfigError(f"{path}: invalid problem", [str(v) for v in report.violations])
    return problem
