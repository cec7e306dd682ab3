"""Correlated Weibull wind-speed sampling and Monte Carlo wind-power scenarios.

Speeds come from a latent Gaussian AR(1) process per farm. Innovations
are correlated across farms through a factor of the latent correlation
matrix, then each latent value is mapped to its farm's Weibull marginal.

Random streams: ``numpy.random.SeedSequence(seed)`` is spawned into two
children, one for the scenario draw and one for the draw that estimates
the mean wind power. Each child is spawned again into one PCG64 substream
per farm. Farm ``i`` always reads its standard normals from substream
``i``, so results depend only on ``(seed, parameters)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import log_ndtr

from .model import DispatchProblem, WindFarmParams


class CorrelationError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioSet:
    """Wind-power scenarios for the SAA objective.

    Attributes:
        aggregate: ``(n_samples, T)`` total wind energy per scenario and slot.
        means: ``(I, T)`` per-farm mean energy estimated from a separate draw.
        seed: seed the set was generated from.
        per_farm: ``(n_samples, I, T)`` per-farm energy, or ``None`` when dropped.
    """

    aggregate: np.ndarray
    means: np.ndarray
    seed: int
    per_farm: np.ndarray | None = None

    @property
    def n_samples(self) -> int:
        return self.aggregate.shape[0]

    @property
    def horizon(self) -> int:
        return self.aggregate.shape[1]

    @property
    def mean_total(self) -> np.ndarray:
        """Mean aggregate wind energy per slot (sum over farms of ``means``)."""
        return self.means.sum(axis=0)

    def subset(self, n: int) -> ScenarioSet:
        """First ``n`` scenarios with the same means."""
        per_farm = None if self.per_farm is None else self.per_farm[:n]
        return ScenarioSet(self.aggregate[:n], self.means, self.seed, per_farm)


def correlation_factor(corr: np.ndarray) -> np.ndarray:
    """Return ``F`` with ``F @ F.T == corr`` for a PSD correlation matrix."""
    corr = np.asarray(corr, dtype=float)
    if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
        raise CorrelationError(f"correlation matrix must be square, got shape {corr.shape}")
    if not np.allclose(corr, corr.T, atol=1e-12):
        raise CorrelationError("correlation matrix is not symmetric")
    if not np.allclose(np.diag(corr), 1.0, atol=1e-12):
        raise CorrelationError("correlation matrix must have a unit diagonal")
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        pass
    w, v = np.linalg.eigh(corr)
    if w.min() < -1e-10:
        raise CorrelationError(
            f"correlation matrix is not positive semidefinite (smallest eigenvalue {w.min():.3e})")
    return v * np.sqrt(np.clip(w, 0.0, None))


def _farm_streams(seed: int, n_farms: int, purpose: int) -> list[np.random.Generator]:
    root = np.random.SeedSequence(seed)
    child = root.spawn(2)[purpose]
    return [np.random.Generator(np.random.PCG64(s)) for s in child.spawn(n_farms)]


def sample_latent(ar_coeffs: Sequence[float], corr: np.ndarray, T: int, n: int, seed: int,
                  purpose: int = 0) -> np.ndarray:
    """Latent standard-normal AR(1) paths, shape ``(n, I, T)``.

    Each farm's path is stationary with unit variance; innovations at each
    step are correlated across farms by ``corr``.
    """
    if n < 1 or T < 1:
        raise ValueError("n and T must be at least 1")
    phi = np.asarray(ar_coeffs, dtype=float)
    I = phi.size
    factor = correlation_factor(corr)
    if factor.shape != (I, I):
        raise CorrelationError(f"correlation matrix is {factor.shape}, expected {I}x{I}")
    streams = _farm_streams(seed, I, purpose)
    # raw[i] holds farm i's own substream draws
    raw = np.stack([g.standard_normal((T, n)) for g in streams])  # (I, T, n)
    eps = np.einsum("ij,jtn->itn", factor, raw)
    z = np.empty((n, I, T))
    z[:, :, 0] = eps[:, 0, :].T
    scale = np.sqrt(1.0 - phi ** 2)
    for t in range(1, T):
        z[:, :, t] = phi * z[:, :, t - 1] + scale * eps[:, t, :].T
    return z


def latent_to_weibull(z: np.ndarray, shape: np.ndarray, scale: np.ndarray) -> np.ndarray:
    # -ln(1 - Phi(z)) == -log_ndtr(-z), accurate in both tails
    return scale * (-log_ndtr(-z)) ** (1.0 / shape)


def sample_wind_speeds(farms: Sequence[WindFarmParams], corr: np.ndarray, T: int, n: int,
                       seed: int, purpose: int = 0) -> np.ndarray:
    """Wind speeds (m/s), shape ``(n, I, T)``, Weibull marginals per farm."""
    z = sample_latent([f.ar_coeff for f in farms], corr, T, n, seed, purpose)
    shape = np.array([f.weibull_shape for f in farms])[:, None]
    scale = np.array([f.weibull_scale for f in farms])[:, None]
    return latent_to_weibull(z, shape, scale)


def power_curve(v, farm: WindFarmParams):
    """Piecewise-linear turbine output (kWh/slot) for wind speed ``v``."""
    v = np.asarray(v, dtype=float)
    ramp = farm.p_rated * (v - farm.v_cut_in) / (farm.v_rated - farm.v_cut_in)
    out = np.where(v < farm.v_cut_in, 0.0,
                   np.where(v < farm.v_rated, ramp,
                            np.where(v < farm.v_cut_out, farm.p_rated, 0.0)))
    return out if out.ndim else float(out)


def _farm_power(speeds: np.ndarray, farms: Sequence[WindFarmParams]) -> np.ndarray:
    power = np.empty_like(speeds)
    for i, farm in enumerate(farms):
        power[:, i, :] = power_curve(speeds[:, i, :], farm)
    return power


def build_scenarios(problem: DispatchProblem, n_samples: int, seed: int,
                    mean_samples: int = 20_000, keep_per_farm: bool = True) -> ScenarioSet:
    """Draw ``n_samples`` wind-power scenarios and estimate per-farm means.

    The means come from an independent draw of ``mean_samples``
    trajectories, never from the scenarios themselves.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    if mean_samples < n_samples:
        raise ValueError("mean_samples must be at least n_samples")
    farms, corr, T = problem.wind_farms, problem.correlation, problem.horizon
    per_farm = _farm_power(sample_wind_speeds(farms, corr, T, n_samples, seed, purpose=0), farms)
    mean_power = _farm_power(sample_wind_speeds(farms, corr, T, mean_samples, seed, purpose=1), farms)
    return ScenarioSet(
        aggregate=per_farm.sum(axis=1),
        means=mean_power.mean(axis=0),
        seed=seed,
        per_farm=per_farm if keep_per_farm else None,
    )


def scenarios_from_arrays(aggregate, means, seed: int = 0) -> ScenarioSet:
    """Wrap externally supplied arrays (e.g. tests or measured data)."""
    agg = np.atleast_2d(np.asarray(aggregate, dtype=float))
    mu = np.atleast_2d(np.asarray(means, dtype=float))
    if mu.shape[1] != agg.shape[1]:
        raise ValueError("means and aggregate disagree on the horizon")
    return ScenarioSet(aggregate=agg, means=mu, seed=seed)
