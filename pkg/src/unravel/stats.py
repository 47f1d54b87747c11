"""Observable estimates, error/variance metrics and run summaries.

Two variance conventions appear here. ``EstimateSeries.mc_variance`` is the
population variance of the per-trajectory observable values, while the
averaged variance reported by :func:`metrics` is the variance of the
sample-mean estimator, i.e. the unbiased sample variance divided by ``N_s``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .core import ConfigurationError, LindbladModel, as_state, expectation
from .oracle import TimeGrid
from .sim import EnsembleResult, Trajectory, combine_moments, propagate_batch


@dataclass(frozen=True)
class EstimateSeries:
    grid: TimeGrid
    mc_mean: np.ndarray
    mc_second_moment: np.ndarray
    mc_variance: np.ndarray
    exact: np.ndarray | None
    n_samples: int

    def __post_init__(self):
        n = self.grid.n_steps + 1
        for name in ("mc_mean", "mc_second_moment", "mc_variance"):
            if getattr(self, name).shape != (n,):
                raise ConfigurationError(f"{name} has shape {getattr(self, name).shape}, expected ({n},)")
        if self.exact is not None and np.shape(self.exact) != (n,):
            raise ConfigurationError(f"exact series has shape {np.shape(self.exact)}, expected ({n},)")

    @property
    def sample_variance(self) -> np.ndarray:
        if self.n_samples < 2:
            return np.zeros_like(self.mc_variance)
        return self.mc_variance * (self.n_samples / (self.n_samples - 1))

    @property
    def estimator_variance(self) -> np.ndarray:
        """Variance of the sample mean, sample variance over ``N_s``."""
        return self.sample_variance / self.n_samples

    @property
    def standard_error(self) -> np.ndarray:
        return np.sqrt(self.estimator_variance)


def _series(grid, n, mean, m2, exact):
    var = np.maximum(m2 / n, 0.0)
    exact = None if exact is None else np.asarray(exact, dtype=float)
    return EstimateSeries(grid, mean, var + mean**2, var, exact, n)


def estimate_series(source, obs, oracle_series=None, grid: TimeGrid | None = None) -> EstimateSeries:
    """Monte Carlo series from an ensemble accumulator or stored trajectories.

    For an :class:`EnsembleResult` ``obs`` is the index of a tracked
    observable; for a list of :class:`Trajectory` it is the observable matrix
    and ``grid`` labels the stored time points.
    """
    if isinstance(source, EnsembleResult):
        if not isinstance(obs, (int, np.integer)):
            raise ConfigurationError("an ensemble accumulator is indexed by observable position")
        return _series(source.grid, source.n_samples, source.mean[obs], source.m2[obs], oracle_series)
    trajs = list(source)
    if not trajs:
        raise ConfigurationError("cannot estimate from an empty ensemble")
    if not all(isinstance(t, Trajectory) for t in trajs):
        raise ConfigurationError("expected an EnsembleResult or a list of Trajectory")
    states = np.stack([t.states for t in trajs])
    values = expectation(obs, states)
    n_t = states.shape[1] - 1
    grid = grid or TimeGrid(0.0, 1.0, n_t)
    mean = values.mean(axis=0)
    m2 = np.sum((values - mean) ** 2, axis=0)
    return _series(grid, len(trajs), mean, m2, oracle_series)


def metrics(series: EstimateSeries) -> tuple[float, float]:
    """Time-averaged absolute error and time-averaged estimator variance."""
    if series.exact is None:
        raise ConfigurationError("metrics need the exact reference series")
    error = float(np.mean(np.abs(series.mc_mean - series.exact)))
    return error, float(np.mean(series.estimator_variance))


@dataclass(frozen=True)
class Quartiles:
    min: float
    q1: float
    median: float
    q3: float
    max: float


def boxplot_summary(values) -> Quartiles:
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        raise ConfigurationError("boxplot summary of an empty list")
    q = np.quantile(v, [0.0, 0.25, 0.5, 0.75, 1.0], method="linear")
    return Quartiles(*(float(x) for x in q))


@dataclass
class RunSummary:
    """Metrics over repeated independent runs; headline values are medians."""

    trajectory_errors: list[float] = field(default_factory=list)
    averaged_vars: list[float] = field(default_factory=list)

    def add(self, error: float, var: float) -> None:
        self.trajectory_errors.append(float(error))
        self.averaged_vars.append(float(var))

    @property
    def repeats(self) -> int:
        return len(self.trajectory_errors)

    @property
    def trajectory_error(self) -> float:
        return boxplot_summary(self.trajectory_errors).median

    @property
    def averaged_var(self) -> float:
        return boxplot_summary(self.averaged_vars).median

    def to_dict(self) -> dict:
        return {
            "repeats": self.repeats,
            "trajectory_error": self.trajectory_error,
            "averaged_var": self.averaged_var,
            "trajectory_errors": list(self.trajectory_errors),
            "averaged_vars": list(self.averaged_vars),
            "trajectory_error_quartiles": asdict(boxplot_summary(self.trajectory_errors)),
            "averaged_var_quartiles": asdict(boxplot_summary(self.averaged_vars)),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunSummary":
        return cls(list(d["trajectory_errors"]), list(d["averaged_vars"]))


def empirical_dv(
    model: LindbladModel,
    scheme,
    obs: np.ndarray,
    psi0: np.ndarray,
    horizon: float,
    n_samples: int,
    seed: int,
    n_steps: int = 1,
    extrapolate: bool = True,
    chunk_size: int = 1 << 16,
) -> tuple[float, float]:
    """Finite-difference growth rate of ``E <O>^2`` at ``psi0``, with its standard error.

    The plain estimate is ``(E<O>_h^2 - <O>_0^2) / h``. Its O(h) bias (from
    both the time discretization and the curvature of ``E<O>_t^2``) is
    removed by default with one Richardson step, ``2 r(h/2) - r(h)``, where
    both horizons reuse the same random streams. The standard error comes
    from the per-trajectory spread of the combined estimate; the starting
    value is deterministic.
    """
    if n_samples < 2:
        raise ConfigurationError("need at least two samples")
    psi0 = as_state(psi0, model.dim)
    x0 = float(expectation(obs, psi0))

    def rate(h, streams):
        psi = propagate_batch(scheme, psi0, TimeGrid(0.0, h / n_steps, n_steps), seed, streams)
        return (expectation(obs, psi, check=False) ** 2 - x0**2) / h

    parts = []
    for start in range(0, n_samples, chunk_size):
        streams = np.arange(start, min(start + chunk_size, n_samples), dtype=np.uint64)
        d = rate(horizon, streams)
        if extrapolate:
            d = 2.0 * rate(0.5 * horizon, streams) - d
        parts.append((d.size, d.mean(), np.sum((d - d.mean()) ** 2)))
    n, mean, m2 = combine_moments(parts)
    return float(mean), float(np.sqrt(m2 / (n - 1) / n))
