"""Trajectory time stepping and ensemble execution.

Diffusion schemes use Euler-Maruyama, renormalizing after each step when
the scheme preserves the norm. Jump schemes use the first-order Bernoulli
discretization: within a step channel ``k`` fires with probability
``lambda_k dt``, otherwise the state follows the drift.

Trajectory ``j`` of an ensemble draws its increments from
``RngStream(seed, j)``, so results do not depend on batching, chunk order or
thread count.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng
from .core import ConfigurationError, LindbladModel, NumericalError, as_state, expectation, inner
from .diffusion import DiffusionScheme
from .jump import JumpScheme
from .oracle import TimeGrid

JUMP_PROB_LIMIT = 0.5
JUMP_PROB_WARN = 0.1
DEFAULT_CHUNK = 1024


class StepSizeError(NumericalError):
    """Jump probabilities per step too large for the Bernoulli discretization."""


class IntegrationError(NumericalError):
    """Non-finite state after a step; ``rows`` indexes the failing batch entries."""

    def __init__(self, message: str, rows=()):
        super().__init__(message)
        self.rows = tuple(int(r) for r in rows)


def _check_finite(new: np.ndarray, what: str) -> None:
    ok = np.all(np.isfinite(new), axis=-1)
    if not np.all(ok):
        rows = np.flatnonzero(~ok.reshape(-1))
        raise IntegrationError(f"non-finite state after {what}", rows)


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray
    scheme_id: str
    stream: rng.RngStream


def em_step(scheme: DiffusionScheme, psi: np.ndarray, dt: float, noise: np.ndarray) -> np.ndarray:
    """One Euler-Maruyama step; ``noise`` holds standard normals, shape ``(..., N)``."""
    a, b = scheme.evaluate(psi)
    new = psi + dt * a + np.sqrt(dt) * np.einsum("...j,...ji->...i", noise, b)
    if scheme.norm_preserving:
        with np.errstate(invalid="ignore", divide="ignore"):
            new = new / np.linalg.norm(new, axis=-1, keepdims=True)
    _check_finite(new, f"Euler-Maruyama step (scheme {scheme.name})")
    return new


def _jump_step(scheme: JumpScheme, psi: np.ndarray, dt: float, uniform) -> tuple[np.ndarray, np.ndarray]:
    a, b, rates = scheme.evaluate(psi)
    probs = rates * dt
    total = np.sum(probs, axis=-1)
    worst = float(np.max(total, initial=0.0))
    if worst > JUMP_PROB_LIMIT:
        flat = np.unravel_index(np.argmax(probs), probs.shape)
        raise StepSizeError(
            f"jump probability per step {worst:.3g} exceeds {JUMP_PROB_LIMIT} "
            f"(channel {flat[-1]} rate {rates[flat]:.4g}, dt {dt:g})"
        )
    if worst > JUMP_PROB_WARN:
        warnings.warn(f"jump probability per step {worst:.3g} exceeds {JUMP_PROB_WARN}", RuntimeWarning, stacklevel=3)
    cum = np.cumsum(probs, axis=-1)
    u = np.asarray(uniform)[..., None]
    channel = np.sum(u >= cum, axis=-1)
    k_count = rates.shape[-1]
    jumped = channel < k_count
    picked = 0.0
    if k_count:
        idx = np.minimum(channel, k_count - 1)[..., None, None]
        picked = np.take_along_axis(b, idx, axis=-2)[..., 0, :]
    new = np.where(jumped[..., None], psi + picked, psi + dt * a)
    with np.errstate(invalid="ignore", divide="ignore"):
        new = new / np.linalg.norm(new, axis=-1, keepdims=True)
    _check_finite(new, f"jump step (scheme {scheme.name})")
    return new, np.where(jumped, channel, -1)


def jump_step(scheme: JumpScheme, psi: np.ndarray, dt: float, uniform) -> np.ndarray:
    """One Bernoulli jump step driven by a single uniform per trajectory.

    Channels occupy stacked subintervals ``[sum_{<k} lambda dt, sum_{<=k} lambda dt)``
    of ``[0, 1)``; a uniform beyond them selects the drift.
    """
    return _jump_step(scheme, psi, dt, uniform)[0]


@dataclass
class EnsembleResult:
    """Streaming per-grid-point moments of observables over an ensemble.

    ``mean`` and ``m2`` have shape ``(n_obs, N_t + 1)``; ``m2`` is the sum of
    squared deviations from the mean.
    """

    grid: TimeGrid
    scheme_id: str
    n_samples: int
    mean: np.ndarray
    m2: np.ndarray
    trajectories: list | None = None
    jump_counts: np.ndarray | None = None

    @property
    def population_variance(self) -> np.ndarray:
        return self.m2 / self.n_samples


def combine_moments(parts):
    """Merge ``(count, mean, m2)`` triples with Chan's update, left to right."""
    n, mean, m2 = parts[0]
    for nb, mb, m2b in parts[1:]:
        total = n + nb
        delta = mb - mean
        mean = mean + delta * (nb / total)
        m2 = m2 + m2b + delta**2 * (n * nb / total)
        n = total
    return n, mean, m2


def _advance(scheme, psi, dt, seed, streams, step):
    if isinstance(scheme, JumpScheme):
        return _jump_step(scheme, psi, dt, rng.uniforms(seed, streams, step))
    return em_step(scheme, psi, dt, rng.normals(seed, streams, step, scheme.noise_count)), None


def propagate_batch(scheme, psi0: np.ndarray, grid: TimeGrid, seed: int, streams) -> np.ndarray:
    """Final states of the trajectories ``streams``, all started from ``psi0``."""
    streams = np.asarray(streams, dtype=np.uint64)
    psi = np.broadcast_to(psi0, (streams.size, psi0.shape[-1])).astype(complex)
    for i in range(grid.n_steps):
        psi, _ = _advance(scheme, psi, grid.dt, seed, streams, i)
    return psi


def _run_chunk(scheme, psi0, grid, seed, start, stop, observables, store_states):
    streams = np.arange(start, stop, dtype=np.uint64)
    size = stop - start
    psi = np.broadcast_to(psi0, (size, psi0.size)).copy()
    values = np.empty((len(observables), grid.n_steps + 1, size))
    states = np.empty((grid.n_steps + 1, size, psi0.size), dtype=complex) if store_states else None
    is_jump = isinstance(scheme, JumpScheme)
    counts = np.zeros(size, dtype=np.int64) if is_jump else None

    def record(i):
        for o, obs in enumerate(observables):
            values[o, i] = expectation(obs, psi, check=False)
        if store_states:
            states[i] = psi

    record(0)
    for i in range(grid.n_steps):
        try:
            psi, fired = _advance(scheme, psi, grid.dt, seed, streams, i)
            if is_jump:
                counts += fired >= 0
        except IntegrationError as exc:
            where = start + (exc.rows[0] if exc.rows else 0)
            raise IntegrationError(f"{exc} [trajectory {where}, step {i}]", [where]) from exc
        except NumericalError as exc:
            raise type(exc)(f"{exc} [trajectories {start}..{stop - 1}, step {i}]") from exc
        record(i + 1)
    mean = values.mean(axis=-1)
    m2 = np.sum((values - mean[..., None]) ** 2, axis=-1)
    return size, mean, m2, states, counts


def run_ensemble(
    model: LindbladModel,
    scheme,
    psi0: np.ndarray,
    grid: TimeGrid,
    n_samples: int,
    seed: int,
    observables=(),
    store_states: bool = False,
    threads: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
) -> EnsembleResult:
    """Simulate ``n_samples`` independent trajectories from ``psi0``.

    Observables are accumulated per grid point; full state histories are
    kept only with ``store_states``. Trajectories are processed in chunks of
    fixed size regardless of ``threads``, and chunk moments are combined in
    chunk order, which makes the output independent of the thread count.
    """
    if n_samples < 1:
        raise ConfigurationError("n_samples must be at least 1")
    if scheme.model.dim != model.dim:
        raise ConfigurationError("scheme and model dimensions differ")
    psi0 = as_state(psi0, model.dim)
    obs_list = [np.asarray(o, dtype=complex) for o in observables]
    for o in obs_list:
        expectation(o, psi0)
    bounds = [(s, min(s + chunk_size, n_samples)) for s in range(0, n_samples, chunk_size)]

    def work(bound):
        return _run_chunk(scheme, psi0, grid, seed, bound[0], bound[1], obs_list, store_states)

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, bounds))
    else:
        parts = [work(b) for b in bounds]

    _, mean, m2 = combine_moments([(p[0], p[1], p[2]) for p in parts])
    trajectories = None
    if store_states:
        trajectories = []
        for (start, _), part in zip(bounds, parts):
            for j in range(part[0]):
                trajectories.append(Trajectory(part[3][:, j, :], scheme.name, rng.RngStream(seed, start + j)))
    counts = np.concatenate([p[4] for p in parts]) if isinstance(scheme, JumpScheme) else None
    return EnsembleResult(grid, scheme.name, n_samples, mean, m2, trajectories, counts)


def state_norms(psi: np.ndarray) -> np.ndarray:
    return np.sqrt(inner(psi, psi).real)
