"""Exact density-matrix propagation through the vectorized Liouvillian.

Vectorization stacks columns: ``vec(A X B) = (B^T kron A) vec(X)``, so the
jump term ``L rho L^+`` becomes ``(conj(L) kron L) vec(rho)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConfigurationError, LindbladModel, NumericalError, as_density


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    dt: float
    n_steps: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError(f"time step must be positive, got {self.dt}")
        if self.n_steps < 0:
            raise ConfigurationError(f"number of steps must be nonnegative, got {self.n_steps}")

    @classmethod
    def span(cls, t_final: float, dt: float, t0: float = 0.0) -> "TimeGrid":
        n = int(round((t_final - t0) / dt))
        if n < 1 or abs(t0 + n * dt - t_final) > 1e-9 * max(1.0, abs(t_final)):
            raise ConfigurationError(f"t_final={t_final} is not a positive multiple of dt={dt}")
        return cls(t0, dt, n)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    @property
    def t_final(self) -> float:
        return self.t0 + self.dt * self.n_steps


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray, dim: int) -> np.ndarray:
    return np.asarray(v).reshape(dim, dim, order="F")


def liouvillian_matrix(model: LindbladModel) -> np.ndarray:
    n = model.dim
    eye = np.eye(n, dtype=complex)
    h = model.hamiltonian
    out = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for op, g in zip(model.ops, model.ldl):
        out += np.kron(op.conj(), op)
        out -= 0.5 * (np.kron(eye, g) + np.kron(g.T, eye))
    return out


def _rk4(lmat: np.ndarray, v0: np.ndarray, dt: float, n_out: int, substeps: int) -> np.ndarray:
    h = dt / substeps
    out = np.empty((n_out + 1, v0.size), dtype=complex)
    out[0] = v0
    v = v0.copy()
    for i in range(n_out):
        for _ in range(substeps):
            k1 = lmat @ v
            k2 = lmat @ (v + 0.5 * h * k1)
            k3 = lmat @ (v + 0.5 * h * k2)
            k4 = lmat @ (v + h * k3)
            v = v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(v)):
            raise NumericalError(f"non-finite density matrix at output step {i + 1}")
        out[i + 1] = v
    return out


def propagate_exact(
    model: LindbladModel,
    rho0: np.ndarray,
    grid: TimeGrid,
    tol: float = 1e-8,
    max_refinements: int = 8,
) -> np.ndarray:
    """Density matrices ``rho(t_i)`` on the grid, shape ``(N_t + 1, n, n)``.

    Classical RK4 with an internal step no larger than ``dt`` or
    ``0.1 / ||L||_1``. The internal step is halved until two successive
    resolutions agree to ``tol`` at every output point.
    """
    n = model.dim
    rho0 = as_density(rho0, n)
    lmat = liouvillian_matrix(model)
    norm1 = np.abs(lmat).sum(axis=0).max() if lmat.size else 0.0
    substeps = 1 if norm1 == 0 else max(1, int(np.ceil(grid.dt * norm1 / 0.1)))
    v0 = vec(rho0)
    coarse = _rk4(lmat, v0, grid.dt, grid.n_steps, substeps)
    for _ in range(max_refinements):
        fine = _rk4(lmat, v0, grid.dt, grid.n_steps, 2 * substeps)
        if np.max(np.abs(fine - coarse)) <= tol:
            break
        coarse, substeps = fine, 2 * substeps
    else:
        raise NumericalError(f"RK4 step halving did not reach tolerance {tol} with {substeps} substeps")
    rhos = fine.reshape(-1, n, n).transpose(0, 2, 1)
    return 0.5 * (rhos + np.conj(np.swapaxes(rhos, -1, -2)))


def exact_expectations(model: LindbladModel, rho0: np.ndarray, grid: TimeGrid, observables) -> np.ndarray:
    """``tr(O rho(t_i))`` for each observable, shape ``(n_obs, N_t + 1)``."""
    rhos = propagate_exact(model, rho0, grid)
    obs = np.stack([np.asarray(o, dtype=complex) for o in observables])
    return np.einsum("oij,tji->ot", obs, rhos).real
