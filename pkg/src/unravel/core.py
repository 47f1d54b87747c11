"""Dense linear algebra, state primitives and the Lindblad generator.

Operators are plain complex ``numpy`` arrays. State functions throughout the
package accept a single state of shape ``(n,)`` or a batch ``(..., n)`` and
broadcast over the leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HERMITIAN_TOL = 1e-12
NORM_TOL = 1e-10


class ConfigurationError(ValueError):
    """Inputs of incompatible shape or otherwise invalid construction."""


class ParameterError(ValueError):
    """A tunable scheme function produced an inadmissible value."""


class NumericalError(RuntimeError):
    """Non-finite values or failed accuracy checks during integration."""


# Pauli convention: sigma_z = diag(1, -1); |0> is the +1 eigenvector.
IDENTITY2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)


def dag(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def is_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    a = np.asarray(a)
    return a.ndim == 2 and a.shape[0] == a.shape[1] and bool(np.max(np.abs(a - dag(a)), initial=0.0) <= tol)


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product; the first factor is the slower-varying index."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def annihilation(dim_fock: int) -> np.ndarray:
    """Truncated bosonic lowering operator with ``a[m, m+1] = sqrt(m+1)``."""
    if dim_fock < 2:
        raise ConfigurationError(f"Fock dimension must be >= 2, got {dim_fock}")
    return np.diag(np.sqrt(np.arange(1, dim_fock)), k=1).astype(complex)


def basis_state(dim: int, index: int) -> np.ndarray:
    psi = np.zeros(dim, dtype=complex)
    psi[index] = 1.0
    return psi


def normalize(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return psi / np.linalg.norm(psi, axis=-1, keepdims=True)


def as_state(psi, dim: int | None = None) -> np.ndarray:
    """Validate a unit-norm state vector (or batch of them)."""
    psi = np.asarray(psi, dtype=complex)
    if dim is not None and psi.shape[-1] != dim:
        raise ConfigurationError(f"state has dimension {psi.shape[-1]}, expected {dim}")
    norms = np.sum(np.abs(psi) ** 2, axis=-1)
    if np.any(np.abs(norms - 1.0) > NORM_TOL):
        raise ConfigurationError("state is not normalized")
    return psi


def as_density(rho, dim: int | None = None) -> np.ndarray:
    """Validate a density matrix: Hermitian, unit trace, positive semidefinite."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ConfigurationError(f"density matrix must be square, got shape {rho.shape}")
    if dim is not None and rho.shape[0] != dim:
        raise ConfigurationError(f"density matrix has dimension {rho.shape[0]}, expected {dim}")
    if not is_hermitian(rho):
        raise ConfigurationError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > NORM_TOL:
        raise ConfigurationError("density matrix does not have unit trace")
    if np.linalg.eigvalsh(rho).min() < -NORM_TOL:
        raise ConfigurationError("density matrix is not positive semidefinite")
    return rho


def pure_density(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def inner(phi: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Batched <phi, psi>, conjugate-linear in the first argument."""
    return np.sum(np.conj(phi) * psi, axis=-1)


def apply_op(op: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Apply a matrix to a state or a batch of states (last axis)."""
    return psi @ op.T


@dataclass(frozen=True, eq=False)
class LindbladModel:
    """Hamiltonian plus Lindblad operators defining the generator.

    The operator list is stored as a ``(K, n, n)`` array; derived products
    used by the schemes are cached at construction.
    """

    hamiltonian: np.ndarray
    lindblad_ops: tuple = ()
    name: str = "custom"
    _ops: np.ndarray = field(init=False, repr=False)
    _ldl: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        h = np.array(self.hamiltonian, dtype=complex)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ConfigurationError(f"Hamiltonian must be square, got shape {h.shape}")
        if not is_hermitian(h):
            raise ConfigurationError("Hamiltonian is not Hermitian")
        n = h.shape[0]
        ops = tuple(np.array(op, dtype=complex) for op in self.lindblad_ops)
        for k, op in enumerate(ops):
            if op.shape != (n, n):
                raise ConfigurationError(f"Lindblad operator {k} has shape {op.shape}, expected {(n, n)}")
        stacked = np.stack(ops) if ops else np.zeros((0, n, n), dtype=complex)
        h.setflags(write=False)
        stacked.setflags(write=False)
        ldl = dag(stacked) @ stacked
        ldl.setflags(write=False)
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "lindblad_ops", tuple(stacked))
        object.__setattr__(self, "_ops", stacked)
        object.__setattr__(self, "_ldl", ldl)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @property
    def n_ops(self) -> int:
        return self._ops.shape[0]

    @property
    def ops(self) -> np.ndarray:
        """Lindblad operators as a ``(K, n, n)`` array."""
        return self._ops

    @property
    def ldl(self) -> np.ndarray:
        """Products ``L_k^dagger L_k`` as a ``(K, n, n)`` array."""
        return self._ldl

    def channel(self, k: int) -> "LindbladModel":
        """Sub-model keeping the Hamiltonian and only operator ``k``."""
        return LindbladModel(self.hamiltonian, (self._ops[k],), name=f"{self.name}[L{k + 1}]")


def apply_generator(model: LindbladModel, rho: np.ndarray) -> np.ndarray:
    """Evaluate ``-i[H, rho] + sum_k (L rho L^+ - {L^+ L, rho}/2)``.

    ``rho`` may be any square matrix of the model dimension, not only a
    density matrix; the map is linear.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (model.dim, model.dim):
        raise ConfigurationError(f"matrix has shape {rho.shape}, expected {(model.dim, model.dim)}")
    h = model.hamiltonian
    out = -1j * (h @ rho - rho @ h)
    if model.n_ops:
        ops = model.ops
        out = out + np.sum(ops @ rho @ dag(ops), axis=0)
        g = np.sum(model.ldl, axis=0)
        out = out - 0.5 * (g @ rho + rho @ g)
    return out


def expectation(obs: np.ndarray, psi: np.ndarray, check: bool = True) -> np.ndarray:
    """Real part of ``<psi, O psi>`` for a Hermitian observable.

    Works on a single state or a batch; the imaginary part is asserted to be
    negligible when ``check`` is set.
    """
    obs = np.asarray(obs, dtype=complex)
    psi = np.asarray(psi, dtype=complex)
    if obs.ndim != 2 or obs.shape[0] != obs.shape[1] or obs.shape[0] != psi.shape[-1]:
        raise ConfigurationError(f"observable shape {obs.shape} does not match state dimension {psi.shape[-1]}")
    val = inner(psi, apply_op(obs, psi))
    if check:
        if not is_hermitian(obs):
            raise ConfigurationError("observable is not Hermitian")
        bound = 1e-10 * (1.0 + np.linalg.norm(obs, 2) * np.sum(np.abs(psi) ** 2, axis=-1))
        if np.any(np.abs(val.imag) > bound):
            raise NumericalError("expectation value has a non-negligible imaginary part")
    return val.real


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return 0.5 * (g + g.conj().T)


def random_state(dim: int, rng: np.random.Generator, size=None) -> np.ndarray:
    shape = (dim,) if size is None else tuple(np.atleast_1d(size)) + (dim,)
    return normalize(rng.normal(size=shape) + 1j * rng.normal(size=shape))


def random_density(dim: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
