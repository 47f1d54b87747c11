"""Benchmark Lindblad models and standard initial states.

The two-level decay model couples a qubit to a thermal bath. The cavity
model is a dissipative Jaynes-Cummings system: atom (first tensor factor)
times a truncated Fock space (second factor).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    IDENTITY2,
    SIGMA_MINUS,
    SIGMA_PLUS,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    ConfigurationError,
    LindbladModel,
    annihilation,
    basis_state,
    dag,
    kron,
)


@dataclass(frozen=True)
class DecayModelParams:
    lambda0: float = 5.0
    nu: float = 0.5

    def __post_init__(self):
        if not self.lambda0 > 0:
            raise ConfigurationError(f"lambda0 must be positive, got {self.lambda0}")
        if not self.nu >= 0:
            raise ConfigurationError(f"nu must be nonnegative, got {self.nu}")


@dataclass(frozen=True)
class CavityModelParams:
    nu: float = 0.5
    kappa: float = 0.5
    mu1: float = 0.2
    mu2: float = 0.2
    mu3: float = 0.2
    fock_dim: int = 10

    def __post_init__(self):
        for name in ("nu", "kappa"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {v}")
        for name in ("mu1", "mu2", "mu3"):
            if not getattr(self, name) >= 0:
                raise ConfigurationError(f"{name} must be nonnegative")
        if int(self.fock_dim) != self.fock_dim or self.fock_dim < 2:
            raise ConfigurationError(f"fock_dim must be an integer >= 2, got {self.fock_dim}")


def decay_model(params: DecayModelParams = DecayModelParams()) -> LindbladModel:
    """H = 0, L1 = sqrt(lambda0 (nu+1)) sigma_-, L2 = sqrt(lambda0 nu) sigma_+."""
    l1 = np.sqrt(params.lambda0 * (params.nu + 1.0)) * SIGMA_MINUS
    l2 = np.sqrt(params.lambda0 * params.nu) * SIGMA_PLUS
    return LindbladModel(np.zeros((2, 2), dtype=complex), (l1, l2), name="decay2d")


def cavity_model(params: CavityModelParams = CavityModelParams()) -> LindbladModel:
    """Dissipative Jaynes-Cummings model of dimension ``2 * fock_dim``.

    Photon loss and thermal gain on the field, decay and pumping on the atom,
    and atomic dephasing.
    """
    nf = int(params.fock_dim)
    a = annihilation(nf)
    eye_f = np.eye(nf, dtype=complex)
    h = kron(IDENTITY2, dag(a) @ a) + kron(SIGMA_Z, eye_f) - (kron(SIGMA_MINUS, dag(a)) + kron(SIGMA_PLUS, a))
    ops = (
        kron(IDENTITY2, np.sqrt(params.mu1 * (params.nu + 1.0)) * a),
        kron(IDENTITY2, np.sqrt(params.mu1 * params.nu) * dag(a)),
        kron(np.sqrt(params.mu2 * (1.0 - params.kappa)) * SIGMA_MINUS, eye_f),
        kron(np.sqrt(params.mu2 * params.kappa) * SIGMA_PLUS, eye_f),
        kron(np.sqrt(params.mu3) * SIGMA_Z, eye_f),
    )
    return LindbladModel(h, ops, name="cavity_qed")


_QUBIT_STATES = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([1, 1], dtype=complex) / np.sqrt(2.0),
    "-": np.array([1, -1], dtype=complex) / np.sqrt(2.0),
    "+i": np.array([1, 1j], dtype=complex) / np.sqrt(2.0),
    "-i": np.array([1, -1j], dtype=complex) / np.sqrt(2.0),
}
# |0> carries sigma_z = +1 and is the excited level that sigma_- lowers.
_QUBIT_STATES["e"] = _QUBIT_STATES["0"]
_QUBIT_STATES["g"] = _QUBIT_STATES["1"]


def standard_states() -> dict[str, np.ndarray]:
    """Named single-qubit states; combine with :func:`product_state`."""
    return {k: v.copy() for k, v in _QUBIT_STATES.items()}


def qubit_state(label: str) -> np.ndarray:
    try:
        return _QUBIT_STATES[label].copy()
    except KeyError:
        raise ConfigurationError(f"unknown state label {label!r}; known: {sorted(_QUBIT_STATES)}") from None


def fock_state(fock_dim: int, n: int = 0) -> np.ndarray:
    return basis_state(fock_dim, n)


def product_state(*factors: np.ndarray) -> np.ndarray:
    out = np.ones(1, dtype=complex)
    for f in factors:
        out = np.kron(out, f)
    return out


def qubit_observable(label: str) -> np.ndarray:
    table = {"sigma_x": SIGMA_X, "sigma_y": SIGMA_Y, "sigma_z": SIGMA_Z, "identity": IDENTITY2}
    if label not in table:
        raise ConfigurationError(f"unknown qubit observable {label!r}")
    return table[label].copy()


def embed(op: np.ndarray, dims: tuple[int, ...], site: int) -> np.ndarray:
    """Place ``op`` on tensor factor ``site`` of a product space with ``dims``."""
    if not 0 <= site < len(dims):
        raise ConfigurationError(f"site {site} out of range for {len(dims)} factors")
    if op.shape != (dims[site], dims[site]):
        raise ConfigurationError(f"operator of shape {op.shape} does not fit factor of dimension {dims[site]}")
    out = np.ones((1, 1), dtype=complex)
    for i, d in enumerate(dims):
        out = np.kron(out, op if i == site else np.eye(d, dtype=complex))
    return out


def cavity_observables(fock_dim: int = 10) -> dict[str, np.ndarray]:
    """Atomic Pauli operators and the photon number on the composite space."""
    dims = (2, fock_dim)
    a = annihilation(fock_dim)
    return {
        "sigma_x": embed(SIGMA_X, dims, 0),
        "sigma_y": embed(SIGMA_Y, dims, 0),
        "sigma_z": embed(SIGMA_Z, dims, 0),
        "number": embed(dag(a) @ a, dims, 1),
    }
