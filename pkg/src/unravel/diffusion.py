"""Diffusion unravelings: LQSD, rQSD, cQSD, the parametric family, DO-QSD.

Every scheme in the single-noise-per-channel family is described pointwise
by three per-channel quantities: ``eta_k(psi)`` (complex), the phase factor
``exp(i theta_k(psi))`` and ``gamma_k(psi)`` (real). Drift and diffusion are

    a = -iH psi + sum_k [ -L_k^+ L_k psi / 2 + (-|eta_k|^2 / 2 + i gamma_k) psi
                          - e^{i theta_k} conj(eta_k) L_k psi ]
    b_k = eta_k psi + e^{i theta_k} L_k psi

and the norm-preserving subfamily fixes ``eta_k = i h_k - e^{i theta_k} <L_k>``.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from .core import (
    ConfigurationError,
    LindbladModel,
    apply_generator,
    apply_op,
    as_state,
    inner,
    pure_density,
)

StateFn = Callable[[np.ndarray], np.ndarray]

DEGENERACY_TOL = 1e-14


@dataclass(frozen=True)
class DiffusionParams:
    """Per-channel tunable functions of the parametric diffusion family.

    Each field is either ``None`` (identically zero) or a length-K sequence
    whose entries are callables ``psi -> array`` over the leading axes of
    ``psi`` (or ``None`` for zero). In norm-preserving mode ``eta`` is
    derived from ``h`` and ``theta`` and must not be given.

    ``phase_modulus`` scales the phase factor ``exp(i theta)``; anything
    other than 1 breaks the unraveling and exists only as a negative
    control for the residual checks.
    """

    theta: Sequence[StateFn | None] | None = None
    eta: Sequence[StateFn | None] | None = None
    gamma: Sequence[StateFn | None] | None = None
    h: Sequence[StateFn | None] | None = None
    norm_preserving: bool = False
    phase_modulus: float = 1.0

    def __post_init__(self):
        if self.norm_preserving and self.eta is not None:
            raise ConfigurationError("eta is derived from (h, theta) in norm-preserving mode")
        if not self.norm_preserving and self.h is not None:
            raise ConfigurationError("h is only meaningful in norm-preserving mode")


@dataclass(frozen=True, eq=False)
class DiffusionScheme:
    """Drift ``a(psi)`` and diffusion coefficients ``b_j(psi)`` of an Ito SDE.

    ``evaluate`` returns ``(a, b)`` with shapes ``(..., n)`` and
    ``(..., N, n)``. ``channel_params``, when present, returns the family
    description ``(eta, phase, gamma)``, each of shape ``(..., K)``.
    """

    name: str
    model: LindbladModel
    evaluate: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
    noise_count: int
    norm_preserving: bool
    channel_params: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]] | None = None

    def drift(self, psi: np.ndarray) -> np.ndarray:
        return self.evaluate(psi)[0]

    def diffusion(self, psi: np.ndarray) -> np.ndarray:
        return self.evaluate(psi)[1]


def _lpsi(model: LindbladModel, psi: np.ndarray) -> np.ndarray:
    """``L_k psi`` stacked along a channel axis: shape ``(..., K, n)``."""
    return np.tensordot(psi, model.ops, axes=([-1], [2]))


def _heff(model: LindbladModel) -> np.ndarray:
    return -1j * model.hamiltonian - 0.5 * np.sum(model.ldl, axis=0)


def _family_scheme(model: LindbladModel, name: str, params_fn, norm_preserving: bool) -> DiffusionScheme:
    """Assemble a scheme from ``params_fn(psi, lpsi, lmean) -> (eta, phase, gamma)``."""
    heff = _heff(model)

    def channel_params(psi):
        lpsi = _lpsi(model, psi)
        lmean = inner(psi[..., None, :], lpsi)
        return params_fn(psi, lpsi, lmean)

    def evaluate(psi):
        psi = np.asarray(psi, dtype=complex)
        lpsi = _lpsi(model, psi)
        lmean = inner(psi[..., None, :], lpsi)
        eta, phase, gamma = params_fn(psi, lpsi, lmean)
        scalar = np.sum(-0.5 * np.abs(eta) ** 2 + 1j * gamma, axis=-1)
        a = apply_op(heff, psi) + scalar[..., None] * psi
        a = a - np.einsum("...k,...ki->...i", phase * np.conj(eta), lpsi)
        b = eta[..., None] * psi[..., None, :] + phase[..., None] * lpsi
        return a, b

    return DiffusionScheme(name, model, evaluate, model.n_ops, norm_preserving, channel_params)


def _zeros_like_channels(lmean: np.ndarray) -> np.ndarray:
    return np.zeros(lmean.shape, dtype=float)


def make_lqsd(model: LindbladModel) -> DiffusionScheme:
    """Linear QSD: ``a = (-iH - sum L^+L / 2) psi``, ``b_k = L_k psi``."""

    def params(psi, lpsi, lmean):
        zero = _zeros_like_channels(lmean)
        return zero.astype(complex), np.ones_like(lmean), zero

    return _family_scheme(model, "lqsd", params, norm_preserving=False)


def make_rqsd(model: LindbladModel) -> DiffusionScheme:
    """Norm-preserving QSD with real noise, ``b_k = (L_k - <L_k>) psi``."""

    def params(psi, lpsi, lmean):
        return -lmean, np.ones_like(lmean), _zeros_like_channels(lmean)

    return _family_scheme(model, "rqsd", params, norm_preserving=True)


def make_cqsd(model: LindbladModel) -> DiffusionScheme:
    """rQSD with each channel split into two real noises, ``b/sqrt2`` and ``i b/sqrt2``."""
    rqsd = make_rqsd(model)
    split = np.array([1.0, 1j]) / np.sqrt(2.0)

    def evaluate(psi):
        a, b = rqsd.evaluate(psi)
        b2 = b[..., :, None, :] * split[:, None]
        return a, b2.reshape(*b.shape[:-2], 2 * b.shape[-2], b.shape[-1])

    return DiffusionScheme("cqsd", model, evaluate, 2 * model.n_ops, True, None)


def _eval_channels(fns, k_count: int, psi: np.ndarray, dtype) -> np.ndarray:
    shape = psi.shape[:-1] + (k_count,)
    out = np.zeros(shape, dtype=dtype)
    if fns is None:
        return out
    if len(fns) != k_count:
        raise ConfigurationError(f"expected {k_count} channel functions, got {len(fns)}")
    for k, fn in enumerate(fns):
        if fn is not None:
            out[..., k] = fn(psi)
    return out


def make_general(model: LindbladModel, params: DiffusionParams, name: str = "general") -> DiffusionScheme:
    """Scheme from arbitrary ``theta``, ``eta`` (or ``h``) and ``gamma`` functions."""
    k_count = model.n_ops
    for field_name in ("theta", "eta", "gamma", "h"):
        fns = getattr(params, field_name)
        if fns is not None and len(fns) != k_count:
            raise ConfigurationError(f"{field_name}: expected {k_count} channel functions, got {len(fns)}")

    def fn(psi, lpsi, lmean):
        theta = _eval_channels(params.theta, k_count, psi, float)
        gamma = _eval_channels(params.gamma, k_count, psi, float)
        phase = params.phase_modulus * np.exp(1j * theta)
        if params.norm_preserving:
            h = _eval_channels(params.h, k_count, psi, float)
            eta = 1j * h - phase * lmean
        else:
            eta = _eval_channels(params.eta, k_count, psi, complex)
        return eta, phase, gamma

    return _family_scheme(model, name, fn, params.norm_preserving)


def _op_norms(model: LindbladModel) -> np.ndarray:
    return np.array([np.linalg.norm(op, 2) for op in model.ops])


def _covariances(model: LindbladModel, obs: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """``W_k = <O psi, L_k psi> - <L_k><O>``, shape ``(..., K)``."""
    lpsi = _lpsi(model, psi)
    opsi = apply_op(obs, psi)
    lmean = inner(psi[..., None, :], lpsi)
    omean = inner(psi, opsi).real
    return inner(opsi[..., None, :], lpsi) - lmean * omean[..., None]


def _degenerate_phase(z: np.ndarray, scale: np.ndarray) -> np.ndarray:
    phase = np.angle(z)
    phase = np.where(phase <= -np.pi, np.pi, phase)
    return np.where(np.abs(z) <= DEGENERACY_TOL * scale, 0.0, phase)


def do_qsd_phase(model: LindbladModel, obs: np.ndarray, psi: np.ndarray, k: int | None = None) -> np.ndarray:
    """Phase ``P_k`` of ``<O L_k> - <L_k><O>`` in ``(-pi, pi]``.

    Returns 0 when the magnitude falls below ``1e-14 * ||O|| ||L_k||``. With
    ``k=None`` all channels are returned along a trailing axis.
    """
    obs = np.asarray(obs, dtype=complex)
    w = _covariances(model, obs, np.asarray(psi, dtype=complex))
    scale = np.linalg.norm(obs, 2) * _op_norms(model)
    p = _degenerate_phase(w, scale)
    return p if k is None else p[..., k]


def make_do_qsd(model: LindbladModel, obs: np.ndarray) -> DiffusionScheme:
    """Dynamically optimal QSD for one observable.

    ``exp(i theta_k) = i exp(-i P_k)`` and ``eta_k = -exp(i theta_k) <L_k>``,
    with ``h = gamma = 0``.
    """
    obs = np.asarray(obs, dtype=complex)
    scale = np.linalg.norm(obs, 2) * _op_norms(model)

    def params(psi, lpsi, lmean):
        opsi = apply_op(obs, psi)
        omean = inner(psi, opsi).real
        w = inner(opsi[..., None, :], lpsi) - lmean * omean[..., None]
        phase = 1j * np.exp(-1j * _degenerate_phase(w, scale))
        return -phase * lmean, phase, _zeros_like_channels(lmean)

    return _family_scheme(model, "do_qsd", params, norm_preserving=True)


def multi_do_qsd_phase(model: LindbladModel, observables, psi: np.ndarray) -> np.ndarray:
    """Half the argument of ``sum_j W_{k,j}^2``, shape ``(..., K)``."""
    obs_list = [np.asarray(o, dtype=complex) for o in observables]
    if not obs_list:
        raise ConfigurationError("at least one observable is required")
    psi = np.asarray(psi, dtype=complex)
    total = sum(_covariances(model, o, psi) ** 2 for o in obs_list)
    scale = max(np.linalg.norm(o, 2) for o in obs_list) ** 2 * _op_norms(model) ** 2
    return 0.5 * _degenerate_phase(total, scale)


def make_multi_do_qsd(model: LindbladModel, observables) -> DiffusionScheme:
    """DO-QSD minimizing the summed variance growth of several observables."""
    obs_list = [np.asarray(o, dtype=complex) for o in observables]
    if not obs_list:
        raise ConfigurationError("at least one observable is required")

    def params(psi, lpsi, lmean):
        phase = 1j * np.exp(-1j * multi_do_qsd_phase(model, obs_list, psi))
        return -phase * lmean, phase, _zeros_like_channels(lmean)

    return _family_scheme(model, "multi_do_qsd", params, norm_preserving=True)


def generator_quadratic(model: LindbladModel, psi: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Batched ``<v, L(psi psi^+) v>`` without forming the density matrix."""
    h = model.hamiltonian
    pv = inner(psi, v)
    hpsi = apply_op(h, psi)
    out = -1j * (inner(v, hpsi) * pv - np.conj(pv) * inner(psi, apply_op(h, v)))
    lpsi = _lpsi(model, psi)
    out = out + np.sum(np.abs(inner(lpsi, v[..., None, :])) ** 2, axis=-1)
    g = np.sum(model.ldl, axis=0)
    out = out - 0.5 * (inner(v, apply_op(g, psi)) * pv + np.conj(pv) * inner(psi, apply_op(g, v)))
    return out.real


def intrinsic_rate(model: LindbladModel, obs: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Scheme-independent part of the variance growth rate.

    ``2 <O psi, L(psi psi^+) O psi> + sum_k (2 <L_k psi, O L_k psi><O> - 2 |<O psi, L_k psi>|^2)``,
    which is also the optimal diffusion rate.
    """
    obs = np.asarray(obs, dtype=complex)
    opsi = apply_op(obs, psi)
    omean = inner(psi, opsi).real
    lpsi = _lpsi(model, psi)
    olpsi = lpsi @ obs.T
    per_k = 2.0 * inner(lpsi, olpsi).real * omean[..., None] - 2.0 * np.abs(inner(opsi[..., None, :], lpsi)) ** 2
    return 2.0 * generator_quadratic(model, psi, opsi) + np.sum(per_k, axis=-1)


def diffusion_loss_terms(model: LindbladModel, obs: np.ndarray, scheme: DiffusionScheme, psi: np.ndarray) -> np.ndarray:
    """Per-channel ``(Re(eta_k <O> + e^{i theta_k} <O psi, L_k psi>))^2``."""
    if scheme.channel_params is None:
        raise ConfigurationError(f"scheme {scheme.name!r} is not in the single-noise parametric family")
    obs = np.asarray(obs, dtype=complex)
    eta, phase, _ = scheme.channel_params(psi)
    opsi = apply_op(obs, psi)
    omean = inner(psi, opsi).real
    z = phase * inner(opsi[..., None, :], _lpsi(model, psi))
    return np.real(eta * omean[..., None] + z) ** 2


def ito_rate(obs: np.ndarray, scheme: DiffusionScheme, psi: np.ndarray) -> np.ndarray:
    """Ito generator of ``<psi, O psi>^2`` computed directly from ``a`` and ``b_j``.

    Valid for any scheme, including ones outside the parametric family.
    """
    obs = np.asarray(obs, dtype=complex)
    a, b = scheme.evaluate(psi)
    opsi = apply_op(obs, psi)
    omean = inner(psi, opsi).real
    ob = b @ obs.T
    first = 4.0 * omean * inner(opsi, a).real
    second = 4.0 * inner(opsi[..., None, :], b).real ** 2 + 2.0 * omean[..., None] * inner(b, ob).real
    return first + np.sum(second, axis=-1)


def dv_diffusion_integrand(model: LindbladModel, obs: np.ndarray, scheme: DiffusionScheme, psi: np.ndarray) -> np.ndarray:
    """Pointwise growth rate of ``E |<O>|^2`` under a diffusion scheme.

    Family schemes use the intrinsic rate plus four times the loss; schemes
    outside the family (cQSD) fall back to the direct Ito generator.
    """
    psi = as_state(psi, model.dim)
    if scheme.channel_params is None:
        return ito_rate(obs, scheme, psi)
    loss = diffusion_loss_terms(model, obs, scheme, psi)
    return intrinsic_rate(model, obs, psi) + 4.0 * np.sum(loss, axis=-1)


def check_unraveling(model: LindbladModel, scheme: DiffusionScheme, psi: np.ndarray) -> float:
    """Max-norm of ``a psi^+ + psi a^+ + sum_j b_j b_j^+ - L(psi psi^+)`` at one state."""
    psi = np.asarray(psi, dtype=complex)
    a, b = scheme.evaluate(psi)
    lhs = np.outer(a, psi.conj()) + np.outer(psi, a.conj()) + b.T @ b.conj()
    return float(np.max(np.abs(lhs - apply_generator(model, pure_density(psi)))))


def norm_drift_coefficients(scheme: DiffusionScheme, psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ito drift ``2 Re<psi, a> + sum_j ||b_j||^2`` and noise ``2 Re<psi, b_j>`` of ``||psi||^2``."""
    a, b = scheme.evaluate(psi)
    drift = 2.0 * inner(psi, a).real + np.sum(np.abs(b) ** 2, axis=(-1, -2))
    noise = 2.0 * inner(psi[..., None, :], b).real
    return drift, noise

