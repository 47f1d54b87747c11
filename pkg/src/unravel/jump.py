"""Jump unravelings: QJP/MCWF, the parametric jump family and DO-QJP.

A jump scheme is a piecewise-deterministic process
``d psi = a dt + sum_k b_k dJ_k`` where ``J_k`` jumps at rate ``lambda_k(psi)``.
The parametric family is indexed per channel by ``alpha_k >= 0`` (the rate in
excess of the variance of ``L_k``) and real phases ``beta_k, theta_k, gamma_k``:

    lambda = <L^+L> - |<L>|^2 + alpha
    eta    = e^{i beta} sqrt(alpha) - e^{i theta} <L> - sqrt(lambda)
    b      = (eta psi + e^{i theta} L psi) / sqrt(lambda)
    a      = -iH psi - L^+L psi / 2 + (-|eta|^2/2 + i gamma) psi
             - e^{i theta} conj(eta) L psi - sqrt(lambda) (eta psi + e^{i theta} L psi)

(``lambda + |<L>|^2 - <L^+L>`` equals ``alpha``, so the square root is real.)
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from .core import (
    ConfigurationError,
    LindbladModel,
    ParameterError,
    apply_generator,
    apply_op,
    as_state,
    inner,
    pure_density,
)
from .diffusion import StateFn, _heff, _lpsi, intrinsic_rate

INERT_RATE = 1e-14
RATE_CLAMP = 1e-14


@dataclass(frozen=True)
class JumpParams:
    """Per-channel functions of the jump family; ``None`` means zero."""

    alpha: Sequence[StateFn | None] | None = None
    beta: Sequence[StateFn | None] | None = None
    theta: Sequence[StateFn | None] | None = None
    gamma: Sequence[StateFn | None] | None = None
    rate_cap: float | None = None

    def __post_init__(self):
        if self.rate_cap is not None and not self.rate_cap > 0:
            raise ConfigurationError(f"rate cap must be positive, got {self.rate_cap}")

    def evaluate(self, k_count: int, psi: np.ndarray):
        """Arrays ``(alpha, beta, theta, gamma)`` of shape ``(..., K)``."""
        out = []
        for name in ("alpha", "beta", "theta", "gamma"):
            fns = getattr(self, name)
            arr = np.zeros(psi.shape[:-1] + (k_count,))
            if fns is not None:
                if len(fns) != k_count:
                    raise ConfigurationError(f"{name}: expected {k_count} channel functions, got {len(fns)}")
                for k, fn in enumerate(fns):
                    if fn is not None:
                        arr[..., k] = fn(psi)
            out.append(arr)
        alpha = out[0]
        if np.any(alpha < -1e-12):
            raise ParameterError(f"excess rate alpha must be nonnegative, got min {alpha.min():.3e}")
        out[0] = np.maximum(alpha, 0.0)
        return tuple(out)


@dataclass(frozen=True, eq=False)
class JumpScheme:
    """Drift, jump displacements and rates of a jump unraveling.

    ``evaluate(psi)`` returns ``(a, b, rates)`` with shapes ``(..., n)``,
    ``(..., K, n)`` and ``(..., K)``. ``params`` is the family description
    used by the analytic variance-growth formula.
    """

    name: str
    model: LindbladModel
    evaluate: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]]
    params: JumpParams | None = None

    def drift(self, psi):
        return self.evaluate(psi)[0]

    def jump_maps(self, psi):
        return self.evaluate(psi)[1]

    def rates(self, psi):
        return self.evaluate(psi)[2]


def _moments(model: LindbladModel, psi: np.ndarray):
    lpsi = _lpsi(model, psi)
    lmean = inner(psi[..., None, :], lpsi)
    ldl_mean = np.sum(np.abs(lpsi) ** 2, axis=-1)
    return lpsi, lmean, ldl_mean


def _family_terms(model, psi, lpsi, lmean, ldl_mean, alpha, beta, theta, gamma):
    variance = np.maximum(ldl_mean - np.abs(lmean) ** 2, 0.0)
    lam = variance + alpha
    sqrt_lam = np.sqrt(lam)
    phase = np.exp(1j * theta)
    eta = np.exp(1j * beta) * np.sqrt(alpha) - phase * lmean - sqrt_lam
    c = eta[..., None] * psi[..., None, :] + phase[..., None] * lpsi
    active = lam > INERT_RATE
    return lam, eta, phase, c, active


def _family_evaluate(model: LindbladModel, params_fn):
    heff = _heff(model)

    def evaluate(psi):
        psi = np.asarray(psi, dtype=complex)
        lpsi, lmean, ldl_mean = _moments(model, psi)
        alpha, beta, theta, gamma = params_fn(psi)
        lam, eta, phase, c, active = _family_terms(model, psi, lpsi, lmean, ldl_mean, alpha, beta, theta, gamma)
        scalar = np.sum(-0.5 * np.abs(eta) ** 2 + 1j * gamma, axis=-1)
        a = apply_op(heff, psi) + scalar[..., None] * psi
        a = a - np.einsum("...k,...ki->...i", phase * np.conj(eta), lpsi)
        a = a - np.einsum("...k,...ki->...i", np.sqrt(lam), c)
        safe = np.where(active, np.sqrt(np.where(active, lam, 1.0)), 1.0)
        b = np.where(active[..., None], c / safe[..., None], 0.0)
        return a, b, np.where(active, lam, 0.0)

    return evaluate


def make_general_jump(model: LindbladModel, params: JumpParams, name: str = "general_jump") -> JumpScheme:
    k_count = model.n_ops
    return JumpScheme(name, model, _family_evaluate(model, lambda psi: params.evaluate(k_count, psi)), params)


def _qjp_params(model: LindbladModel) -> JumpParams:
    """Family parameters reproducing QJP: ``alpha = |<L>|^2``, ``beta = arg <L>``."""

    def moment(k):
        op = model.ops[k]
        return lambda psi: inner(psi, apply_op(op, psi))

    alpha = [(lambda f: (lambda psi: np.abs(f(psi)) ** 2))(moment(k)) for k in range(model.n_ops)]
    beta = [(lambda f: (lambda psi: np.angle(f(psi))))(moment(k)) for k in range(model.n_ops)]
    return JumpParams(alpha=alpha, beta=beta)


def make_qjp(model: LindbladModel) -> JumpScheme:
    """Monte Carlo wave function: jumps to ``L_k psi / ||L_k psi||`` at rate ``<L_k^+ L_k>``."""
    heff = _heff(model)

    def evaluate(psi):
        psi = np.asarray(psi, dtype=complex)
        lpsi, _, ldl_mean = _moments(model, psi)
        norms = np.sqrt(ldl_mean)
        active = norms > 1e-14
        a = apply_op(heff, psi) + 0.5 * np.sum(ldl_mean, axis=-1)[..., None] * psi
        safe = np.where(active, norms, 1.0)
        b = np.where(active[..., None], lpsi / safe[..., None] - psi[..., None, :], 0.0)
        return a, b, np.where(active, ldl_mean, 0.0)

    return JumpScheme("qjp", model, evaluate, _qjp_params(model))


@dataclass(frozen=True)
class AbcCoefficients:
    """Coefficients of ``A cos(theta) + B sin(theta) + C`` and the factor ``G``."""

    a_coef: np.ndarray
    b_coef: np.ndarray
    c_coef: np.ndarray
    g_factor: np.ndarray


def theta_abc(a_coef, b_coef, c_coef) -> np.ndarray:
    """Minimizer over theta of ``(A cos(theta) + B sin(theta) + C)^2``.

    Uses the ``+`` branch when the minimum is zero, and returns 0 when
    ``A = B = 0``. Broadcasts over array inputs.
    """
    a = np.asarray(a_coef, dtype=float)
    b = np.asarray(b_coef, dtype=float)
    c = np.asarray(c_coef, dtype=float)
    r2 = a * a + b * b
    r = np.sqrt(r2)
    denom = np.where(r2 > 0, a - 1j * b, 1.0)
    reachable = (-c + 1j * np.sqrt(np.maximum(r2 - c * c, 0.0))) / denom
    clipped = np.sign(-c) * r / denom
    z = np.where(r >= np.abs(c), reachable, clipped)
    return np.where(r2 > 0, np.angle(z), 0.0)


def abc_min_value(a_coef, b_coef, c_coef) -> np.ndarray:
    """Closed-form minimum ``max(0, |C| - sqrt(A^2 + B^2))^2``."""
    r = np.hypot(a_coef, b_coef)
    return np.maximum(0.0, np.abs(c_coef) - r) ** 2


def abc_coefficients(model: LindbladModel, obs: np.ndarray, psi: np.ndarray, rate, k: int = 0) -> AbcCoefficients:
    """Coefficients expressing the jump term of channel ``k`` at rate ``lambda``.

    With ``W = <O L> - <L><O>``, ``A = 2G Re(W)/sqrt(lambda)``,
    ``B = -2G Im(W)/sqrt(lambda)`` and
    ``C = ((|<L>|^2 - <L^+L>)<O> + |<L>|^2 <O> + <L^+ O L> - 2 Re(conj(<L>) <O L>)) / lambda``.
    """
    obs = np.asarray(obs, dtype=complex)
    psi = np.asarray(psi, dtype=complex)
    op = model.ops[k]
    lpsi = apply_op(op, psi)
    opsi = apply_op(obs, psi)
    lmean = inner(psi, lpsi)
    ldl_mean = np.sum(np.abs(lpsi) ** 2, axis=-1)
    omean = inner(psi, opsi).real
    olmean = inner(opsi, lpsi)
    lol = inner(lpsi, apply_op(obs, lpsi)).real
    lam = np.asarray(rate, dtype=float)
    g2 = 1.0 + (np.abs(lmean) ** 2 - ldl_mean) / lam
    if np.any(g2 < -1e-12):
        raise ParameterError("rate is below the variance of the Lindblad operator; G is undefined")
    g = np.sqrt(np.maximum(g2, 0.0))
    w = olmean - lmean * omean
    a = 2.0 * g * w.real / np.sqrt(lam)
    b = -2.0 * g * w.imag / np.sqrt(lam)
    c1 = (np.abs(lmean) ** 2 - ldl_mean) * omean + np.abs(lmean) ** 2 * omean + lol - 2.0 * np.real(np.conj(lmean) * olmean)
    return AbcCoefficients(a, b, c1 / lam, g)


def zero_loss_rate(model: LindbladModel, obs: np.ndarray, psi: np.ndarray, k: int = 0) -> np.ndarray:
    """Smallest rate at which the jump loss of channel ``k`` can vanish: ``Y + C1^2 / F``."""
    obs = np.asarray(obs, dtype=complex)
    lpsi = apply_op(model.ops[k], psi)
    opsi = apply_op(obs, psi)
    lmean = inner(psi, lpsi)
    ldl_mean = np.sum(np.abs(lpsi) ** 2, axis=-1)
    omean = inner(psi, opsi).real
    olmean = inner(opsi, lpsi)
    lol = inner(lpsi, apply_op(obs, lpsi)).real
    variance = ldl_mean - np.abs(lmean) ** 2
    f = 4.0 * np.abs(olmean - lmean * omean) ** 2
    c1 = -variance * omean + np.abs(lmean) ** 2 * omean + lol - 2.0 * np.real(np.conj(lmean) * olmean)
    return variance + c1**2 / f


def do_qjp_rate(model: LindbladModel, psi: np.ndarray, rate_cap: float, k: int = 0) -> np.ndarray:
    """Optimal rate ``max(Lambda, Y + 1e-14)`` with ``Y`` the variance of ``L_k``."""
    lpsi = apply_op(model.ops[k], psi)
    lmean = inner(psi, lpsi)
    variance = np.sum(np.abs(lpsi) ** 2, axis=-1) - np.abs(lmean) ** 2
    return np.maximum(rate_cap, variance + RATE_CLAMP)


def do_qjp_params(model: LindbladModel, obs: np.ndarray, rate_cap: float) -> JumpParams:
    obs = np.asarray(obs, dtype=complex)

    def alpha_fn(k):
        def fn(psi):
            lpsi = apply_op(model.ops[k], psi)
            variance = np.sum(np.abs(lpsi) ** 2, axis=-1) - np.abs(inner(psi, lpsi)) ** 2
            return do_qjp_rate(model, psi, rate_cap, k) - variance

        return fn

    def theta_fn(k):
        def fn(psi):
            lam = do_qjp_rate(model, psi, rate_cap, k)
            abc = abc_coefficients(model, obs, psi, lam, k)
            return theta_abc(abc.a_coef, abc.b_coef, abc.c_coef)

        return fn

    ks = range(model.n_ops)
    return JumpParams(alpha=[alpha_fn(k) for k in ks], theta=[theta_fn(k) for k in ks], rate_cap=rate_cap)


def make_do_qjp(model: LindbladModel, obs: np.ndarray, rate_cap: float, per_channel: bool = False) -> JumpScheme:
    """Dynamically optimal jump process with all rates at ``rate_cap``.

    The closed form is derived for a single Lindblad operator. Models with
    several operators are rejected unless ``per_channel`` is set, in which
    case each channel is optimized independently.
    """
    if not rate_cap > 0:
        raise ConfigurationError(f"rate cap must be positive, got {rate_cap}")
    if model.n_ops != 1 and not per_channel:
        raise ConfigurationError(f"DO-QJP needs exactly one Lindblad operator, model has {model.n_ops}")
    return make_general_jump(model, do_qjp_params(model, obs, rate_cap), name="do_qjp")


def jump_t3(model: LindbladModel, obs: np.ndarray, params: JumpParams, psi: np.ndarray):
    """Per-channel ``T3 = <b, O b> + 2 (Re(eta)<O> + Re(e^{i theta} <O psi, L psi>)) / sqrt(lambda)``.

    Returns ``(lam, t3)``; inert channels have ``t3 = 0``.
    """
    obs = np.asarray(obs, dtype=complex)
    psi = np.asarray(psi, dtype=complex)
    lpsi, lmean, ldl_mean = _moments(model, psi)
    alpha, beta, theta, gamma = params.evaluate(model.n_ops, psi)
    lam, eta, phase, c, active = _family_terms(model, psi, lpsi, lmean, ldl_mean, alpha, beta, theta, gamma)
    opsi = apply_op(obs, psi)
    omean = inner(psi, opsi).real
    safe = np.where(active, lam, 1.0)
    bob = inner(c, c @ obs.T).real / safe
    z = phase * inner(opsi[..., None, :], lpsi)
    t3 = bob + 2.0 * (eta.real * omean[..., None] + z.real) / np.sqrt(safe)
    return np.where(active, lam, 0.0), np.where(active, t3, 0.0)


def dv_jump_integrand(model: LindbladModel, obs: np.ndarray, scheme_params, psi: np.ndarray) -> np.ndarray:
    """Pointwise growth rate of ``E |<O>|^2`` under a family jump scheme.

    Intrinsic diffusion rate plus ``sum_k lambda_k T3_k^2``. Accepts a
    :class:`JumpParams` or a :class:`JumpScheme` carrying its parameters.
    """
    params = scheme_params.params if isinstance(scheme_params, JumpScheme) else scheme_params
    if params is None:
        raise ConfigurationError("scheme does not carry jump-family parameters")
    psi = as_state(psi, model.dim)
    lam, t3 = jump_t3(model, obs, params, psi)
    return intrinsic_rate(model, obs, psi) + np.sum(lam * t3**2, axis=-1)


def pdmp_rate(obs: np.ndarray, scheme: JumpScheme, psi: np.ndarray) -> np.ndarray:
    """Generator of ``<psi, O psi>^2`` computed directly from ``(a, b_k, lambda_k)``."""
    obs = np.asarray(obs, dtype=complex)
    a, b, rates = scheme.evaluate(psi)
    opsi = apply_op(obs, psi)
    omean = inner(psi, opsi).real
    after = psi[..., None, :] + b
    jumped = inner(after, after @ obs.T).real
    return 4.0 * omean * inner(opsi, a).real + np.sum(rates * (jumped**2 - omean[..., None] ** 2), axis=-1)


def check_jump(model: LindbladModel, scheme: JumpScheme, psi: np.ndarray) -> float:
    """Largest violation of norm preservation or of the jump unraveling identity."""
    psi = np.asarray(psi, dtype=complex)
    a, b, rates = scheme.evaluate(psi)
    drift_norm = abs(2.0 * inner(psi, a).real)
    active = rates > 1e-12
    jump_norm = np.abs(np.linalg.norm(b + psi, axis=-1) - 1.0)
    jump_norm = float(np.max(np.where(active, jump_norm, 0.0), initial=0.0))
    lhs = np.outer(a, psi.conj()) + np.outer(psi, a.conj())
    for lam, bk in zip(rates, b):
        lhs = lhs + lam * (np.outer(bk, psi.conj()) + np.outer(psi, bk.conj()) + np.outer(bk, bk.conj()))
    identity = float(np.max(np.abs(lhs - apply_generator(model, pure_density(psi)))))
    return max(drift_norm, jump_norm, identity)
