"""Experiment configuration: JSON parsing, validation and object construction.

A config is one JSON document with ``"schema": 1``. Matrices and amplitude
lists are written as nested ``[re, im]`` pairs. Errors name the offending
field as a dotted path, or the line and column for malformed JSON.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import IDENTITY2, SIGMA_X, SIGMA_Y, SIGMA_Z, ConfigurationError, LindbladModel, annihilation, dag
from .diffusion import DiffusionParams, make_cqsd, make_do_qsd, make_general, make_lqsd, make_multi_do_qsd, make_rqsd
from .jump import make_do_qjp, make_qjp
from .models import CavityModelParams, DecayModelParams, cavity_model, decay_model, embed, product_state, qubit_state
from .oracle import TimeGrid

SCHEMA_VERSION = 1
SCHEME_NAMES = ("lqsd", "rqsd", "cqsd", "do_qsd", "multi_do_qsd", "qjp", "do_qjp", "general")
# Schemes whose construction depends on the observable being estimated.
PER_OBSERVABLE = ("do_qsd", "do_qjp")
_QUBIT_OBS = {"sigma_x": SIGMA_X, "sigma_y": SIGMA_Y, "sigma_z": SIGMA_Z}


class ConfigError(ConfigurationError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass(frozen=True)
class SchemeSpec:
    name: str
    label: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ObservableSpec:
    label: str
    matrix: np.ndarray


@dataclass(frozen=True)
class ExperimentConfig:
    model: LindbladModel
    dims: tuple[int, ...]
    schemes: tuple[SchemeSpec, ...]
    observables: tuple[ObservableSpec, ...]
    initial_state: np.ndarray
    dt: float
    t_final: float
    n_samples: int
    n_repeats: int
    seed: int
    output_dir: Path
    threads: int = 1

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid.span(self.t_final, self.dt)

    def with_overrides(self, seed=None, threads=None, output_dir=None) -> "ExperimentConfig":
        changes = {}
        if seed is not None:
            changes["seed"] = _seed(seed, "--seed")
        if threads is not None:
            if threads < 1:
                raise ConfigError("--threads", "must be at least 1")
            changes["threads"] = threads
        if output_dir is not None:
            changes["output_dir"] = Path(output_dir)
        return replace(self, **changes)


def _get(d: dict, key: str, path: str, kind=None, default=...):
    if key not in d:
        if default is ...:
            raise ConfigError(f"{path}.{key}" if path else key, "missing required field")
        return default
    value = d[key]
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(f"{path}.{key}" if path else key, f"expected {_kind_name(kind)}, got {type(value).__name__}")
    return value


def _kind_name(kind) -> str:
    if isinstance(kind, tuple):
        return " or ".join(k.__name__ for k in kind)
    return kind.__name__


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {type(value).__name__}")
    return float(value)


def _count(value, path: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(path, f"expected an integer >= {minimum}")
    return value


def _seed(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value < 2**64:
        raise ConfigError(path, "seed must be an integer in [0, 2^64)")
    return value


def _complex_array(value, path: str) -> np.ndarray:
    """Nested lists whose leaves are ``[re, im]`` pairs (or plain reals)."""
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(path, "expected nested lists of numbers") from None
    if arr.ndim >= 1 and arr.shape[-1] == 2 and arr.ndim in (2, 3):
        return arr[..., 0] + 1j * arr[..., 1]
    raise ConfigError(path, "expected [re, im] pairs")


def _matrix(value, path: str, dim: int | None = None) -> np.ndarray:
    m = _complex_array(value, path)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ConfigError(path, f"expected a square matrix of [re, im] pairs, got shape {m.shape}")
    if dim is not None and m.shape[0] != dim:
        raise ConfigError(path, f"matrix dimension {m.shape[0]} does not match model dimension {dim}")
    return m


def _build_model(spec, path: str = "model") -> tuple[LindbladModel, tuple[int, ...]]:
    if not isinstance(spec, dict):
        raise ConfigError(path, "expected an object")
    name = _get(spec, "name", path, str)
    params = _get(spec, "params", path, dict, default={})
    try:
        if name == "decay2d":
            return decay_model(DecayModelParams(**params)), (2,)
        if name == "cavity_qed":
            p = CavityModelParams(**params)
            return cavity_model(p), (2, int(p.fock_dim))
    except TypeError as exc:
        raise ConfigError(f"{path}.params", str(exc)) from None
    except ConfigurationError as exc:
        raise ConfigError(f"{path}.params", str(exc)) from None
    if name == "custom":
        h = _matrix(_get(spec, "hamiltonian", path), f"{path}.hamiltonian")
        ops = [_matrix(op, f"{path}.lindblad_ops[{i}]", h.shape[0]) for i, op in enumerate(_get(spec, "lindblad_ops", path, list, default=[]))]
        dims = tuple(_get(spec, "dims", path, list, default=[h.shape[0]]))
        if int(np.prod(dims)) != h.shape[0]:
            raise ConfigError(f"{path}.dims", f"product {int(np.prod(dims))} differs from dimension {h.shape[0]}")
        try:
            return LindbladModel(h, tuple(ops), name="custom"), dims
        except ConfigurationError as exc:
            raise ConfigError(path, str(exc)) from None
    raise ConfigError(f"{path}.name", f"unknown model {name!r}; expected decay2d, cavity_qed or custom")


def _build_observable(spec, path: str, dims: tuple[int, ...]) -> ObservableSpec:
    if isinstance(spec, str):
        spec = {"name": spec}
    if not isinstance(spec, dict):
        raise ConfigError(path, "expected a name or an object")
    name = _get(spec, "name", path, str)
    dim = int(np.prod(dims))
    if name == "custom":
        m = _matrix(_get(spec, "matrix", path), f"{path}.matrix", dim)
        label = _get(spec, "label", path, str, default="custom")
    elif name in _QUBIT_OBS or name in ("number", "identity"):
        default_site = len(dims) - 1 if name == "number" else 0
        site = _get(spec, "site", path, int, default=default_site)
        if not 0 <= site < len(dims):
            raise ConfigError(f"{path}.site", f"no subsystem {site} (model has {len(dims)})")
        d = dims[site]
        if name in _QUBIT_OBS:
            if d != 2:
                raise ConfigError(f"{path}.site", f"{name} needs a two-level subsystem, site {site} has dimension {d}")
            local = _QUBIT_OBS[name]
        elif name == "number":
            local = dag(annihilation(d)) @ annihilation(d) if d >= 2 else np.zeros((1, 1), dtype=complex)
        else:
            local = np.eye(d, dtype=complex) if d != 2 else IDENTITY2
        m = embed(local, dims, site)
        suffix = f"@{site}" if len(dims) > 1 and "site" in spec else ""
        label = _get(spec, "label", path, str, default=name + suffix)
    else:
        raise ConfigError(f"{path}.name", f"unknown observable {name!r}")
    if not np.allclose(m, dag(m), atol=1e-12):
        raise ConfigError(path, "observable is not Hermitian")
    return ObservableSpec(label, m)


def _build_state(spec, path: str, dims: tuple[int, ...]) -> np.ndarray:
    if isinstance(spec, (str, int)) and not isinstance(spec, bool):
        spec = [spec]
    if isinstance(spec, dict):
        psi = _complex_array(_get(spec, "amplitudes", path), f"{path}.amplitudes")
        if psi.ndim != 1 or psi.size != int(np.prod(dims)):
            raise ConfigError(f"{path}.amplitudes", f"expected {int(np.prod(dims))} [re, im] pairs")
    elif isinstance(spec, list):
        if len(spec) != len(dims):
            raise ConfigError(path, f"expected one label per subsystem ({len(dims)})")
        factors = []
        for i, (label, d) in enumerate(zip(spec, dims)):
            if d == 2 and isinstance(label, str):
                try:
                    factors.append(qubit_state(label))
                except ConfigurationError as exc:
                    raise ConfigError(f"{path}[{i}]", str(exc)) from None
            else:
                try:
                    n = int(label)
                except (TypeError, ValueError):
                    raise ConfigError(f"{path}[{i}]", f"expected a basis index for dimension {d}") from None
                if not 0 <= n < d:
                    raise ConfigError(f"{path}[{i}]", f"basis index {n} out of range for dimension {d}")
                f = np.zeros(d, dtype=complex)
                f[n] = 1.0
                factors.append(f)
        psi = product_state(*factors)
    else:
        raise ConfigError(path, "expected a label, a list of labels or {\"amplitudes\": ...}")
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > 1e-10:
        raise ConfigError(path, f"initial state has norm {norm:.12g}, expected 1")
    return psi


def _build_schemes(specs, path: str = "schemes") -> tuple[SchemeSpec, ...]:
    if not isinstance(specs, list) or not specs:
        raise ConfigError(path, "at least one scheme is required")
    out = []
    for i, spec in enumerate(specs):
        p = f"{path}[{i}]"
        if isinstance(spec, str):
            spec = {"name": spec}
        if not isinstance(spec, dict):
            raise ConfigError(p, "expected a name or an object")
        name = _get(spec, "name", p, str)
        if name not in SCHEME_NAMES:
            raise ConfigError(f"{p}.name", f"unknown scheme {name!r}; expected one of {', '.join(SCHEME_NAMES)}")
        params = _get(spec, "params", p, dict, default={})
        if name == "do_qjp":
            _number(_get(params, "rate_cap", f"{p}.params"), f"{p}.params.rate_cap")
        out.append(SchemeSpec(name, _get(spec, "label", p, str, default=name), params))
    labels = [s.label for s in out]
    dup = sorted({x for x in labels if labels.count(x) > 1})
    if dup:
        raise ConfigError(path, f"duplicate scheme labels {dup}; set distinct 'label' fields")
    return tuple(out)


def parse_config(data: dict, base_dir: Path | None = None) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("", "config must be a JSON object")
    version = _get(data, "schema", "", int)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema", f"unsupported schema version {version}, expected {SCHEMA_VERSION}")
    model, dims = _build_model(_get(data, "model", ""))
    schemes = _build_schemes(_get(data, "schemes", ""))
    obs_specs = _get(data, "observables", "", list)
    if not obs_specs:
        raise ConfigError("observables", "at least one observable is required")
    observables = tuple(_build_observable(o, f"observables[{i}]", dims) for i, o in enumerate(obs_specs))
    labels = [o.label for o in observables]
    if len(set(labels)) != len(labels):
        raise ConfigError("observables", f"duplicate observable labels {labels}")
    psi0 = _build_state(_get(data, "initial_state", ""), "initial_state", dims)
    dt = _number(_get(data, "dt", ""), "dt")
    t_final = _number(_get(data, "t_final", ""), "t_final")
    if not dt > 0:
        raise ConfigError("dt", "must be positive")
    if not t_final >= dt:
        raise ConfigError("t_final", "must be at least dt")
    try:
        TimeGrid.span(t_final, dt)
    except ConfigurationError as exc:
        raise ConfigError("t_final", str(exc)) from None
    out = Path(_get(data, "output_dir", "", str, default="results"))
    if base_dir is not None and not out.is_absolute():
        out = base_dir / out
    return ExperimentConfig(
        model=model,
        dims=dims,
        schemes=schemes,
        observables=observables,
        initial_state=psi0,
        dt=dt,
        t_final=t_final,
        n_samples=_count(_get(data, "n_samples", ""), "n_samples"),
        n_repeats=_count(_get(data, "n_repeats", "", default=1), "n_repeats"),
        seed=_seed(_get(data, "seed", "", default=0), "seed"),
        output_dir=out,
        threads=_count(_get(data, "threads", "", default=1), "threads"),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} line {exc.lineno} column {exc.colno}", exc.msg) from None
    return parse_config(data, base_dir=path.parent)


def _constant_channels(value, k_count: int, path: str):
    if value is None:
        return None
    vals = [value] * k_count if not isinstance(value, list) else value
    if len(vals) != k_count:
        raise ConfigError(path, f"expected {k_count} per-channel values")
    fns = []
    for i, v in enumerate(vals):
        c = _number(v, f"{path}[{i}]")
        fns.append(lambda psi, c=c: np.full(psi.shape[:-1], c))
    return fns


def build_scheme(spec: SchemeSpec, model: LindbladModel, obs: ObservableSpec | None, all_obs=()):
    """Instantiate a scheme; ``obs`` is required for observable-specific ones."""
    path = f"scheme {spec.label}"
    params = spec.params
    if spec.name == "lqsd":
        s = make_lqsd(model)
    elif spec.name == "rqsd":
        s = make_rqsd(model)
    elif spec.name == "cqsd":
        s = make_cqsd(model)
    elif spec.name == "qjp":
        s = make_qjp(model)
    elif spec.name == "do_qsd":
        s = make_do_qsd(model, obs.matrix)
    elif spec.name == "multi_do_qsd":
        s = make_multi_do_qsd(model, [o.matrix for o in all_obs])
    elif spec.name == "do_qjp":
        per_channel = bool(params.get("per_channel", model.n_ops != 1))
        s = make_do_qjp(model, obs.matrix, float(params["rate_cap"]), per_channel=per_channel)
    else:
        k = model.n_ops
        norm = bool(params.get("norm_preserving", True))
        try:
            dp = DiffusionParams(
                theta=_constant_channels(params.get("theta"), k, f"{path}.theta"),
                h=_constant_channels(params.get("h"), k, f"{path}.h"),
                gamma=_constant_channels(params.get("gamma"), k, f"{path}.gamma"),
                norm_preserving=norm,
                phase_modulus=_number(params.get("phase_modulus", 1.0), f"{path}.phase_modulus"),
            )
        except ConfigError:
            raise
        except ConfigurationError as exc:
            raise ConfigError(path, str(exc)) from None
        s = make_general(model, dp, name=spec.label)
    return s
