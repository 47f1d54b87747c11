import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from unravel.core import IDENTITY2, SIGMA_X, SIGMA_Z, ConfigurationError, LindbladModel, pure_density
from unravel.diffusion import make_do_qsd, make_rqsd
from unravel.models import qubit_state
from unravel.oracle import TimeGrid, exact_expectations
from unravel.rng import RngStream, derive_seed
from unravel.sim import Trajectory, combine_moments, run_ensemble
from unravel.stats import RunSummary, boxplot_summary, empirical_dv, estimate_series, metrics


def _trajs(states):
    return [Trajectory(s, "test", RngStream(0, j)) for j, s in enumerate(states)]


def test_constant_trajectories_have_zero_variance():
    psi = qubit_state("+")
    states = np.broadcast_to(psi, (5, 11, 2))
    s = estimate_series(_trajs(states), SIGMA_X, np.ones(11))
    assert np.allclose(s.mc_mean, 1.0)
    assert np.all(s.mc_variance <= 1e-28)
    assert metrics(s) == (pytest.approx(0.0, abs=1e-15), pytest.approx(0.0, abs=1e-28))


def test_identity_observable(decay):
    grid = TimeGrid(0, 0.01, 40)
    res = run_ensemble(decay, make_rqsd(decay), qubit_state("+"), grid, 64, 1, [IDENTITY2])
    s = estimate_series(res, 0, np.ones(grid.n_steps + 1))
    assert np.allclose(s.mc_mean, 1.0, atol=1e-12)
    assert np.max(s.mc_variance) <= 1e-20
    err, var = metrics(s)
    assert err <= 1e-12 and var <= 1e-20


def test_variance_conventions():
    rng = np.random.default_rng(0)
    states = rng.normal(size=(7, 3, 2)) + 1j * rng.normal(size=(7, 3, 2))
    states /= np.linalg.norm(states, axis=-1, keepdims=True)
    vals = np.einsum("ntj,jk,ntk->nt", states.conj(), SIGMA_Z, states).real
    s = estimate_series(_trajs(states), SIGMA_Z, np.zeros(3))
    assert np.allclose(s.mc_variance, vals.var(axis=0))
    assert np.allclose(s.mc_second_moment, np.mean(vals**2, axis=0))
    assert np.allclose(s.estimator_variance, vals.var(axis=0, ddof=1) / 7)
    assert metrics(s)[1] == pytest.approx(np.mean(vals.var(axis=0, ddof=1) / 7))
    assert metrics(s)[0] == pytest.approx(np.mean(np.abs(vals.mean(axis=0))))


@given(seed=st.integers(0, 2**32 - 1))
def test_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    states = rng.normal(size=(9, 4, 2)) + 1j * rng.normal(size=(9, 4, 2))
    states /= np.linalg.norm(states, axis=-1, keepdims=True)
    a = estimate_series(_trajs(states), SIGMA_X)
    b = estimate_series(_trajs(states[rng.permutation(9)]), SIGMA_X)
    assert np.allclose(a.mc_mean, b.mc_mean, atol=1e-14)
    assert np.allclose(a.mc_variance, b.mc_variance, atol=1e-14)


@given(st.lists(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20), min_size=1, max_size=6))
def test_combine_moments_matches_direct(chunks):
    parts = []
    for c in chunks:
        x = np.array(c)
        parts.append((x.size, x.mean(), np.sum((x - x.mean()) ** 2)))
    n, mean, m2 = combine_moments(parts)
    allx = np.concatenate([np.array(c) for c in chunks])
    assert n == allx.size
    assert mean == pytest.approx(allx.mean(), abs=1e-9)
    assert m2 == pytest.approx(np.sum((allx - allx.mean()) ** 2), rel=1e-9, abs=1e-6)


def test_estimate_series_errors():
    with pytest.raises(ConfigurationError):
        estimate_series([], SIGMA_X)
    with pytest.raises(ConfigurationError):
        estimate_series(_trajs(np.ones((2, 3, 2)) / np.sqrt(2)), SIGMA_X, np.zeros(4))
    with pytest.raises(ConfigurationError):
        metrics(estimate_series(_trajs(np.ones((2, 3, 2)) / np.sqrt(2)), SIGMA_X))


def test_boxplot_summary():
    q = boxplot_summary([1.0])
    assert (q.min, q.q1, q.median, q.q3, q.max) == (1.0,) * 5
    q = boxplot_summary(range(1, 11))
    assert q.median == 5.5 and q.q1 == 3.25 and q.q3 == 7.75 and q.min == 1 and q.max == 10
    with pytest.raises(ConfigurationError):
        boxplot_summary([])


def test_run_summary_round_trip():
    r = RunSummary()
    for e, v in [(0.3, 1e-4), (0.1, 3e-4), (0.2, 2e-4)]:
        r.add(e, v)
    d = r.to_dict()
    assert d["trajectory_error"] == 0.2 and d["averaged_var"] == 2e-4 and d["repeats"] == 3
    assert d["trajectory_error_quartiles"]["max"] == 0.3
    assert RunSummary.from_dict(d) == r


def test_empirical_dv_zero_model():
    m = LindbladModel(np.zeros((2, 2), complex), (np.zeros((2, 2), complex),))
    rate, se = empirical_dv(m, make_rqsd(m), SIGMA_X, qubit_state("+"), 1e-3, 100, 0)
    assert abs(rate) <= 1e-10 and se <= 1e-10


@pytest.mark.slow
def test_estimator_variance_scales_as_one_over_n(decay):
    grid = TimeGrid(0, 1e-2, 100)
    scheme = make_rqsd(decay)
    ratios = []
    for rep in range(10):
        seed = derive_seed(77, rep)
        small = run_ensemble(decay, scheme, qubit_state("+"), grid, 500, seed, [SIGMA_Z])
        big = run_ensemble(decay, scheme, qubit_state("+"), grid, 1000, derive_seed(78, rep), [SIGMA_Z])
        v_small = np.mean(estimate_series(small, 0).estimator_variance)
        v_big = np.mean(estimate_series(big, 0).estimator_variance)
        ratios.append(v_big / v_small)
    assert 0.4 <= np.median(ratios) <= 0.6


@pytest.mark.slow
def test_do_qsd_sigma_x_tracks_exact_decay(decay):
    # sigma_x relaxes as exp(-lambda0 (2 nu + 1) t / 2) = exp(-5 t)
    grid = TimeGrid(0, 1e-3, 500)
    res = run_ensemble(decay, make_do_qsd(decay, SIGMA_X), qubit_state("+"), grid, 1000, 4, [SIGMA_X])
    exact = np.exp(-5.0 * grid.times)
    assert np.allclose(exact, exact_expectations(decay, pure_density(qubit_state("+")), grid, [SIGMA_X])[0], atol=1e-7)
    s = estimate_series(res, 0, exact)
    assert np.all(np.abs(s.mc_mean - exact) <= 4 * s.standard_error + 1e-12)
