import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from unravel.core import SIGMA_X, SIGMA_Z, ConfigurationError, LindbladModel, apply_generator, pure_density, random_density
from unravel.models import qubit_state
from unravel.oracle import TimeGrid, exact_expectations, liouvillian_matrix, propagate_exact, unvec, vec

from conftest import random_model

PLUS = qubit_state("+")


def test_time_grid():
    g = TimeGrid.span(2.0, 1e-3)
    assert g.n_steps == 2000 and g.times[-1] == pytest.approx(2.0)
    with pytest.raises(ConfigurationError):
        TimeGrid(0.0, 0.0, 3)
    with pytest.raises(ConfigurationError):
        TimeGrid.span(1.0, 0.3)


def test_vec_is_column_stacking():
    x = np.arange(4).reshape(2, 2)
    assert np.array_equal(vec(x), [0, 2, 1, 3])
    assert np.array_equal(unvec(vec(x), 2), x)


def test_zero_liouvillian():
    m = LindbladModel(np.zeros((2, 2)), (np.zeros((2, 2)),))
    assert not np.any(liouvillian_matrix(m))


@given(seed=st.integers(0, 2**32 - 1), dim=st.integers(1, 4), k=st.integers(0, 3))
def test_liouvillian_matches_generator(seed, dim, k):
    rng = np.random.default_rng(seed)
    m = random_model(dim, k, rng)
    rho = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    lm = liouvillian_matrix(m)
    assert np.max(np.abs(lm @ vec(rho) - vec(apply_generator(m, rho)))) <= 1e-10
    # trace preservation: vec(I)^+ L = 0
    assert np.max(np.abs(vec(np.eye(dim)).conj() @ lm)) <= 1e-10


def test_jump_term_is_conj_kron(rng):
    op = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    rho = random_density(3, rng)
    assert np.allclose(np.kron(op.conj(), op) @ vec(rho), vec(op @ rho @ op.conj().T))


def test_decay_bloch_solution(decay):
    grid = TimeGrid.span(2.0, 1e-3)
    x = exact_expectations(decay, pure_density(PLUS), grid, [SIGMA_X, SIGMA_Z])
    t = grid.times
    assert np.max(np.abs(x[0] - np.exp(-5 * t))) <= 1e-7
    assert np.max(np.abs(x[1] + 0.5 * (1 - np.exp(-10 * t)))) <= 1e-7


def test_zero_generator_keeps_state(rng):
    m = LindbladModel(np.zeros((3, 3)))
    rho = random_density(3, rng)
    out = propagate_exact(m, rho, TimeGrid(0.0, 0.1, 5))
    assert np.allclose(out, rho[None], atol=1e-15)


def test_outputs_are_states_and_semigroup(decay, rng):
    rho0 = random_density(2, rng)
    grid = TimeGrid(0.0, 0.01, 100)
    rhos = propagate_exact(decay, rho0, grid)
    for r in rhos:
        assert abs(np.trace(r) - 1) <= 1e-8
        assert np.linalg.eigvalsh(r).min() >= -1e-8
    first = propagate_exact(decay, rho0, TimeGrid(0.0, 0.01, 40))[-1]
    second = propagate_exact(decay, first, TimeGrid(0.0, 0.01, 60))[-1]
    assert np.max(np.abs(second - rhos[-1])) <= 1e-7


def test_cavity_truncation_negligible(cavity):
    from unravel.models import fock_state, product_state

    psi = product_state(PLUS, fock_state(10, 0))
    rhos = propagate_exact(cavity, pure_density(psi), TimeGrid.span(2.0, 0.01))
    top = [np.trace(r.reshape(2, 10, 2, 10)[:, 9, :, 9]).real for r in rhos]
    assert max(top) < 1e-6
