import numpy as np
import pytest
from numpy.testing import assert_allclose

from .. import utils
from ..exceptions import DimensionError
from ..separation import (DemixingState, GeometricSeparator, apply_demixing,
                          build_mixing_matrix, gss_costs, gss_gradients,
                          gss_update, init_demixing, steering_delays)


def test_far_field_delays(cube_mics):
    u = utils.sph2cart(0., 0.)
    delays = steering_delays(u, cube_mics)
    assert_allclose(delays.sum(), 0., atol=1e-9)
    # microphones facing the source hear it first
    front = cube_mics[:, 0] > 0
    assert np.all(delays[front] < 0) and np.all(delays[~front] > 0)
    assert_allclose(np.abs(delays), 0.15*48000/343.)


def test_near_field_delays(cube_mics):
    u = utils.sph2cart(40., -20.)
    far = steering_delays(u, cube_mics)
    near = steering_delays(u, cube_mics, distance=1e5)
    assert_allclose(near, far, atol=1e-3)
    close = steering_delays(u, cube_mics, distance=0.5)
    assert not np.allclose(close, far, atol=0.1)


def test_delay_and_sum_init(cube_mics):
    model = build_mixing_matrix(utils.sph2cart([0., 90.], [0., 0.]), cube_mics)
    assert model.A.shape == (513, 8, 2)
    assert model.n_sources == 2
    assert_allclose(np.abs(model.A), 1.)
    W = init_demixing(model)
    WA = np.einsum('kmn,knj->kmj', W, model.A)
    assert_allclose(WA[:, 0, 0], 1.)
    assert_allclose(WA[:, 1, 1], 1.)
    with pytest.raises(ValueError):
        build_mixing_matrix(np.zeros((0, 3)), cube_mics)


def _cost(W, x, A):
    J1, J2 = gss_costs(W, x, A)
    return J1.sum() + J2.sum()


def test_gradients_match_finite_differences(rng):
    K, N, M = 3, 4, 2
    W = rng.standard_normal((K, M, N)) + 1j*rng.standard_normal((K, M, N))
    x = rng.standard_normal((K, N)) + 1j*rng.standard_normal((K, N))
    A = np.exp(2j*np.pi*rng.random((K, N, M)))
    grad1, grad2 = gss_gradients(W, x, A)
    grad = grad1 + grad2
    eps = 1e-6
    for index in [(0, 0, 0), (1, 1, 2), (2, 0, 3)]:
        dW = np.zeros_like(W)
        dW[index] = eps
        dRe = (_cost(W + dW, x, A) - _cost(W - dW, x, A))/(2*eps)
        dIm = (_cost(W + 1j*dW, x, A) - _cost(W - 1j*dW, x, A))/(2*eps)
        assert_allclose(grad[index], dRe + 1j*dIm, rtol=1e-5)


def test_update_enforces_geometric_constraint(rng, cube_mics):
    model = build_mixing_matrix(utils.sph2cart([-60., 60.], [0., 0.]), cube_mics)
    state = DemixingState(8, 513)
    for m in range(2):
        state.add_source(m, model.A[:, :, m])
    band = slice(50, 513)

    def leakage():
        WA = np.einsum('kmn,knj->kmj', state.W, model.A)
        return np.mean(np.abs(WA[band, 0, 1]) + np.abs(WA[band, 1, 0]))

    before = leakage()
    for _ in range(200):
        s = rng.standard_normal((513, 2)) + 1j*rng.standard_normal((513, 2))
        gss_update(state, np.einsum('knm,km->kn', model.A, s), model.A)
    assert leakage() < 0.5*before


def test_update_rows_and_silence(cube_mics):
    model = build_mixing_matrix(utils.sph2cart([0., 120.], [0., 0.]), cube_mics)
    state = DemixingState(8, 513)
    state.add_source('a', model.A[:, :, 0])
    state.add_source('b', model.A[:, :, 1])
    W0 = state.W.copy()
    gss_update(state, np.zeros((513, 8)), model.A, rows=[True, False])
    assert_allclose(state.W[:, 1], W0[:, 1])
    # silent frames only apply the geometric and shrinkage terms
    assert not np.allclose(state.W[:, 0], W0[:, 0])
    with pytest.raises(DimensionError):
        gss_update(state, np.zeros((513, 4)), model.A)


def test_state_rows(cube_mics):
    model = build_mixing_matrix(utils.sph2cart([0., 120.], [0., 0.]), cube_mics)
    state = DemixingState(8, 513)
    state.add_source(3, model.A[:, :, 0])
    first = state.W.copy()
    state.add_source(7, model.A[:, :, 1])
    assert_allclose(state.W[:, :1], first)
    state.remove_source(3)
    assert state.source_ids == [7]
    assert_allclose(state.W[:, 0], init_demixing(model.A)[:, 1])
    with pytest.raises(ValueError):
        state.add_source(7, model.A[:, :, 1])
    with pytest.raises(DimensionError):
        state.add_source(8, model.A[:100, :, 1])


def test_apply_demixing_shapes(rng):
    W = rng.standard_normal((5, 2, 3))
    frames = rng.standard_normal((3, 10, 5))
    y = apply_demixing(W, frames)
    assert y.shape == (2, 10, 5)
    assert_allclose(y[:, 4, :], apply_demixing(W, frames[:, 4, :].T).T)
    with pytest.raises(DimensionError):
        apply_demixing(W, rng.standard_normal((4, 10, 5)))


def test_separator_follows_sources(cfg, rng):
    separator = GeometricSeparator.from_config(cfg, frozen=True)
    u = utils.sph2cart(45., 0.)
    separator.set_sources([(1, u, 1.)])
    assert separator.source_ids == [1]

    # a plane wave from the steered direction passes unchanged
    s = rng.standard_normal(513) + 1j*rng.standard_normal(513)
    a = separator._steering(u)
    y, filtered = separator.process_frame((a*s[:, np.newaxis]).T,
                                          references=[(a*s[:, np.newaxis]).T])
    assert y.shape == (1, 513)
    assert_allclose(y[0], s)
    assert_allclose(filtered[0], y)

    separator.set_sources([(1, utils.sph2cart(60., 0.), 1.), (4, -u, 0.5)])
    assert separator.source_ids == [1, 4]
    assert_allclose(separator.directions[1], utils.sph2cart(60., 0.))
    assert separator.A.shape == (513, 8, 2)
    separator.set_sources([(4, -u, 0.5)])
    assert separator.source_ids == [4]
    assert separator.A.shape == (513, 8, 1)


def test_separator_activity_gate(cfg, rng):
    separator = GeometricSeparator.from_config(cfg)
    separator.set_sources([(0, utils.sph2cart(0., 0.), 0.01)])
    W0 = separator.state.W.copy()
    separator.process_frame(rng.standard_normal((8, 513)))
    assert_allclose(separator.state.W, W0)
    separator.set_sources([(0, utils.sph2cart(0., 0.), 0.9)])
    separator.process_frame(rng.standard_normal((8, 513)))
    assert not np.allclose(separator.state.W, W0)
