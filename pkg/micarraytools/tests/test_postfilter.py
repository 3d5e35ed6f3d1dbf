import numpy as np
import pytest
from numpy.testing import assert_allclose

from ..exceptions import DimensionError
from ..postfilter import (DIAGNOSTIC_FIELDS, PostFilter, PostfilterState,
                          apply_gain, compute_gain_h1, estimate_noise, exp1,
                          hann_kernel, init_noise, leakage_noise,
                          log_mmse_gain, presence_prior, speech_presence,
                          stsa_gain)

K = 513


def complex_noise(rng, shape, power=1.):
    return np.sqrt(power/2.)*(rng.standard_normal(shape)
                              + 1j*rng.standard_normal(shape))


def run_frames(pf, frames):
    return np.array([pf.process_frame(Y) for Y in frames])


def test_init_noise():
    assert_allclose(init_noise(np.full((8, 4), 2.)), 0.25)
    assert_allclose(init_noise(np.ones((4, 3)), n_mics=2), 1.)


def test_leakage_noise():
    Z = np.array([[1.], [2.], [4.]])
    assert_allclose(leakage_noise(Z, 0.5)[:, 0], [3., 2.5, 1.5])


def test_gains_reach_wiener_at_high_snr():
    assert_allclose(log_mmse_gain(1., 1e3), 0.5, rtol=1e-3)
    assert_allclose(stsa_gain(1., 1e4), 0.5, rtol=1e-3)
    # both estimators exceed the Wiener gain at low a posteriori SNR
    assert log_mmse_gain(1., 1.) > 0.5
    assert stsa_gain(1., 1.) > 0.5


# E1(x) to 17 digits
EXP1_REFERENCE = [
    (1e-6, 13.238295893062491),
    (0.1, 1.8229239584193907),
    (0.5, 0.5597735947761608),
    (1., 0.21938393439552027),
    (2., 0.04890051070806112),
    (5., 1.1482955912753257e-3),
    (10., 4.156968929685324e-6),
    (50., 3.783264029550459e-24),
]


def test_log_mmse_gain_value():
    assert_allclose(log_mmse_gain(1., 2.), 0.5*np.exp(0.5*0.21938393439552027),
                    rtol=0, atol=1e-6)
    assert_allclose(log_mmse_gain(1., 2.), 0.5578, atol=1e-4)


@pytest.mark.parametrize(('v', 'expected'), EXP1_REFERENCE)
def test_exponential_integral(v, expected):
    assert_allclose(exp1(v), expected, rtol=1e-8)
    # xi = 1, gamma = 2v gives v = gamma xi/(1+xi)
    assert_allclose(log_mmse_gain(1., 2.*v), 0.5*np.exp(0.5*expected),
                    rtol=1e-8)


def test_frame_presence_is_hann_weighted():
    state = PostfilterState(5)
    unit = np.ones(1)
    # Hann weights over five bins are 1/4, 3/4, 1, 3/4, 1/4
    xi = np.array([4., 0., 0., 0., 4.])
    speech_presence(state, xi, xi, unit, unit, alpha_zeta=1.)
    assert_allclose(state.zeta_frame, 2./3.)
    xi = np.array([0., 0., 3., 0., 0.])
    p = speech_presence(state, xi, xi, unit, unit, alpha_zeta=0.3)
    assert_allclose(state.zeta_frame, 0.7*2./3. + 0.3*1.)
    assert np.all((p >= 0.) & (p <= 1.))


def test_hann_kernel():
    for bandwidth in (140., 1400.):
        h = hann_kernel(bandwidth, 46.875)
        assert_allclose(h.sum(), 1.)
        assert len(h) % 2 == 1
        assert_allclose(h, h[::-1])
    assert len(hann_kernel(1400., 46.875)) == 31


def test_presence_prior():
    assert presence_prior(0., 0.3) == 0.
    assert presence_prior(1e6, 0.3) > 0.999
    assert_allclose(presence_prior(np.array([0.3, 0.6]), 0.3), [0.5, 0.8])


def test_apply_gain_bounds():
    gainH1 = np.array([0., 0.05, 0.5, 1., 3.])
    for p in (0., 0.5, 1.):
        S, G = apply_gain(np.ones(5), gainH1, np.full(5, p))
        assert np.all((G >= 0.1 - 1e-12) & (G <= 1.))
    S, G = apply_gain(np.ones(5), gainH1, np.ones(5))
    assert_allclose(G, [0.1, 0.1, 0.5, 1., 1.])
    S, G = apply_gain(2.*np.ones(5), gainH1, np.zeros(5))
    assert_allclose(S, 0.2)


def test_gain_mode():
    state = PostfilterState(4)
    with pytest.raises(ValueError):
        compute_gain_h1(state, np.ones(4), np.ones(4), mode='wiener')


def test_estimate_noise_terms():
    states = [PostfilterState(2) for _ in range(2)]
    for s in states:
        s.lambda_stat = np.ones(2)
        s.output_power = np.full(2, 3.3)
    Y = np.array([[10., 10.], [0., 0.]])
    lam = estimate_noise(states, Y, eta=0.1, alpha_s=0., gamma=0.5, delta=3.3)
    # stationary + leakage of the other output + reverberation of both
    assert_allclose(lam[0], 1. + 0. + 1.)
    assert_allclose(lam[1], 1. + 10. + 1.)
    lam = estimate_noise(states, Y, eta=0.1, alpha_s=0., gamma=0.5, delta=3.3,
                         leak=False, reverb=False)
    assert_allclose(lam, 1.)
    with pytest.raises(DimensionError):
        estimate_noise(states, np.ones((3, 2)))


def test_noise_is_attenuated(rng):
    pf = PostFilter(leak=False)
    pf.sync([0], mic_noise=np.full((8, K), 8.))
    Y = complex_noise(rng, (300, 1, K))
    S = run_frames(pf, Y)
    ratio = np.mean(np.abs(S[100:])**2)/np.mean(np.abs(Y[100:])**2)
    assert ratio < 0.25
    assert np.all(np.abs(S) <= np.abs(Y) + 1e-12)


def test_strong_signal_passes(rng):
    pf = PostFilter(leak=False, reverb=False)
    pf.sync([0], mic_noise=np.full((8, K), 8.))
    Y = (30.*np.exp(2j*np.pi*rng.random((100, 1, K)))
         + complex_noise(rng, (100, 1, K)))
    S = run_frames(pf, Y)
    ratio = np.mean(np.abs(S[50:])**2)/np.mean(np.abs(Y[50:])**2)
    assert ratio > 0.9


def test_leakage_term_suppresses_crosstalk(rng):
    loud = 10.*np.exp(2j*np.pi*rng.random((100, K)))
    crosstalk = 0.3*loud + complex_noise(rng, (100, K), 0.1)
    Y = np.stack([loud, crosstalk], axis=1)
    power = {}
    for leak in (True, False):
        pf = PostFilter(leak=leak, reverb=False)
        pf.sync([0, 1], mic_noise=np.full((8, K), 8.))
        S = run_frames(pf, Y)
        power[leak] = np.mean(np.abs(S[50:, 1])**2)
    assert power[True] < 0.5*power[False]


def test_sources_and_diagnostics(rng):
    pf = PostFilter(reverb=False)
    assert pf.process_frame(np.zeros((0, K))).shape == (0, K)
    pf.sync([2, 5])
    assert pf.source_ids == [2, 5]
    run_frames(pf, complex_noise(rng, (10, 2, K)))
    pf.sync([5, 6])
    assert pf.source_ids == [5, 6]
    run_frames(pf, complex_noise(rng, (4, 2, K)))

    diagnostics = pf.diagnostic_arrays()
    assert sorted(diagnostics) == [2, 5, 6]
    assert diagnostics[2]['frame'].tolist() == list(range(1, 11))
    assert diagnostics[5]['frame'].tolist() == list(range(1, 15))
    assert diagnostics[6]['frame'].tolist() == list(range(11, 15))
    for name in DIAGNOSTIC_FIELDS:
        assert diagnostics[5][name].shape == (14, K)
    assert_allclose(diagnostics[5]['lambda_rev'], 0., atol=1e-9)
    assert np.all((diagnostics[5]['p'] >= 0) & (diagnostics[5]['p'] <= 1))


def test_from_config(cfg):
    pf = PostFilter.from_config(cfg, leak=False)
    assert not pf.leak
    assert pf.reverb
    assert_allclose(pf.gain_min, 0.1)
    assert pf.gain_mode == 'log'
