import numpy as np
import pytest
from numpy.testing import assert_allclose

from ..exceptions import DimensionError, MicArrayWarning
from ..features_mft import (DiagonalGmm, FeatureMask, compute_mask, decimate,
                            delta_features, delta_mask, hz2mel, mel2hz,
                            mel_energies, mel_features, mel_filterbank,
                            mft_gmm_score, rebin_frames)


def test_mel_scale():
    assert_allclose(hz2mel(700.), 2595.*np.log10(2.))
    f = np.array([0., 300., 1000., 8000.])
    assert_allclose(mel2hz(hz2mel(f)), f, atol=1e-9)


def test_filterbank_partition():
    f = np.linspace(0., 8000., 2001)
    fb = mel_filterbank(f, 24)
    assert fb.shape == (24, 2001)
    assert np.all(fb >= 0.) and np.all(fb <= 1.)
    centres = mel2hz(np.linspace(0., hz2mel(8000.), 26))[1:-1]
    inner = (f >= centres[0]) & (f <= centres[-1])
    assert_allclose(fb[:, inner].sum(axis=0), 1., atol=1e-9)


def test_feature_shapes(rng):
    features = mel_features(rng.standard_normal(16000))
    assert len(features) == 98
    assert features.static.shape == (98, 24)
    assert features.matrix().shape == (98, 48)
    frame = features[10]
    assert frame.index == 10
    assert_allclose(frame.delta, features.delta[10])
    assert len(list(features)) == 98


def test_lifter_and_mean_subtraction(rng):
    x = rng.standard_normal(8000)
    features = mel_features(x)
    # no utterance mean and no frame energy
    assert_allclose(features.static.mean(axis=0), 0., atol=1e-9)
    assert_allclose(features.static.mean(axis=1), 0., atol=1e-9)
    # hence insensitive to the recording level
    assert_allclose(mel_features(10.*x).static, features.static, atol=1e-6)

    raw = mel_features(x, lifter=False, cms=False)
    assert_allclose(mel_features(10.*x, lifter=False, cms=False).static,
                    raw.static + np.log(100.), atol=1e-6)


def test_feature_errors():
    with pytest.raises(DimensionError):
        mel_features(np.zeros((2, 16000)))
    with pytest.raises(DimensionError):
        mel_features(np.zeros(300))


def test_delta_features():
    ramp = np.outer(np.arange(20.), [1., -2.])
    d = delta_features(ramp)
    assert_allclose(d[2:-2], np.tile([1., -2.], (16, 1)))
    # edge frames are repeated, so the slope flattens at the ends
    assert np.all(np.abs(d[0]) < np.abs(d[10]))


def test_delta_mask():
    mask = np.ones((10, 2), dtype=int)
    mask[5, 0] = 0
    d = delta_mask(mask)
    assert d[:, 0].tolist() == [0, 0, 1, 0, 0, 0, 0, 0, 0, 0]
    assert d[:, 1].tolist() == [0, 0, 1, 1, 1, 1, 1, 1, 0, 0]
    assert delta_mask(np.ones((3, 1))).sum() == 0


def test_compute_mask():
    S_in = np.array([[1., 4., 0.], [2., 8., 1.]])
    S_out = np.array([[1., 0.5, 0.], [0., 1., 0.1]])
    noise = np.array([[0., 0.5, 0.], [0.2, 0., 0.1]])
    mask = compute_mask(S_in, S_out, noise, threshold=0.25, half_width=0)
    assert isinstance(mask, FeatureMask)
    assert_allclose(mask.continuous, [[1., 0.25, 1.], [0.1, 0.125, 0.2]])
    assert mask.binary.tolist() == [[1, 0, 1], [0, 0, 0]]
    assert mask.matrix().shape == (2, 6)
    with pytest.raises(DimensionError):
        compute_mask(S_in, S_out, noise[:1])


def test_silent_input_keeps_all_features():
    zeros = np.zeros((12, 24))
    mask = compute_mask(zeros, zeros, zeros)
    assert np.all(mask.binary == 1)
    assert mask.delta[2:-2].all()


def simple_gmm():
    return DiagonalGmm([0.3, 0.7], [[0., 0., 0.], [2., 1., -1.]],
                       [[1., 1., 1.], [0.5, 2., 1.]])


def test_gmm_full_likelihood():
    gmm = simple_gmm()
    x = np.array([1., 0.5, -0.5])

    def logpdf(mean, var):
        return -0.5*np.sum(np.log(2*np.pi*np.array(var))
                           + (x - mean)**2/np.array(var))

    expected = np.log(0.3*np.exp(logpdf([0., 0., 0.], [1., 1., 1.]))
                      + 0.7*np.exp(logpdf([2., 1., -1.], [0.5, 2., 1.])))
    assert_allclose(gmm.log_likelihood(x), expected)


def test_marginalisation_matches_reduced_model(rng):
    gmm = simple_gmm()
    x = rng.standard_normal((5, 3))
    mask = np.array([1, 0, 1])
    score = mft_gmm_score(gmm, x, np.tile(mask, (5, 1)))
    reduced = gmm.drop_dimensions([1])
    assert reduced.n_dims == 2
    assert_allclose(score, reduced.log_likelihood(x[:, [0, 2]]))
    assert isinstance(mft_gmm_score(gmm, x[0], mask), float)


def test_empty_mask_scores_zero():
    gmm = simple_gmm()
    mask = np.array([[1, 1, 1], [0, 0, 0]])
    with pytest.warns(MicArrayWarning):
        score = mft_gmm_score(gmm, np.ones((2, 3)), mask)
    assert score[1] == 0.
    assert score[0] < 0.


def test_gmm_validation():
    with pytest.raises(ValueError):
        DiagonalGmm([0.5, 0.6], np.zeros((2, 2)), np.ones((2, 2)))
    with pytest.raises(ValueError):
        DiagonalGmm([1.], np.zeros((1, 2)), np.zeros((1, 2)))
    with pytest.raises(DimensionError):
        DiagonalGmm([1.], np.zeros((1, 2)), np.ones((1, 3)))
    with pytest.raises(DimensionError):
        mft_gmm_score(simple_gmm(), np.zeros(4), np.ones(4))


def test_decimate():
    t = np.arange(48000)/48000.
    y = decimate(np.sin(2*np.pi*440.*t))
    assert y.shape == (16000,)
    t16 = np.arange(16000)/16000.
    assert_allclose(y[1000:-1000], np.sin(2*np.pi*440.*t16[1000:-1000]),
                    atol=1e-2)


def test_rebin_frames():
    values = np.arange(10.)[:, np.newaxis]*np.ones((1, 3))
    same = rebin_frames(values, 512, 1024, 48000, 10, 512, 1024, 48000)
    assert_allclose(same[1:-1], values[1:-1], atol=0.6)
    # 10 ms frames on both grids
    aligned = rebin_frames(values, 480, 480, 48000, 4, 160, 160, 16000)
    assert_allclose(aligned[:, 0], [0., 1., 2., 3.])
    # shorter frames inside one source frame take its value
    fine = rebin_frames(values, 480, 480, 48000, 6, 80, 80, 16000)
    assert_allclose(fine[:, 0], [0., 0., 1., 1., 2., 2.])
    # beyond the last source frame the nearest one is used
    far = rebin_frames(values[:2], 512, 512, 48000, 6, 160, 160, 16000)
    assert_allclose(far[-1], values[1])


def test_mel_energies(rng):
    power = rng.random((94, 513))
    energies = mel_energies(power)
    duration = (93*512 + 1024)/48000.
    assert energies.shape == (int((duration*16000 - 400)//160) + 1, 24)
    assert np.all(energies >= 0.)
    assert mel_energies(power, n_frames=10).shape == (10, 24)
    with pytest.raises(DimensionError):
        mel_energies(power[:, :100])
