import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from ..exceptions import EvaluationError
from ..metrics import EvalReport, attenuation, band_limit, lsd, snr

FS = 16000


@pytest.fixture
def speech_band_noise(rng):
    return band_limit(rng.standard_normal(FS), FS, (200., 4000.))


def test_band_limit(rng):
    x = rng.standard_normal(1000)
    assert_allclose(band_limit(x, FS, None), x)
    t = np.arange(FS)/FS
    high = np.sin(2*np.pi*7000.*t)
    assert np.std(band_limit(high, FS)[1000:-1000]) < 1e-2


def test_snr(speech_band_noise):
    x = speech_band_noise
    assert snr(x, x, FS) == 99.
    assert snr(x, x, FS, cap_db=40.) == 40.
    assert_allclose(snr(0.5*x, x, FS), 10*np.log10(4.))
    # errors outside the band do not count
    t = np.arange(FS)/FS
    hum = 0.5*np.std(x)*np.sin(2*np.pi*7000.*t)
    assert snr(x + hum, x, FS) > 30.
    assert snr(x + hum, x, FS, band=None) < 10.


def test_snr_errors(speech_band_noise):
    with pytest.raises(EvaluationError):
        snr(speech_band_noise[:-1], speech_band_noise, FS)
    with pytest.raises(EvaluationError):
        snr(speech_band_noise, np.zeros(FS), FS)


def test_lsd(speech_band_noise, rng):
    x = speech_band_noise
    assert lsd(x, x, FS, 512) == 0.
    assert_allclose(lsd(2.*x, x, FS, 512), 20*np.log10(2.), atol=0.05)
    y = x + 0.3*band_limit(rng.standard_normal(FS), FS, (200., 4000.))
    assert_allclose(lsd(x, y, FS, 512), lsd(y, x, FS, 512))
    with pytest.raises(EvaluationError):
        lsd(x, x[:-10], FS, 512)


def test_attenuation():
    x = np.ones(200)
    y = np.concatenate([0.01*np.ones(100), np.ones(100)])
    assert_allclose(attenuation(y, x, [(0, 100)]), 40.)
    assert_allclose(attenuation(y, x, [(0, 50), (150, 200)]),
                    10*np.log10(100./(50*1e-4 + 50)))
    assert attenuation(np.zeros(200), x, [(0, 10)]) == 99.
    with pytest.raises(EvaluationError):
        attenuation(y, x, [])
    with pytest.raises(EvaluationError):
        attenuation(y, np.zeros(200), [(0, 10)])


def test_report(tmp_path):
    report = EvalReport(['source_0', 'source_1'], [12., 8.], [3., 4.],
                        [20., np.nan], input_snr_db=[2., 3.])
    assert_allclose(report.snr_gain_db, [10., 5.])
    df = report.to_dataframe()
    assert list(df['source']) == ['source_0', 'source_1']
    assert (df['reference'] == 'gss').all()
    text = str(report)
    assert 'source_1' in text and '300-3400 Hz' in text

    filename = str(tmp_path / 'eval.csv')
    report.write(filename)
    back = pd.read_csv(filename)
    assert_allclose(back['snr_db'], [12., 8.])
    assert np.isnan(back['attenuation_db'][1])

    with pytest.raises(EvaluationError):
        EvalReport(['a'], [1., 2.], [1.], [1.])
    assert np.isnan(EvalReport(['a'], [1.], [1.], [1.]).snr_gain_db[0])
