""" Separation quality measures.

All measures compare time-aligned signals of equal length: band-limited
signal-to-noise ratio against a reference, log-spectral distortion and
the attenuation of a source's channel while the source is silent.
"""
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import signal

from .audio_stft import MultichannelBuffer, stft_analyze
from .exceptions import EvaluationError

__all__ = ['band_limit', 'snr', 'lsd_spectra', 'lsd', 'attenuation',
           'EvalReport']

CAP_DB = 99.


def _check_lengths(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise EvaluationError('signals of {} and {} samples differ in length'
                              .format(a.shape[-1], b.shape[-1]))
    return a, b


def band_limit(x, sample_rate=48000., band=(300., 3400.), order=4):
    """ Zero-phase Butterworth band-pass.

    Parameters
    ----------
    x : array
        signal(s), filtered along the last axis
    band : tuple or None
        pass band [Hz]; None returns `x` unchanged
    """
    if band is None:
        return np.asarray(x, dtype=float)
    sos = signal.butter(order, band, 'bandpass', fs=sample_rate, output='sos')
    return signal.sosfiltfilt(sos, x, axis=-1)


def snr(estimate, reference, sample_rate=48000., band=(300., 3400.),
        cap_db=CAP_DB):
    """ Signal-to-noise ratio of an estimate against a reference.

    10 log10(sum ref^2 / sum (est - ref)^2) after band-limiting both signals,
    capped at `cap_db`.

    Parameters
    ----------
    estimate, reference : array
        aligned signals of equal length
    band : tuple or None
        evaluation band [Hz]

    Returns
    -------
    snr : float
        [dB]

    Example
    -------
    >>> x = np.random.default_rng(1).standard_normal(4800)
    >>> snr(np.zeros(4800), x)
    0.0
    """
    estimate, reference = _check_lengths(estimate, reference)
    ref = band_limit(reference, sample_rate, band)
    err = band_limit(estimate, sample_rate, band) - ref
    refEnergy = np.sum(ref**2)
    if refEnergy == 0:
        raise EvaluationError('reference has zero energy')
    errEnergy = np.sum(err**2)
    if errEnergy == 0:
        return float(cap_db)
    return float(min(cap_db, 10.*np.log10(refEnergy/errEnergy)))


def lsd_spectra(estimate, reference, eps):
    """ Log-spectral distortion between two spectrograms.

    Per frame the RMS over bins of
    10 log10(max(|S|^2, eps) / max(|S_est|^2, eps)) is taken and averaged
    over frames.

    Parameters
    ----------
    estimate, reference : array
        complex or magnitude spectra of shape (n_frames, n_bins)
    eps : float or array
        power floor, scalar or per bin

    Returns
    -------
    lsd : float
        [dB]

    Example
    -------
    >>> lsd_spectra(np.ones((2, 3)), np.sqrt(10.)*np.ones((2, 3)), 1e-6)
    10.0
    """
    est = np.maximum(np.abs(estimate)**2, eps)
    ref = np.maximum(np.abs(reference)**2, eps)
    if est.shape != ref.shape:
        raise EvaluationError('spectra of shapes {} and {} differ'.format(
            est.shape, ref.shape))
    d = 10.*np.log10(ref/est)
    return float(np.mean(np.sqrt(np.mean(d**2, axis=-1))))


def lsd(estimate, reference, sample_rate=48000., frame_length=1024,
        band=(300., 3400.), eps_factor=1e-5):
    """ Log-spectral distortion of two signals.

    Both signals are analysed with the package STFT; only bins inside
    `band` are compared. The floor eps(k) is `eps_factor` times the
    mean power of both signals in bin k, which keeps the measure symmetric.

    Returns
    -------
    lsd : float
        [dB]
    """
    estimate, reference = _check_lengths(estimate, reference)
    specs = [stft_analyze(MultichannelBuffer(x, sample_rate),
                          frame_length).frames[0]
             for x in (estimate, reference)]
    freqs = np.fft.rfftfreq(frame_length, 1./sample_rate)
    sel = np.ones(len(freqs), dtype=bool) if band is None else \
        (freqs >= band[0]) & (freqs <= band[1])
    est, ref = specs[0][:, sel], specs[1][:, sel]
    eps = eps_factor*0.5*(np.mean(np.abs(est)**2, axis=0)
                          + np.mean(np.abs(ref)**2, axis=0))
    eps = np.maximum(eps, 1e-30)
    return lsd_spectra(est, ref, eps)


def attenuation(processed, unprocessed, segments, cap_db=CAP_DB):
    """ Attenuation of a channel over silence segments.

    10 log10(input power / output power) over the union of `segments`.

    Parameters
    ----------
    processed, unprocessed : array
        output and input signals of equal length
    segments : list of tuple
        sample intervals [start, stop)

    Returns
    -------
    attenuation : float
        [dB], capped at `cap_db`

    Example
    -------
    >>> x = np.ones(100)
    >>> round(attenuation(x/10., x, [(0, 50)]), 9)
    20.0
    """
    processed, unprocessed = _check_lengths(processed, unprocessed)
    sel = np.zeros(processed.shape[-1], dtype=bool)
    for start, stop in segments:
        sel[int(start):int(stop)] = True
    if not sel.any():
        raise EvaluationError('empty silence set')
    pIn = np.sum(unprocessed[..., sel]**2)
    pOut = np.sum(processed[..., sel]**2)
    if pIn == 0:
        raise EvaluationError('input is silent over the silence segments')
    if pOut == 0:
        return float(cap_db)
    return float(min(cap_db, 10.*np.log10(pIn/pOut)))


@dataclass
class EvalReport:
    """ Evaluation of separated sources.

    Parameters
    ----------
    names : list of str
        source labels
    snr_db, lsd_db, attenuation_db : array
        per-source measures; NaN where a measure is not available
    input_snr_db : array
        SNR of the best single microphone for each source
    band : tuple
        evaluation band [Hz]
    reference : str
        'gss' or 'stem'
    """
    names: list
    snr_db: np.ndarray
    lsd_db: np.ndarray
    attenuation_db: np.ndarray
    input_snr_db: np.ndarray = None
    band: tuple = (300., 3400.)
    reference: str = 'gss'

    def __post_init__(self):
        n = len(self.names)
        if self.input_snr_db is None:
            self.input_snr_db = np.full(n, np.nan)
        for name in ('snr_db', 'lsd_db', 'attenuation_db', 'input_snr_db'):
            value = np.asarray(getattr(self, name), dtype=float)
            if value.shape != (n,):
                raise EvaluationError('{} has {} entries for {} sources'
                                      .format(name, value.size, n))
            setattr(self, name, value)

    @property
    def snr_gain_db(self):
        """Improvement over the best microphone [dB]."""
        return self.snr_db - self.input_snr_db

    def to_dataframe(self):
        return pd.DataFrame({'source': self.names, 'snr_db': self.snr_db,
                             'input_snr_db': self.input_snr_db,
                             'snr_gain_db': self.snr_gain_db,
                             'lsd_db': self.lsd_db,
                             'attenuation_db': self.attenuation_db,
                             'band_low_hz': self.band[0],
                             'band_high_hz': self.band[1],
                             'reference': self.reference})

    def write(self, filename):
        """Write the report as CSV."""
        self.to_dataframe().to_csv(filename, index=False, float_format='%.4f')

    def __str__(self):
        lines = ['Evaluation in {:g}-{:g} Hz, {} references'.format(
            self.band[0], self.band[1], self.reference)]
        lines.append(self.to_dataframe().drop(
            columns=['band_low_hz', 'band_high_hz', 'reference']).to_string(
                index=False, float_format=lambda v: '{:.2f}'.format(v)))
        return '\n'.join(lines)
