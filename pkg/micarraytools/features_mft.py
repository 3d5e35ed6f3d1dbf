""" Log-Mel features, missing-feature masks and marginalised GMM scoring.

Features are 24 log-Mel energies smoothed by cepstral liftering and mean
subtraction, plus their time derivatives. Masks mark each feature as reliable
or not from the behaviour of the post-filter, and unreliable dimensions are
marginalised out when scoring a diagonal Gaussian mixture.
"""
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import fft as sfft
from scipy import signal
from scipy.special import logsumexp

from .exceptions import DimensionError, MicArrayWarning

__all__ = ['hz2mel', 'mel2hz', 'mel_filterbank', 'MelFeatureFrame',
           'MelFeatureSet', 'mel_features', 'delta_features', 'FeatureMask',
           'compute_mask', 'delta_mask', 'DiagonalGmm', 'mft_gmm_score',
           'decimate', 'rebin_frames', 'mel_energies']

LOG_FLOOR = 1e-10


def hz2mel(f):
    """HTK Mel scale, 2595 log10(1 + f/700)."""
    return 2595.*np.log10(1. + np.asarray(f, dtype=float)/700.)


def mel2hz(m):
    """Inverse of `hz2mel`."""
    return 700.*(10.**(np.asarray(m, dtype=float)/2595.) - 1.)


def mel_filterbank(frequencies, n_mels=24, fmin=0., fmax=8000.):
    """ Triangular Mel filterbank evaluated at arbitrary frequencies.

    Filter centres are equally spaced on the HTK Mel scale between `fmin`
    and `fmax`; each triangle reaches from the previous to the next centre.

    Parameters
    ----------
    frequencies : array
        frequencies of the spectral bins [Hz]
    n_mels : int
        number of filters

    Returns
    -------
    weights : array
        shape (n_mels, len(frequencies))
    """
    f = np.asarray(frequencies, dtype=float)
    edges = mel2hz(np.linspace(hz2mel(fmin), hz2mel(fmax), n_mels + 2))
    lower, centre, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (f - lower)/(centre - lower)
    falling = (upper - f)/(upper - centre)
    return np.maximum(0., np.minimum(rising, falling))


@dataclass(frozen=True)
class MelFeatureFrame:
    """Static log-Mel features and their deltas for frame `index`."""
    index: int
    static: np.ndarray
    delta: np.ndarray


@dataclass
class MelFeatureSet:
    """ Feature sequence of one utterance.

    Parameters
    ----------
    static : array
        log-Mel features, shape (n_frames, n_mels)
    delta : array
        time derivatives, same shape
    """
    static: np.ndarray
    delta: np.ndarray
    sample_rate: float = 16000.
    hop: int = 160

    def __len__(self):
        return len(self.static)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i):
        return MelFeatureFrame(i, self.static[i], self.delta[i])

    def matrix(self):
        """Features as one (n_frames, 2 n_mels) matrix, statics first."""
        return np.hstack([self.static, self.delta])


def delta_features(features, half_width=2):
    """ Regression derivatives over +-`half_width` frames.

    d_t = sum_k k (c_{t+k} - c_{t-k}) / (2 sum_k k^2), with the first and
    last frames repeated at the edges.
    """
    features = np.asarray(features, dtype=float)
    padded = np.pad(features, ((half_width, half_width), (0, 0)), mode='edge')
    n = len(features)
    num = np.zeros_like(features)
    for k in range(1, half_width + 1):
        num += k*(padded[half_width + k:half_width + k + n]
                  - padded[half_width - k:half_width - k + n])
    return num/(2.*sum(k*k for k in range(1, half_width + 1)))


def mel_features(audio, sample_rate=16000., window=400, hop=160, n_fft=512,
                 n_mels=24, n_ceps=13, delta_window=2, lifter=True, cms=True):
    """ Smoothed log-Mel features of mono audio.

    Frames of `window` samples (Hamming) every `hop` samples are transformed
    with an `n_fft` point FFT, filtered by `n_mels` Mel filters up to
    Fs/2 and log-compressed. The log energies are taken to the cepstral
    domain, cepstra 0 and from `n_ceps` on are set to zero, the utterance
    mean is removed and the result is transformed back to the log-Mel
    domain. Deltas use a +-`delta_window` frame regression.

    Parameters
    ----------
    audio : array
        mono signal
    lifter : bool
        apply the cepstral lifter
    cms : bool
        apply cepstral mean subtraction

    Returns
    -------
    features : MelFeatureSet
        static and delta features
    """
    audio = np.asarray(audio, dtype=float)
    if audio.ndim != 1:
        raise DimensionError('mel_features expects mono audio')
    if len(audio) < window:
        raise DimensionError('audio of {} samples is shorter than one frame '
                             '({})'.format(len(audio), window))

    frames = sliding_window_view(audio, window)[::hop]
    power = np.abs(sfft.rfft(frames*signal.get_window('hamming', window,
                                                      fftbins=False),
                             n=n_fft, axis=1))**2
    fb = mel_filterbank(sfft.rfftfreq(n_fft, 1./sample_rate), n_mels, 0.,
                        sample_rate/2.)
    logmel = np.log(np.maximum(power@fb.T, LOG_FLOOR))

    if lifter or cms:
        ceps = sfft.dct(logmel, type=2, norm='ortho', axis=1)
        if lifter:
            ceps[:, 0] = 0.
            ceps[:, n_ceps:] = 0.
        if cms:
            ceps -= ceps.mean(axis=0)
        logmel = sfft.idct(ceps, type=2, norm='ortho', axis=1)

    return MelFeatureSet(logmel, delta_features(logmel, delta_window),
                         sample_rate, hop)


@dataclass
class FeatureMask:
    """ Reliability of each feature.

    Parameters
    ----------
    continuous : array
        m = (S_out + N)/S_in, shape (n_frames, n_mels)
    binary : array
        1 where m > threshold
    delta : array
        1 where all binary masks of the delta window are 1
    threshold : float
        T_m
    """
    continuous: np.ndarray
    binary: np.ndarray
    delta: np.ndarray
    threshold: float = 0.25

    def matrix(self):
        """Masks as one (n_frames, 2 n_mels) matrix, statics first."""
        return np.hstack([self.binary, self.delta]).astype(int)


def delta_mask(mask, half_width=2):
    """ Mask of delta features: product of the static mask over the window.

    Frames closer than `half_width` to either end are unreliable.

    Example
    -------
    >>> delta_mask(np.ones((5, 1)))[:, 0].tolist()
    [0, 0, 1, 0, 0]
    """
    mask = np.asarray(mask).astype(int)
    out = np.zeros_like(mask)
    width = 2*half_width + 1
    if len(mask) >= width:
        windows = sliding_window_view(mask, width, axis=0)
        out[half_width:len(mask) - half_width] = windows.min(axis=-1)
    return out


def compute_mask(S_in, S_out, noise, threshold=0.25, half_width=2):
    """ Missing-feature mask from post-filter input, output and noise.

    m = (S_out + N)/S_in, taken as 1 where S_in = 0; a feature is reliable
    when m exceeds `threshold`.

    Parameters
    ----------
    S_in : array
        Mel energies of the post-filter input, shape (n_frames, n_mels)
    S_out : array
        Mel energies of the post-filter output
    noise : array
        Mel energies of the stationary background noise

    Returns
    -------
    mask : FeatureMask
        continuous, binary and delta masks
    """
    S_in = np.asarray(S_in, dtype=float)
    S_out = np.asarray(S_out, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if not (S_in.shape == S_out.shape == noise.shape):
        raise DimensionError('mask inputs differ in shape')
    m = np.divide(S_out + noise, S_in, out=np.ones_like(S_in), where=S_in > 0)
    binary = (m > threshold).astype(int)
    return FeatureMask(m, binary, delta_mask(binary, half_width), threshold)


class DiagonalGmm:
    """ Gaussian mixture with diagonal covariances.

    Parameters
    ----------
    weights : array
        mixture weights, shape (G,), summing to one
    means : array
        shape (G, D)
    variances : array
        shape (G, D), positive
    """

    def __init__(self, weights, means, variances):
        self.weights = np.atleast_1d(np.asarray(weights, dtype=float))
        self.means = np.atleast_2d(np.asarray(means, dtype=float))
        self.variances = np.atleast_2d(np.asarray(variances, dtype=float))
        if self.means.shape != self.variances.shape \
                or self.means.shape[0] != len(self.weights):
            raise DimensionError('inconsistent mixture parameter shapes')
        if not np.isclose(self.weights.sum(), 1.):
            raise ValueError('mixture weights must sum to one')
        if np.any(self.variances <= 0):
            raise ValueError('variances must be positive')

    @property
    def n_components(self):
        return len(self.weights)

    @property
    def n_dims(self):
        return self.means.shape[1]

    def drop_dimensions(self, dims):
        """Return the mixture without the given dimensions."""
        keep = np.setdiff1d(np.arange(self.n_dims), dims)
        return DiagonalGmm(self.weights, self.means[:, keep],
                           self.variances[:, keep])

    def log_likelihood(self, x):
        """Ordinary log-likelihood of one or several feature vectors."""
        return mft_gmm_score(self, x, np.ones(np.shape(x), dtype=bool))


def mft_gmm_score(gmm, features, mask):
    """ Log-likelihood with unreliable dimensions marginalised out.

    log f(x) = log sum_j P(j) prod_{d reliable} N(x_d; mu_jd, var_jd)

    Parameters
    ----------
    gmm : DiagonalGmm
        mixture
    features : array
        feature vector (D,) or frames (n, D)
    mask : array
        reliability of each dimension, same shape as `features`

    Returns
    -------
    score : float or array
        log-likelihood; 0 where no dimension is reliable
    """
    x = np.asarray(features, dtype=float)
    reliable = np.asarray(mask).astype(bool)
    if x.shape != reliable.shape or x.shape[-1] != gmm.n_dims:
        raise DimensionError('features, mask and mixture dimensions differ')
    single = x.ndim == 1
    x = np.atleast_2d(x)
    reliable = np.atleast_2d(reliable)

    diff = x[:, np.newaxis, :] - gmm.means[np.newaxis]
    logpdf = -0.5*(np.log(2.*np.pi*gmm.variances)[np.newaxis]
                   + diff**2/gmm.variances[np.newaxis])
    perComponent = np.sum(np.where(reliable[:, np.newaxis, :], logpdf, 0.),
                          axis=-1)
    score = logsumexp(perComponent + np.log(gmm.weights)[np.newaxis], axis=1)

    empty = ~reliable.any(axis=1)
    if empty.any():
        warnings.warn('{} frames without reliable features score 0'.format(
            int(empty.sum())), MicArrayWarning)
        score[empty] = 0.
    return float(score[0]) if single else score


def decimate(audio, factor=3):
    """Polyphase decimation by an integer factor."""
    return signal.resample_poly(np.asarray(audio, dtype=float), 1, factor,
                                axis=-1)


def rebin_frames(values, src_hop, src_length, src_rate, n_frames, dst_hop,
                 dst_length, dst_rate):
    """ Average frame-wise values onto another frame grid.

    Each destination frame is the average of the source frames weighted by
    the time their spans overlap; a frame without overlap takes the nearest
    source frame.

    Parameters
    ----------
    values : array
        source values, shape (n_src, ...)
    src_hop, src_length, src_rate : float
        hop and frame length [samples] and sampling rate of the source grid
    n_frames : int
        number of destination frames
    dst_hop, dst_length, dst_rate : float
        destination grid

    Returns
    -------
    rebinned : array
        shape (n_frames, ...)
    """
    values = np.asarray(values, dtype=float)
    nSrc = len(values)
    srcStart = np.arange(nSrc)*src_hop/src_rate
    srcEnd = srcStart + src_length/src_rate
    dstStart = np.arange(n_frames)*dst_hop/dst_rate
    dstEnd = dstStart + dst_length/dst_rate
    overlap = np.maximum(0., np.minimum(dstEnd[:, None], srcEnd[None])
                         - np.maximum(dstStart[:, None], srcStart[None]))
    total = overlap.sum(axis=1)
    nearest = np.clip(np.round(dstStart*src_rate/src_hop).astype(int), 0,
                      nSrc - 1)
    missing = total <= 0
    overlap[missing, nearest[missing]] = 1.
    weights = overlap/overlap.sum(axis=1, keepdims=True)
    return np.tensordot(weights, values, axes=(1, 0))


def mel_energies(power, sample_rate=48000., frame_length=1024, n_frames=None,
                 dst_rate=16000., dst_hop=160, dst_window=400, n_mels=24):
    """ Mel energies of linear-frequency power spectra on the feature grid.

    Power spectra of the post-filter (one row per frame, L/2+1 bins at
    `sample_rate`) are summed by a Mel filterbank spanning 0 to dst_rate/2
    and averaged in time onto frames of `dst_window` samples every
    `dst_hop` samples at `dst_rate`.

    Returns
    -------
    energies : array
        shape (n_frames, n_mels)
    """
    power = np.atleast_2d(np.asarray(power, dtype=float))
    freqs = sfft.rfftfreq(frame_length, 1./sample_rate)
    if power.shape[1] != len(freqs):
        raise DimensionError('{} bins for frame length {}'.format(
            power.shape[1], frame_length))
    fb = mel_filterbank(freqs, n_mels, 0., dst_rate/2.)
    mel = power@fb.T
    if n_frames is None:
        duration = ((len(power) - 1)*frame_length/2 + frame_length)/sample_rate
        n_frames = int((duration*dst_rate - dst_window)//dst_hop) + 1
    return rebin_frames(mel, frame_length/2, frame_length, sample_rate,
                        n_frames, dst_hop, dst_window, dst_rate)
