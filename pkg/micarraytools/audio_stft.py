""" Multichannel audio input/output and short-time Fourier analysis.

Frames overlap by 50% (hop = L/2). Analysis and synthesis both use the square
root of a periodic Hann window, so their product is a Hann window that adds up
to one at this hop and overlap-add synthesis reconstructs the input exactly.
"""
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import fft as sfft
from scipy import signal
from scipy.io import wavfile

from .exceptions import AudioFileError, DimensionError

__all__ = ['MultichannelBuffer', 'SpectralFrameSet', 'read_wav', 'write_wav',
           'stft_analyze', 'istft_synthesize', 'analysis_window',
           'frame_count']


@dataclass
class MultichannelBuffer:
    """ Real-valued multichannel audio.

    Parameters
    ----------
    samples : array
        shape (channels, n_samples), amplitudes nominally in [-1, 1]
    sample_rate : float
        sampling rate [Hz]
    """
    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[np.newaxis, :]
        if samples.ndim != 2 or samples.shape[0] < 1:
            raise DimensionError('samples must have shape (channels, n_samples)')
        if self.sample_rate <= 0:
            raise ValueError('sample_rate must be positive')
        self.samples = samples

    @property
    def channel_count(self):
        return self.samples.shape[0]

    @property
    def n_samples(self):
        return self.samples.shape[1]

    @property
    def duration(self):
        return self.n_samples/self.sample_rate

    def channel(self, i):
        """Return a single channel as a new mono buffer."""
        return MultichannelBuffer(self.samples[i:i + 1].copy(), self.sample_rate)


@dataclass
class SpectralFrameSet:
    """ Per-channel STFT frames.

    Only the L/2+1 non-negative frequency bins are stored; the remaining bins
    follow from conjugate symmetry, see `full_spectrum`.

    Parameters
    ----------
    frames : array
        complex spectra of shape (channels, n_frames, L/2+1)
    frame_length : int
        frame length L [samples]
    sample_rate : float
        sampling rate [Hz]
    n_samples : int
        length of the analysed signal, used to trim the synthesis
    """
    frames: np.ndarray
    frame_length: int
    sample_rate: float
    n_samples: int = None
    window: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=complex)
        if self.frames.ndim != 3:
            raise DimensionError('frames must have shape (channels, n_frames, bins)')
        if self.frames.shape[2] != self.frame_length//2 + 1:
            raise DimensionError('{} bins do not match frame length {}'.format(
                self.frames.shape[2], self.frame_length))
        if self.window is None:
            self.window = analysis_window(self.frame_length)
        if self.n_samples is None:
            self.n_samples = (self.n_frames - 1)*self.hop + self.frame_length

    @property
    def hop(self):
        return self.frame_length//2

    @property
    def channel_count(self):
        return self.frames.shape[0]

    @property
    def n_frames(self):
        return self.frames.shape[1]

    @property
    def n_bins(self):
        return self.frames.shape[2]

    @property
    def frequencies(self):
        """Centre frequency of each stored bin [Hz]."""
        return sfft.rfftfreq(self.frame_length, 1./self.sample_rate)

    def full_spectrum(self):
        """ Return the conjugate-symmetric spectra with all L bins."""
        L = self.frame_length
        mirrored = np.conj(self.frames[..., 1:L//2][..., ::-1])
        return np.concatenate([self.frames, mirrored], axis=-1)

    def replace(self, frames):
        """Return a frame set with new spectra and the same framing."""
        return SpectralFrameSet(frames, self.frame_length, self.sample_rate,
                                self.n_samples, self.window)


def analysis_window(frame_length):
    """ Square-root periodic Hann window.

    Example
    -------
    >>> w = analysis_window(8)
    >>> bool(np.allclose(w[:4]**2 + w[4:]**2, 1.))
    True
    """
    return np.sqrt(signal.get_window('hann', frame_length, fftbins=True))


def frame_count(n_samples, frame_length):
    """ Number of frames covering `n_samples` at 50% overlap.

    The last partial frame is zero-padded.

    Example
    -------
    >>> frame_count(4096, 1024)
    7
    """
    hop = frame_length//2
    return int(np.ceil((n_samples - frame_length)/hop)) + 1


def read_wav(filename):
    """ Read a PCM16 or float32 WAV file.

    Parameters
    ----------
    filename : str
        path of the WAV file

    Returns
    -------
    buf : MultichannelBuffer
        all channels in file order, scaled to [-1, 1]
    """
    try:
        sample_rate, data = wavfile.read(filename)
    except (OSError, ValueError, EOFError) as e:
        raise AudioFileError('unreadable file {}: {}'.format(filename, e))

    if data.dtype == np.int16:
        samples = data.astype(float)/32768.
    elif data.dtype == np.float32:
        samples = data.astype(float)
    else:
        raise AudioFileError('unsupported encoding {} in {}'.format(
            data.dtype, filename))

    samples = samples.T if samples.ndim == 2 else samples[np.newaxis, :]
    if samples.shape[0] == 0:
        raise AudioFileError('no channels in {}'.format(filename))
    return MultichannelBuffer(samples, float(sample_rate))


def write_wav(filename, buf, encoding='pcm16'):
    """ Write a buffer to a WAV file.

    Parameters
    ----------
    filename : str
        output path
    buf : MultichannelBuffer
        audio to write
    encoding : {'pcm16', 'float32'}
        sample format; PCM16 output is clipped to [-1, 1)
    """
    if encoding == 'pcm16':
        data = np.clip(np.round(buf.samples*32768.), -32768, 32767).astype(np.int16)
    elif encoding == 'float32':
        data = buf.samples.astype(np.float32)
    else:
        raise AudioFileError('unsupported encoding {}'.format(encoding))
    data = data.T
    if data.shape[1] == 1:
        data = data[:, 0]
    wavfile.write(filename, int(round(buf.sample_rate)), data)


def stft_analyze(buf, frame_length=1024):
    """ Windowed short-time Fourier transform with 50% overlap.

    Frame l covers samples [l L/2, l L/2 + L). Samples past the end of the
    buffer are taken as zero.

    Parameters
    ----------
    buf : MultichannelBuffer
        input audio
    frame_length : int
        frame length L, a power of two

    Returns
    -------
    frames : SpectralFrameSet
        spectra of shape (channels, n_frames, L/2+1)
    """
    L = int(frame_length)
    if L < 2 or L & (L - 1):
        raise ValueError('frame length must be a power of two, got {}'.format(L))
    if buf.n_samples < L:
        raise DimensionError('buffer of {} samples is shorter than one frame '
                             '({})'.format(buf.n_samples, L))

    hop = L//2
    nFrames = frame_count(buf.n_samples, L)
    padded = np.zeros((buf.channel_count, (nFrames - 1)*hop + L))
    padded[:, :buf.n_samples] = buf.samples

    window = analysis_window(L)
    segments = sliding_window_view(padded, L, axis=1)[:, ::hop, :]
    spectra = sfft.rfft(segments*window, axis=-1)
    return SpectralFrameSet(spectra, L, buf.sample_rate, buf.n_samples, window)


def istft_synthesize(frames):
    """ Overlap-add synthesis with the square-root Hann window.

    Parameters
    ----------
    frames : SpectralFrameSet
        spectra, possibly modified after `stft_analyze`

    Returns
    -------
    buf : MultichannelBuffer
        signal trimmed to the analysed length
    """
    L = frames.frame_length
    hop = frames.hop
    if len(frames.window) != L:
        raise DimensionError('window length does not match frame length')

    grains = sfft.irfft(frames.frames, n=L, axis=-1)*frames.window
    nCh, nFrames = grains.shape[:2]

    # sum first and second halves of consecutive grains
    out = np.zeros((nCh, (nFrames + 1)*hop))
    halves = grains.reshape(nCh, nFrames, 2, hop)
    out[:, :nFrames*hop] += halves[:, :, 0, :].reshape(nCh, -1)
    out[:, hop:] += halves[:, :, 1, :].reshape(nCh, -1)
    return MultichannelBuffer(out[:, :frames.n_samples], frames.sample_rate)
