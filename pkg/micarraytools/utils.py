""" This module includes helper functions for array geometry and level
conversions.
"""
import numpy as np
from astropy import units as u

# speed of sound in air [m/s] and default sampling rate [Hz]
SPEED_OF_SOUND = 343.
SAMPLE_RATE = 48000

__all__ = ['sph2cart', 'cart2sph', 'normalize', 'angular_distance',
           'db2amp', 'db2pow', 'pow2db', 'mic_pairs', 'gamma_from_t60',
           'array_centroid']


def sph2cart(azimuth, elevation):
    """ Convert azimuth and elevation to unit vectors.

    Azimuth is measured counter-clockwise from the x axis in the horizontal
    plane, elevation upward from that plane.

    Parameters
    ----------
    azimuth : float, array or Quantity
        azimuth; plain numbers are taken in degrees
    elevation : float, array or Quantity
        elevation; plain numbers are taken in degrees

    Returns
    -------
    vectors : array
        unit vectors of shape (..., 3)

    Example
    -------
    >>> np.round(sph2cart(90., 0.), 12).tolist()
    [0.0, 1.0, 0.0]
    """
    az = u.Quantity(azimuth, u.deg).to_value(u.rad)
    el = u.Quantity(elevation, u.deg).to_value(u.rad)
    az, el = np.broadcast_arrays(az, el)
    return np.stack([np.cos(el)*np.cos(az), np.cos(el)*np.sin(az), np.sin(el)],
                    axis=-1)


def cart2sph(vectors):
    """ Convert vectors to azimuth and elevation in degrees.

    Parameters
    ----------
    vectors : array
        vectors of shape (..., 3), need not be normalised

    Returns
    -------
    azimuth : array
        azimuth in degrees, in (-180, 180]
    elevation : array
        elevation in degrees, in [-90, 90]
    """
    v = normalize(vectors)
    azimuth = np.degrees(np.arctan2(v[..., 1], v[..., 0]))
    elevation = np.degrees(np.arcsin(np.clip(v[..., 2], -1., 1.)))
    return azimuth, elevation


def normalize(vectors, axis=-1):
    """Scale vectors to unit norm along `axis`. Zero vectors stay zero."""
    vectors = np.asarray(vectors, dtype=float)
    norm = np.linalg.norm(vectors, axis=axis, keepdims=True)
    return np.divide(vectors, norm, out=np.zeros_like(vectors), where=norm > 0)


def angular_distance(a, b):
    """ Great-circle angle between two (sets of) directions in degrees.

    Example
    -------
    >>> float(angular_distance([1., 0., 0.], [0., 1., 0.]))
    90.0
    """
    cosine = np.sum(normalize(a)*normalize(b), axis=-1)
    return np.degrees(np.arccos(np.clip(cosine, -1., 1.)))


def db2amp(level):
    """ Convert a level in dB to an amplitude ratio.

    Example
    -------
    >>> float(db2amp(-20.))
    0.1
    """
    return 10.**(np.asarray(level, dtype=float)/20.)


def db2pow(level):
    """Convert a level in dB to a power ratio."""
    return 10.**(np.asarray(level, dtype=float)/10.)


def pow2db(power, floor=1e-30):
    """Convert a power ratio to dB, flooring at `floor`."""
    return 10.*np.log10(np.maximum(power, floor))


def mic_pairs(nMics):
    """ List the unordered microphone pairs (i, j) with i < j.

    Parameters
    ----------
    nMics : int
        number of microphones

    Returns
    -------
    pairs : array
        integer array of shape (nMics*(nMics-1)/2, 2)

    Example
    -------
    >>> mic_pairs(3).tolist()
    [[0, 1], [0, 2], [1, 2]]
    """
    i, j = np.triu_indices(nMics, k=1)
    return np.stack([i, j], axis=1)


def gamma_from_t60(t60, hop, sample_rate):
    """ Per-frame decay of reverberant power for a reverberation time.

    The power falls by 60 dB within `t60` seconds, i.e. by a factor
    10**(-6 hop/(Fs T60)) per hop of `hop` samples.

    Parameters
    ----------
    t60 : float
        reverberation time [s]; zero means no reverberation
    hop : int
        frame advance in samples
    sample_rate : float
        sampling rate [Hz]

    Returns
    -------
    gamma : float
        decay factor per frame, in [0, 1)
    """
    if t60 <= 0:
        return 0.
    return 10.**(-6.*hop/(sample_rate*t60))


def array_centroid(mic_positions):
    """Geometric centre of the microphone positions."""
    return np.mean(np.asarray(mic_positions, dtype=float), axis=0)
