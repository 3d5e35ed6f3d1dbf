""" Geometric source separation (GSS) in the frequency domain.

Each frequency bin k has a demixing matrix W(k) that is adapted by
stochastic gradient descent on the output cross-correlation cost

    J1 = || y y^H - diag(y y^H) ||^2,  y = W x

and the geometric constraint cost J2 = || W A - I ||^2, where A holds the
steering vectors of the tracked source directions. W is initialised as a
delay-and-sum beamformer.
"""
from dataclasses import dataclass

import numpy as np
from astropy import log

from . import utils
from .exceptions import DimensionError

__all__ = ['MixingModel', 'DemixingState', 'steering_delays',
           'steering_vectors', 'build_mixing_matrix', 'init_demixing',
           'gss_update', 'gss_gradients', 'gss_costs', 'apply_demixing',
           'GeometricSeparator']


@dataclass
class MixingModel:
    """ Steering vectors of M sources at N microphones.

    Parameters
    ----------
    A : array
        a_ij(k) = exp(-2j pi k delta_ij / L), shape (K, N, M) for the
        K = L/2+1 non-negative bins
    delays : array
        delta_ij in samples relative to the array centroid, shape (N, M)
    frame_length : int
        frame length L
    """
    A: np.ndarray
    delays: np.ndarray
    frame_length: int

    @property
    def n_sources(self):
        return self.A.shape[2]


def steering_delays(direction, mic_positions, sample_rate=48000.,
                    speed_of_sound=utils.SPEED_OF_SOUND, distance=np.inf):
    """ Arrival delay of a source at each microphone in samples.

    Delays are relative to the array centroid and not rounded. For a finite
    `distance` the source is placed at that range from the centroid.

    Parameters
    ----------
    direction : array
        unit vector towards the source
    mic_positions : array
        microphone positions of shape (N, 3) [m]
    distance : float
        source distance [m]; infinite for plane waves

    Returns
    -------
    delays : array
        shape (N,)
    """
    mics = np.asarray(mic_positions, dtype=float)
    centre = utils.array_centroid(mics)
    u = utils.normalize(direction)
    if np.isinf(distance):
        return -sample_rate/speed_of_sound*((mics - centre)@u)
    source = centre + distance*u
    return sample_rate/speed_of_sound*(np.linalg.norm(source - mics, axis=1)
                                       - distance)


def steering_vectors(delays, frame_length):
    """ Unit-modulus phase factors exp(-2j pi k delta / L).

    Parameters
    ----------
    delays : array
        delays in samples, shape (...)
    frame_length : int
        frame length L

    Returns
    -------
    a : array
        shape (L/2+1, ...)
    """
    k = np.arange(frame_length//2 + 1).reshape((-1,) + (1,)*np.ndim(delays))
    return np.exp(-2j*np.pi*k*np.asarray(delays)/frame_length)


def build_mixing_matrix(directions, mic_positions, sample_rate=48000.,
                        frame_length=1024, speed_of_sound=utils.SPEED_OF_SOUND,
                        distances=None):
    """ Build the mixing model of sources in the given directions.

    Parameters
    ----------
    directions : array
        unit vectors of shape (M, 3)
    mic_positions : array
        microphone positions of shape (N, 3) [m]
    distances : array, optional
        source distances [m]; plane waves if omitted

    Returns
    -------
    model : MixingModel
        steering matrix and delays
    """
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    if len(directions) < 1:
        raise ValueError('at least one source direction is required')
    if distances is None:
        distances = np.full(len(directions), np.inf)
    delays = np.stack([steering_delays(u, mic_positions, sample_rate,
                                       speed_of_sound, d)
                       for u, d in zip(directions, distances)], axis=1)
    return MixingModel(steering_vectors(delays, frame_length), delays,
                       frame_length)


def init_demixing(A):
    """ Delay-and-sum initialisation W = A^H / N.

    Parameters
    ----------
    A : array or MixingModel
        steering matrices of shape (K, N, M)

    Returns
    -------
    W : array
        demixing matrices of shape (K, M, N)
    """
    if isinstance(A, MixingModel):
        A = A.A
    A = np.asarray(A)
    return np.conj(np.swapaxes(A, 1, 2))/A.shape[1]


class DemixingState:
    """ Demixing matrices of the live sources.

    Rows of W belong to sources identified by `source_ids`; adding or
    removing a source changes only its own row.

    Parameters
    ----------
    n_mics : int
        number of microphones N
    n_bins : int
        number of frequency bins K
    mu : float
        adaptation rate
    regularisation : float
        weight lambda of the shrinkage term
    """

    def __init__(self, n_mics, n_bins, mu=0.01, regularisation=0.5):
        self.n_mics = n_mics
        self.n_bins = n_bins
        self.mu = mu
        self.regularisation = regularisation
        self.W = np.zeros((n_bins, 0, n_mics), dtype=complex)
        self.source_ids = []

    @property
    def n_sources(self):
        return len(self.source_ids)

    def row(self, source_id):
        return self.source_ids.index(source_id)

    def add_source(self, source_id, steering):
        """ Append a delay-and-sum row for a new source.

        Parameters
        ----------
        source_id : hashable
            identifier of the source
        steering : array
            steering vector of shape (K, N)
        """
        if source_id in self.source_ids:
            raise ValueError('source {} already present'.format(source_id))
        steering = np.asarray(steering)
        if steering.shape != (self.n_bins, self.n_mics):
            raise DimensionError('steering vector of shape {}'.format(
                steering.shape))
        row = np.conj(steering)[:, np.newaxis, :]/self.n_mics
        self.W = np.concatenate([self.W, row], axis=1)
        self.source_ids.append(source_id)

    def remove_source(self, source_id):
        """Delete the row of a source."""
        m = self.row(source_id)
        self.W = np.delete(self.W, m, axis=1)
        del self.source_ids[m]


def gss_gradients(W, x, A):
    """ Gradients of J1 and J2 with respect to W.

    Gradients are given as dJ/dRe(W) + j dJ/dIm(W); J1 uses the
    instantaneous correlation x x^H and is not normalised.

    Parameters
    ----------
    W : array
        shape (K, M, N)
    x : array
        microphone spectra, shape (K, N)
    A : array
        steering matrices, shape (K, N, M)

    Returns
    -------
    grad1, grad2 : array
        shape (K, M, N)
    """
    y = np.einsum('kmn,kn->km', W, x)
    E = y[:, :, np.newaxis]*np.conj(y)[:, np.newaxis, :]
    idx = np.arange(E.shape[1])
    E[:, idx, idx] = 0.
    Ey = np.einsum('kab,kb->ka', E, y)
    grad1 = 4.*Ey[:, :, np.newaxis]*np.conj(x)[:, np.newaxis, :]
    C = np.einsum('kmn,knj->kmj', W, A) - np.eye(W.shape[1])
    grad2 = 2.*np.einsum('kmj,knj->kmn', C, np.conj(A))
    return grad1, grad2


def gss_costs(W, x, A):
    """ Costs J1 and J2 per frequency bin.

    Returns
    -------
    J1, J2 : array
        shape (K,)
    """
    y = np.einsum('kmn,kn->km', W, x)
    E = y[:, :, np.newaxis]*np.conj(y)[:, np.newaxis, :]
    idx = np.arange(E.shape[1])
    E[:, idx, idx] = 0.
    C = np.einsum('kmn,knj->kmj', W, A) - np.eye(W.shape[1])
    return (np.sum(np.abs(E)**2, axis=(1, 2)),
            np.sum(np.abs(C)**2, axis=(1, 2)))


def gss_update(state, x, A, rows=None):
    """ One regularised gradient step of the demixing matrices.

    W <- (1 - lambda mu) W - mu [alpha(k) grad J1 + grad J2] with
    alpha(k) = ||x(k)||^-4; bins with ||x(k)|| = 0 skip the J1 term.

    Parameters
    ----------
    state : DemixingState
        state, updated in place
    x : array
        microphone spectra of one frame, shape (K, N)
    A : array
        steering matrices of the state's sources, shape (K, N, M)
    rows : array, optional
        boolean mask of rows to adapt; other rows are left untouched

    Returns
    -------
    W : array
        updated demixing matrices
    """
    W = state.W
    if W.shape[1] == 0:
        return W
    x = np.asarray(x)
    if x.shape != (W.shape[0], W.shape[2]):
        raise DimensionError('spectra of shape {} for demixing matrices of '
                             'shape {}'.format(x.shape, W.shape))
    grad1, grad2 = gss_gradients(W, x, A)
    norm2 = np.sum(np.abs(x)**2, axis=1)
    alpha = np.divide(1., norm2**2, out=np.zeros_like(norm2), where=norm2 > 0)
    step = alpha[:, np.newaxis, np.newaxis]*grad1 + grad2
    updated = (1. - state.regularisation*state.mu)*W - state.mu*step
    if rows is not None:
        updated = np.where(np.asarray(rows)[np.newaxis, :, np.newaxis],
                           updated, W)
    state.W = updated
    return state.W


def apply_demixing(W, x):
    """ Separate sources with y(k) = W(k) x(k).

    Parameters
    ----------
    W : array
        demixing matrices, shape (K, M, N)
    x : array
        spectra of shape (K, N) for one frame or (N, n_frames, K)

    Returns
    -------
    y : array
        shape (K, M) or (M, n_frames, K)
    """
    W = np.asarray(W)
    x = np.asarray(x)
    if x.ndim == 2:
        if x.shape != (W.shape[0], W.shape[2]):
            raise DimensionError('spectra of shape {} for W of shape {}'.format(
                x.shape, W.shape))
        return np.einsum('kmn,kn->km', W, x)
    if x.shape[0] != W.shape[2] or x.shape[2] != W.shape[0]:
        raise DimensionError('spectra of shape {} for W of shape {}'.format(
            x.shape, W.shape))
    return np.einsum('kmn,nfk->mfk', W, x)


class GeometricSeparator:
    """ Frame-by-frame GSS driven by tracked source directions.

    Parameters
    ----------
    mic_positions : array
        microphone positions of shape (N, 3) [m]
    sample_rate : float
        sampling rate [Hz]
    frame_length : int
        STFT frame length L
    mu, regularisation : float
        adaptation rate and regularisation weight
    move_threshold : float
        a source's steering vector is recomputed after it moved by more
        than this angle [deg]
    activity_gate : float
        sources with a lower activity probability are not adapted
    frozen : bool
        keep the delay-and-sum initialisation, no adaptation
    """

    def __init__(self, mic_positions, sample_rate=48000., frame_length=1024,
                 speed_of_sound=utils.SPEED_OF_SOUND, mu=0.01,
                 regularisation=0.5, move_threshold=1., activity_gate=0.1,
                 frozen=False):
        self.mic_positions = np.asarray(mic_positions, dtype=float)
        self.sample_rate = sample_rate
        self.frame_length = frame_length
        self.speed_of_sound = speed_of_sound
        self.move_threshold = move_threshold
        self.activity_gate = activity_gate
        self.frozen = frozen
        self.state = DemixingState(len(self.mic_positions), frame_length//2 + 1,
                                   mu, regularisation)
        self.A = np.zeros((frame_length//2 + 1, len(self.mic_positions), 0),
                          dtype=complex)
        self.directions = {}
        self.activity = {}

    @classmethod
    def from_config(cls, cfg, frozen=False):
        """ Create a separator from a `~micarraytools.config.RunConfig`."""
        s = cfg.separation
        return cls(cfg.mic_positions, cfg.array.sample_rate,
                   cfg.stft.frame_length, cfg.array.speed_of_sound, s.mu,
                   s.regularisation, s.move_threshold, s.activity_gate, frozen)

    @property
    def source_ids(self):
        return list(self.state.source_ids)

    def _steering(self, direction):
        delays = steering_delays(direction, self.mic_positions,
                                 self.sample_rate, self.speed_of_sound)
        return steering_vectors(delays, self.frame_length)

    def set_sources(self, sources):
        """ Synchronise the live source set with the tracker.

        Parameters
        ----------
        sources : list of tuple
            (source_id, direction, activity) of every live source
        """
        live = {sid for sid, _, _ in sources}
        for sid in self.source_ids:
            if sid not in live:
                m = self.state.row(sid)
                self.state.remove_source(sid)
                self.A = np.delete(self.A, m, axis=2)
                del self.directions[sid], self.activity[sid]
                log.debug('separator: source {} removed'.format(sid))

        for sid, direction, activity in sources:
            direction = utils.normalize(direction)
            self.activity[sid] = activity
            if sid not in self.directions:
                steering = self._steering(direction)
                self.state.add_source(sid, steering)
                self.A = np.concatenate([self.A, steering[:, :, np.newaxis]],
                                        axis=2)
                self.directions[sid] = direction
                log.debug('separator: source {} added'.format(sid))
            elif utils.angular_distance(direction, self.directions[sid]) \
                    > self.move_threshold:
                m = self.state.row(sid)
                steering = self._steering(direction)
                self.A[:, :, m] = steering
                self.directions[sid] = direction
                if self.frozen:
                    self.state.W[:, m, :] = np.conj(steering)/self.state.n_mics

    def process_frame(self, x, references=()):
        """ Separate one frame and adapt the demixing matrices.

        Parameters
        ----------
        x : array
            microphone spectra, shape (N, K)
        references : sequence of array
            further multichannel spectra of shape (N, K) filtered with the
            same matrices, e.g. the images of single sources

        Returns
        -------
        y : array
            separated spectra, shape (M, K)
        filtered : list of array
            `references` filtered with W, each of shape (M, K)
        """
        xk = np.asarray(x).T
        W = self.state.W
        y = apply_demixing(W, xk).T
        filtered = [apply_demixing(W, np.asarray(r).T).T for r in references]
        if not self.frozen and self.state.n_sources:
            rows = np.array([self.activity[sid] >= self.activity_gate
                             for sid in self.state.source_ids])
            if rows.any():
                gss_update(self.state, xk, self.A, rows)
        return y, filtered
