""" Steered-beamformer localisation of sound sources.

The beamformer output energy is evaluated on a subdivided icosahedron using
spectrally weighted, whitened cross-correlations of all microphone pairs.
Noise floors are tracked per channel with minima-controlled recursive
averaging (MCRA).
"""
import hashlib
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
from astropy import log
from scipy import fft as sfft
from scipy.ndimage import convolve1d

from . import utils
from .audio_stft import SpectralFrameSet
from .exceptions import DimensionError, MicArrayWarning

__all__ = ['McraEstimator', 'NoiseWeightState', 'CrossCorrelationBank',
           'SphericalGrid', 'PotentialSource', 'mcra_update',
           'update_weights', 'enhanced_cross_correlations', 'build_grid',
           'build_tdoa_table', 'direction_search', 'multi_source_search',
           'potential_source_probability', 'near_field_tdoa',
           'refine_direction', 'prepare_grid', 'Localizer',
           'REFINE_DISTANCES']

NOISE_FLOOR = 1e-12
MAGNITUDE_FLOOR = 1e-10
# reference pair count of the 8-microphone array the energy threshold is set for
REFERENCE_PAIRS = 28
REFINE_DISTANCES = np.array([0.5, 0.85, 1.45, 2.5, 5.])
REFINE_STEP = 1.25


class McraEstimator:
    """ Minima-controlled recursive averaging of a noise power spectrum.

    The power spectrum is smoothed in time and frequency and its minimum is
    tracked over a sliding window. Bins whose smoothed power exceeds `delta`
    times that minimum are taken as signal and do not update the noise
    estimate; elsewhere the estimate follows the input with a rate that slows
    down with the smoothed presence probability.

    Parameters
    ----------
    shape : tuple
        shape of the power spectra, e.g. (channels, bins)
    window : int
        minima tracking window [frames]
    alpha_s : float
        time smoothing of the power spectrum
    alpha_d : float
        noise averaging constant
    alpha_p : float
        smoothing of the presence probability
    delta : float
        presence threshold on the ratio to the tracked minimum
    """

    def __init__(self, shape, window=141, alpha_s=0.8, alpha_d=0.95,
                 alpha_p=0.2, delta=5.):
        self.shape = tuple(shape)
        self.window = max(1, int(window))
        self.alpha_s = alpha_s
        self.alpha_d = alpha_d
        self.alpha_p = alpha_p
        self.delta = delta
        self.noise = None
        self.frames = 0

    def update(self, power):
        """ Feed one power spectrum and return the updated noise estimate."""
        power = np.asarray(power, dtype=float)
        if power.shape != self.shape:
            raise DimensionError('power spectrum of shape {} for an estimator '
                                 'of shape {}'.format(power.shape, self.shape))
        smoothed = convolve1d(power, [0.25, 0.5, 0.25], axis=-1, mode='nearest')

        if self.noise is None:
            self.noise = power.copy()
            self.S = smoothed
            self.Smin = smoothed.copy()
            self.Stmp = smoothed.copy()
            self.p = np.zeros(self.shape)
            self.frames = 1
            return self.noise

        self.S = self.alpha_s*self.S + (1. - self.alpha_s)*smoothed
        self.Smin = np.minimum(self.Smin, self.S)
        self.Stmp = np.minimum(self.Stmp, self.S)
        self.frames += 1
        if self.frames % self.window == 0:
            self.Smin = np.minimum(self.Stmp, self.S)
            self.Stmp = self.S.copy()

        present = self.S > self.delta*self.Smin
        self.p = self.alpha_p*self.p + (1. - self.alpha_p)*present
        alpha = self.alpha_d + (1. - self.alpha_d)*self.p
        self.noise = np.where(present, self.noise,
                              alpha*self.noise + (1. - alpha)*power)
        return self.noise


@dataclass
class NoiseWeightState:
    """ Per-channel noise floors and spectral weights of the beamformer.

    Parameters
    ----------
    mcra : McraEstimator
        noise tracker for all channels
    alpha_d : float
        decision-directed smoothing of the a priori SNR
    gamma : float
        per-frame decay of reverberant power
    delta : float
        signal-to-reverberant power ratio
    reverb : bool
        include the reverberation term in the noise denominator
    """
    mcra: McraEstimator
    alpha_d: float = 0.1
    gamma: float = 0.65
    delta: float = 3.3
    reverb: bool = True
    noise: np.ndarray = None
    xi: np.ndarray = None
    zeta: np.ndarray = None
    lambda_rev: np.ndarray = None
    weighted_power: np.ndarray = None

    def __post_init__(self):
        if not 0. <= self.gamma < 1.:
            raise ValueError('gamma must lie in [0, 1)')
        shape = self.mcra.shape
        self.noise = np.full(shape, NOISE_FLOOR)
        self.xi = np.zeros(shape)
        self.zeta = np.zeros(shape)
        self.lambda_rev = np.zeros(shape)
        # |zeta X|^2 of the previous frame
        self.weighted_power = np.zeros(shape)

    @classmethod
    def create(cls, n_channels, n_bins, sample_rate=48000., hop=512,
               mcra_window=1.5, mcra_alpha_s=0.8, mcra_alpha_d=0.95,
               mcra_alpha_p=0.2, mcra_delta=5., **kwargs):
        """Build a state with an MCRA window given in seconds."""
        frames = int(round(mcra_window*sample_rate/hop))
        mcra = McraEstimator((n_channels, n_bins), frames, mcra_alpha_s,
                             mcra_alpha_d, mcra_alpha_p, mcra_delta)
        return cls(mcra, **kwargs)


def mcra_update(state, power):
    """ Update the noise floors of `state` with one frame of power spectra.

    Parameters
    ----------
    state : NoiseWeightState
        per-channel state, updated in place
    power : array
        nonnegative power spectra of shape (channels, bins)

    Returns
    -------
    noise : array
        noise floors sigma^2, floored at 1e-12
    """
    power = np.asarray(power, dtype=float)
    if np.any(power < 0):
        raise ValueError('power spectrum must be nonnegative')
    state.noise = np.maximum(state.mcra.update(power), NOISE_FLOOR)
    return state.noise


def update_weights(state, spectrum):
    """ Compute the spectral weights zeta = xi/(xi+1) of one frame.

    The a priori SNR follows the decision-directed rule

        xi = [(1-alpha_d) |zeta' X'|^2 + alpha_d |X|^2] / (sigma^2 + lambda_rev)

    where primes denote the previous frame. The reverberant power decays by
    `gamma` per frame and is fed with |zeta' X'|^2 / delta.

    Parameters
    ----------
    state : NoiseWeightState
        state with noise floors already updated for this frame
    spectrum : array
        complex spectra of shape (channels, bins)

    Returns
    -------
    zeta : array
        weights in [0, 1]
    """
    spectrum = np.asarray(spectrum)
    if spectrum.shape != state.noise.shape:
        raise DimensionError('spectrum of shape {} for a state of shape '
                             '{}'.format(spectrum.shape, state.noise.shape))
    power = np.abs(spectrum)**2
    if state.reverb:
        state.lambda_rev = (state.gamma*state.lambda_rev
                            + (1. - state.gamma)/state.delta*state.weighted_power)
    else:
        state.lambda_rev = np.zeros_like(state.lambda_rev)

    state.xi = (((1. - state.alpha_d)*state.weighted_power
                 + state.alpha_d*power)
                / (np.maximum(state.noise, NOISE_FLOOR) + state.lambda_rev))
    state.zeta = state.xi/(state.xi + 1.)
    state.weighted_power = state.zeta**2*power
    return state.zeta


@dataclass
class CrossCorrelationBank:
    """ Weighted cross-correlations of all microphone pairs.

    ``values[p, tau]`` holds the correlation of pair ``pairs[p]`` = (i, j) at
    lag tau, which peaks at the delay of microphone j relative to i. Negative
    lags are stored at tau mod L.
    """
    pairs: np.ndarray
    values: np.ndarray
    frames_averaged: int = 1

    @property
    def frame_length(self):
        return self.values.shape[1]

    @property
    def n_pairs(self):
        return len(self.pairs)

    def copy(self):
        return CrossCorrelationBank(self.pairs.copy(), self.values.copy(),
                                    self.frames_averaged)


def enhanced_cross_correlations(frames, weights=None, average=4, whiten=True,
                                pairs=None):
    """ Weighted cross-correlations averaged over recent frames.

    For each pair (i, j) the cross-spectrum conj(zeta_i X_i) zeta_j X_j,
    divided by |X_i||X_j| when whitening, is averaged over the last `average`
    frames and transformed back. The result is scaled so that a perfectly
    coherent pair with unit weights peaks at L.

    Parameters
    ----------
    frames : SpectralFrameSet or array
        spectra of shape (channels, n_frames, L/2+1) or (channels, L/2+1)
    weights : array, optional
        weights zeta broadcastable to the spectra; unit weights if omitted
    average : int
        number of trailing frames averaged
    whiten : bool
        normalise each spectrum by its magnitude (phase transform)
    pairs : array, optional
        microphone pairs; all pairs i < j by default

    Returns
    -------
    bank : CrossCorrelationBank
        correlations of shape (pairs, L)
    """
    if isinstance(frames, SpectralFrameSet):
        spectra = frames.frames
        L = frames.frame_length
    else:
        spectra = np.asarray(frames)
        if spectra.ndim == 2:
            spectra = spectra[:, np.newaxis, :]
        L = 2*(spectra.shape[-1] - 1)
    if spectra.ndim != 3 or spectra.shape[1] < 1:
        raise DimensionError('need spectra of shape (channels, frames, bins)')

    if weights is None:
        weights = 1.
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.ndim == 2:
            weights = weights[:, np.newaxis, :]
        try:
            np.broadcast_shapes(weights.shape, spectra.shape)
        except ValueError:
            raise DimensionError('weights of shape {} do not match spectra of '
                                 'shape {}'.format(weights.shape, spectra.shape))

    nUsed = min(int(average), spectra.shape[1])
    spectra = spectra[:, -nUsed:, :]
    if np.ndim(weights) == 3 and weights.shape[1] > 1:
        weights = weights[:, -nUsed:, :]

    weighted = weights*spectra
    if whiten:
        weighted = weighted/np.maximum(np.abs(spectra), MAGNITUDE_FLOOR)

    if pairs is None:
        pairs = utils.mic_pairs(spectra.shape[0])
    pairs = np.asarray(pairs)
    cross = np.mean(np.conj(weighted[pairs[:, 0]])*weighted[pairs[:, 1]], axis=1)
    values = L*sfft.irfft(cross, n=L, axis=-1)
    return CrossCorrelationBank(pairs, values, nUsed)


# icosahedron with 12 vertices and 20 faces
_PHI = (1. + np.sqrt(5.))/2.
_ICOSAHEDRON_VERTICES = np.array([
    [-1., _PHI, 0.], [1., _PHI, 0.], [-1., -_PHI, 0.], [1., -_PHI, 0.],
    [0., -1., _PHI], [0., 1., _PHI], [0., -1., -_PHI], [0., 1., -_PHI],
    [_PHI, 0., -1.], [_PHI, 0., 1.], [-_PHI, 0., -1.], [-_PHI, 0., 1.]])
_ICOSAHEDRON_FACES = np.array([
    [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
    [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
    [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
    [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]])


@dataclass
class SphericalGrid:
    """ Search directions on a subdivided icosahedron.

    Parameters
    ----------
    directions : array
        unit vectors of shape (V, 3)
    triangles : array
        vertex index triples of shape (F, 3)
    levels : int
        number of subdivisions
    tdoa_table : array, optional
        delay in samples per direction and microphone pair, shape (V, P)
    pairs : array, optional
        microphone pairs the columns of `tdoa_table` refer to
    """
    directions: np.ndarray
    triangles: np.ndarray
    levels: int
    tdoa_table: np.ndarray = None
    pairs: np.ndarray = None

    @property
    def n_directions(self):
        return len(self.directions)

    def edges(self):
        """Return the unique undirected edges of the mesh."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)


def build_grid(levels=4):
    """ Build a spherical grid by recursive subdivision of an icosahedron.

    Each triangle is split into four at its edge midpoints, which are pushed
    to the unit sphere.

    Parameters
    ----------
    levels : int
        number of subdivisions

    Returns
    -------
    grid : SphericalGrid
        grid with 10*4**levels + 2 directions and 20*4**levels triangles

    Example
    -------
    >>> grid = build_grid(1)
    >>> grid.n_directions, len(grid.triangles)
    (42, 80)
    """
    if levels < 0:
        raise ValueError('levels must be nonnegative')
    verts = list(utils.normalize(_ICOSAHEDRON_VERTICES))
    faces = [tuple(f) for f in _ICOSAHEDRON_FACES]

    for _ in range(levels):
        midpoints = {}

        def midpoint(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in midpoints:
                s = verts[a] + verts[b]
                verts.append(s/np.linalg.norm(s))
                midpoints[key] = len(verts) - 1
            return midpoints[key]

        newFaces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            newFaces.extend([(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)])
        faces = newFaces

    return SphericalGrid(np.array(verts), np.array(faces, dtype=int), levels)


def build_tdoa_table(grid, mic_positions, sample_rate=48000.,
                     speed_of_sound=utils.SPEED_OF_SOUND, pairs=None):
    """ Far-field delays in samples for every direction and microphone pair.

    tau_ij(u) = round(Fs/c (p_i - p_j).u), the delay of microphone j relative
    to microphone i for a source in direction u.

    Parameters
    ----------
    grid : SphericalGrid
        search directions; its table is filled in place
    mic_positions : array
        microphone positions of shape (N, 3) [m]
    sample_rate : float
        sampling rate [Hz]
    speed_of_sound : float
        speed of sound [m/s]
    pairs : array, optional
        microphone pairs; all pairs i < j by default

    Returns
    -------
    tdoa_table : array
        integer delays of shape (V, P)
    """
    mics = np.asarray(mic_positions, dtype=float)
    if pairs is None:
        pairs = utils.mic_pairs(len(mics))
    pairs = np.asarray(pairs)
    baselines = mics[pairs[:, 0]] - mics[pairs[:, 1]]
    coincident = np.linalg.norm(baselines, axis=1) == 0
    if np.any(coincident):
        warnings.warn('coincident microphones in pairs {}; their delays are '
                      'zero'.format(pairs[coincident].tolist()), MicArrayWarning)

    delays = sample_rate/speed_of_sound*grid.directions@baselines.T
    grid.tdoa_table = np.round(delays).astype(int)
    grid.pairs = pairs
    return grid.tdoa_table


def _steered_energies(values, tdoa):
    """Sum pair correlations at the delays of each row of `tdoa`."""
    L = values.shape[1]
    return values[np.arange(values.shape[0]), tdoa % L].sum(axis=-1)


def direction_search(bank, grid):
    """ Find the grid direction of maximum beamformer energy.

    Parameters
    ----------
    bank : CrossCorrelationBank
        pair correlations
    grid : SphericalGrid
        grid with a delay table for the same pairs

    Returns
    -------
    index : int
        best direction; the lowest index wins ties
    energy : float
        sum of pair correlations at the delays of that direction
    """
    if grid.tdoa_table is None:
        raise ValueError('the grid has no delay table, call build_tdoa_table')
    if grid.tdoa_table.shape[1] != bank.n_pairs:
        raise DimensionError('delay table for {} pairs, bank with {}'.format(
            grid.tdoa_table.shape[1], bank.n_pairs))
    energies = _steered_energies(bank.values, grid.tdoa_table)
    index = int(np.argmax(energies))
    return index, float(energies[index])


def potential_source_probability(q, energy, energy_threshold=150.):
    """ Confidence that the q-th detection of a search is a real source.

    For the first detection, with nu = E/E_T, the confidence is nu^2/2 for
    nu <= 1 and 1 - nu^-2/2 above. Later detections get fixed values.

    Example
    -------
    >>> potential_source_probability(0, 300., 150.)
    0.875
    >>> potential_source_probability(2, 1e6)
    0.16
    """
    if q < 0:
        raise ValueError('q must be nonnegative')
    if q == 0:
        nu = max(energy/energy_threshold, 0.)
        if nu <= 1.:
            return nu**2/2.
        return 1. - 1./(2.*nu**2)
    return {1: 0.3, 2: 0.16}.get(q, 0.03)


@dataclass
class PotentialSource:
    """ One detection of the beamformer.

    Parameters
    ----------
    direction : array
        unit vector
    energy : float
        beamformer energy
    probability : float
        confidence in [0, 1]
    q : int
        rank of the detection within its search
    """
    direction: np.ndarray
    energy: float
    probability: float
    q: int = 0

    @property
    def azimuth(self):
        return float(utils.cart2sph(self.direction)[0])

    @property
    def elevation(self):
        return float(utils.cart2sph(self.direction)[1])


def multi_source_search(bank, grid, n_sources=4, energy_threshold=150.,
                        zero_width=1):
    """ Locate up to `n_sources` sources by repeated direction search.

    After each search the correlations at the delays of the found direction
    are set to zero, together with `zero_width` neighbouring lags on each
    side, so that the next search finds another source.

    Parameters
    ----------
    bank : CrossCorrelationBank
        pair correlations; not modified
    grid : SphericalGrid
        grid with delay table
    n_sources : int
        number of searches Q
    energy_threshold : float
        E_T for an array of 28 pairs; scaled with the actual pair count
    zero_width : int
        half width of the zeroed lag neighbourhood

    Returns
    -------
    sources : list of PotentialSource
        detections in search order
    """
    if n_sources < 1:
        raise ValueError('n_sources must be at least 1')
    values = bank.values.copy()
    L = values.shape[1]
    rows = np.arange(values.shape[0])
    threshold = energy_threshold*bank.n_pairs/REFERENCE_PAIRS
    work = CrossCorrelationBank(bank.pairs, values, bank.frames_averaged)

    sources = []
    firstEnergy = 0.
    for q in range(n_sources):
        index, energy = direction_search(work, grid)
        if q == 0:
            firstEnergy = energy
        probability = potential_source_probability(q, firstEnergy, threshold)
        sources.append(PotentialSource(grid.directions[index].copy(), energy,
                                       probability, q))
        for offset in range(-zero_width, zero_width + 1):
            values[rows, (grid.tdoa_table[index] + offset) % L] = 0.
    return sources


def near_field_tdoa(source_positions, mic_positions, pairs, sample_rate=48000.,
                    speed_of_sound=utils.SPEED_OF_SOUND):
    """ Delays in samples for sources at finite positions.

    tau_ij = Fs/c (|s - p_j| - |s - p_i|); tends to the far-field delay as
    the distance grows.

    Parameters
    ----------
    source_positions : array
        positions of shape (..., 3) [m]
    mic_positions : array
        microphone positions of shape (N, 3) [m]
    pairs : array
        microphone pairs of shape (P, 2)

    Returns
    -------
    delays : array
        fractional delays of shape (..., P)
    """
    s = np.asarray(source_positions, dtype=float)[..., np.newaxis, :]
    distances = np.linalg.norm(s - np.asarray(mic_positions), axis=-1)
    pairs = np.asarray(pairs)
    return (sample_rate/speed_of_sound
            * (distances[..., pairs[:, 1]] - distances[..., pairs[:, 0]]))


def _tangent_basis(direction):
    """Unit vectors along increasing azimuth and elevation at `direction`."""
    up = np.array([0., 0., 1.])
    east = np.cross(up, direction)
    if np.linalg.norm(east) < 1e-9:
        east = np.array([0., 1., 0.])
    east = east/np.linalg.norm(east)
    north = np.cross(direction, east)
    return east, north/np.linalg.norm(north)


def _interpolated_energies(values, delays):
    """Sum pair correlations at fractional delays, linearly interpolated."""
    L = values.shape[1]
    rows = np.arange(values.shape[0])
    low = np.floor(delays)
    frac = delays - low
    low = low.astype(int)
    return np.sum((1. - frac)*values[rows, low % L]
                  + frac*values[rows, (low + 1) % L], axis=-1)


def refine_direction(bank, coarse, mic_positions, sample_rate=48000.,
                     speed_of_sound=utils.SPEED_OF_SOUND,
                     distances=REFINE_DISTANCES, step=REFINE_STEP):
    """ Refine a coarse direction on a local 5 x 5 x 5 grid.

    Directions are offset by -2..2 steps of `step` degrees along azimuth and
    elevation in the tangent plane of the coarse direction, and each is
    evaluated at five source distances with near-field delays. Correlations
    are read at fractional lags by linear interpolation. The distance of the
    best point is discarded.

    Parameters
    ----------
    bank : CrossCorrelationBank
        pair correlations
    coarse : array
        unit vector found by the grid search
    mic_positions : array
        microphone positions of shape (N, 3) [m]
    distances : array
        candidate source distances [m]
    step : float
        angular step [deg]

    Returns
    -------
    direction : array
        refined unit vector
    """
    coarse = utils.normalize(coarse)
    east, north = _tangent_basis(coarse)
    offsets = np.tan(np.radians(step*np.arange(-2, 3)))
    a, b = np.meshgrid(offsets, offsets, indexing='ij')
    candidates = utils.normalize(coarse + a.reshape(-1, 1)*east
                                 + b.reshape(-1, 1)*north)
    centre = utils.array_centroid(mic_positions)
    points = (centre + np.asarray(distances)[:, np.newaxis, np.newaxis]
              * candidates[np.newaxis])
    delays = near_field_tdoa(points, mic_positions, bank.pairs, sample_rate,
                             speed_of_sound)
    energies = _interpolated_energies(bank.values, delays)
    best = np.unravel_index(np.argmax(energies), energies.shape)
    return candidates[best[1]].copy()


def _grid_cache_key(mic_positions, sample_rate, speed_of_sound, levels):
    digest = hashlib.sha1()
    digest.update(np.ascontiguousarray(mic_positions, dtype=float).tobytes())
    digest.update(repr((float(sample_rate), float(speed_of_sound),
                        int(levels))).encode())
    return digest.hexdigest()[:16]


def prepare_grid(mic_positions, sample_rate=48000.,
                 speed_of_sound=utils.SPEED_OF_SOUND, levels=4, cache_dir=None):
    """ Build the search grid and delay table, using a cache if available.

    Parameters
    ----------
    mic_positions : array
        microphone positions of shape (N, 3) [m]
    cache_dir : str, optional
        directory of HDF5 grid caches; defaults to ``conf.grid_cache_dir``,
        an empty value disables caching

    Returns
    -------
    grid : SphericalGrid
        grid with delay table
    """
    from . import output
    from .config import conf

    if cache_dir is None:
        cache_dir = conf.grid_cache_dir
    filename = None
    if cache_dir:
        key = _grid_cache_key(mic_positions, sample_rate, speed_of_sound, levels)
        filename = os.path.join(cache_dir, 'grid_{}.h5'.format(key))
        if os.path.isfile(filename):
            log.debug('Reading search grid from {}'.format(filename))
            return output.read_grid_cache(filename)

    grid = build_grid(levels)
    build_tdoa_table(grid, mic_positions, sample_rate, speed_of_sound)
    if filename is not None:
        os.makedirs(cache_dir, exist_ok=True)
        output.write_grid_cache(filename, grid, key)
        log.debug('Cached search grid in {}'.format(filename))
    return grid


@dataclass
class Detection:
    """Potential sources found at the end of one localisation block."""
    block: int
    frame_index: int
    time: float
    sources: list = field(default_factory=list)


class Localizer:
    """ Streaming steered-beamformer localiser.

    Frames are fed one at a time. Each frame updates the noise floors and
    spectral weights; every `block_frames` frames the weighted cross-spectra
    of the block are averaged and searched for up to `n_sources` sources.

    Parameters
    ----------
    mic_positions : array
        microphone positions of shape (N, 3) [m]
    sample_rate : float
        sampling rate [Hz]
    frame_length : int
        STFT frame length L
    grid : SphericalGrid, optional
        search grid; built with `prepare_grid` if omitted
    """

    def __init__(self, mic_positions, sample_rate=48000., frame_length=1024,
                 speed_of_sound=utils.SPEED_OF_SOUND, block_frames=4,
                 n_sources=4, energy_threshold=150., grid_levels=4,
                 alpha_d=0.1, t60=0.35, srr=3.3, reverb=True, whiten=True,
                 refine=True, zero_width=1, mcra_window=1.5,
                 mcra_alpha_s=0.8, mcra_alpha_d=0.95, mcra_alpha_p=0.2,
                 mcra_delta=5., grid=None):
        self.mic_positions = np.asarray(mic_positions, dtype=float)
        self.sample_rate = sample_rate
        self.frame_length = frame_length
        self.hop = frame_length//2
        self.speed_of_sound = speed_of_sound
        self.block_frames = int(block_frames)
        self.n_sources = n_sources
        self.energy_threshold = energy_threshold
        self.whiten = whiten
        self.refine = refine
        self.zero_width = zero_width
        if grid is None:
            grid = prepare_grid(self.mic_positions, sample_rate, speed_of_sound,
                                grid_levels)
        self.grid = grid

        nMics = len(self.mic_positions)
        self.state = NoiseWeightState.create(
            nMics, frame_length//2 + 1, sample_rate, self.hop,
            mcra_window, mcra_alpha_s, mcra_alpha_d, mcra_alpha_p, mcra_delta,
            alpha_d=alpha_d, gamma=utils.gamma_from_t60(t60, self.hop, sample_rate),
            delta=srr, reverb=reverb)
        self._spectra = []
        self._weights = []
        self.frame_index = -1
        self.block = 0

    @classmethod
    def from_config(cls, cfg, grid=None):
        """ Create a localiser from a `~micarraytools.config.RunConfig`."""
        loc = cfg.localization
        return cls(cfg.mic_positions, cfg.array.sample_rate,
                   cfg.stft.frame_length, cfg.array.speed_of_sound,
                   cfg.block_frames, loc.n_sources, loc.energy_threshold,
                   loc.grid_levels, loc.alpha_d, cfg.reverb.t60,
                   cfg.reverb.srr, loc.reverb, loc.whiten, loc.refine,
                   loc.zero_width, loc.mcra_window, loc.mcra_alpha_s,
                   loc.mcra_alpha_d, loc.mcra_alpha_p, loc.mcra_delta, grid)

    @property
    def block_duration(self):
        """Time between two localisation results [s]."""
        return self.block_frames*self.hop/self.sample_rate

    @property
    def noise(self):
        """Current per-microphone noise floors."""
        return self.state.noise

    def process_frame(self, spectrum):
        """ Feed the spectra of one frame.

        Parameters
        ----------
        spectrum : array
            complex spectra of shape (channels, L/2+1)

        Returns
        -------
        detection : Detection or None
            search result when this frame completes a block
        """
        spectrum = np.asarray(spectrum)
        self.frame_index += 1
        mcra_update(self.state, np.abs(spectrum)**2)
        zeta = update_weights(self.state, spectrum)
        self._spectra.append(spectrum)
        self._weights.append(zeta)
        if len(self._spectra) < self.block_frames:
            return None

        bank = enhanced_cross_correlations(
            np.stack(self._spectra, axis=1), np.stack(self._weights, axis=1),
            average=self.block_frames, whiten=self.whiten, pairs=self.grid.pairs)
        self._spectra, self._weights = [], []
        sources = multi_source_search(bank, self.grid, self.n_sources,
                                      self.energy_threshold, self.zero_width)
        if self.refine:
            for source in sources:
                source.direction = refine_direction(
                    bank, source.direction, self.mic_positions,
                    self.sample_rate, self.speed_of_sound)
        detection = Detection(self.block, self.frame_index,
                              (self.frame_index + 1)*self.hop/self.sample_rate,
                              sources)
        self.block += 1
        return detection

    def run(self, frames):
        """ Localise all frames of a frame set.

        Parameters
        ----------
        frames : SpectralFrameSet
            analysed microphone signals

        Returns
        -------
        detections : list of Detection
            one entry per completed block
        """
        if frames.channel_count != len(self.mic_positions):
            raise DimensionError('{} channels for {} microphones'.format(
                frames.channel_count, len(self.mic_positions)))
        detections = []
        for l in range(frames.n_frames):
            detection = self.process_frame(frames.frames[:, l, :])
            if detection is not None:
                detections.append(detection)
        log.info('Localised {} blocks of {} frames'.format(
            len(detections), self.block_frames))
        return detections
