""" Multi-source post-filter for separated signals.

The noise in each separated output is modelled as stationary background
noise, leakage from the other outputs and reverberation of all sources. A
log-spectral amplitude MMSE gain, modified for speech presence uncertainty,
is applied to each output.
"""
from dataclasses import dataclass

import numpy as np
from astropy import log
from scipy import signal
from scipy.ndimage import convolve1d
from scipy.special import exp1, i0e, i1e

from . import utils
from .exceptions import DimensionError
from .localization import McraEstimator

__all__ = ['PostfilterState', 'init_noise', 'leakage_noise', 'estimate_noise',
           'log_mmse_gain', 'stsa_gain', 'compute_gain_h1', 'hann_kernel',
           'presence_prior', 'speech_presence', 'apply_gain', 'PostFilter',
           'DIAGNOSTIC_FIELDS']

POWER_FLOOR = 1e-12
UPSILON_MIN = 1e-6
Q_MAX = 0.9
DIAGNOSTIC_FIELDS = ('Y_power', 'S_power', 'lambda_stat', 'lambda_leak',
                     'lambda_rev', 'xi', 'p', 'gain')


@dataclass
class PostfilterState:
    """ Post-filter state of one separated source.

    All spectra have one value per frequency bin. Variables other than the
    stationary noise start at zero.
    """
    n_bins: int
    mcra: McraEstimator = None
    lambda_stat: np.ndarray = None
    lambda_leak: np.ndarray = None
    lambda_rev: np.ndarray = None
    Z: np.ndarray = None
    xi: np.ndarray = None
    gain_h1: np.ndarray = None
    gamma: np.ndarray = None
    output_power: np.ndarray = None
    zeta_local: np.ndarray = None
    zeta_global: np.ndarray = None
    zeta_frame: float = 0.
    frames: int = 0

    def __post_init__(self):
        for name in ('lambda_stat', 'lambda_leak', 'lambda_rev', 'Z', 'xi',
                     'gain_h1', 'gamma', 'output_power', 'zeta_local',
                     'zeta_global'):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(self.n_bins))
        if self.mcra is None:
            self.mcra = McraEstimator((self.n_bins,))

    @property
    def mcra_mature(self):
        """Whether the source-level MCRA has seen a full minima window."""
        return self.mcra.frames >= self.mcra.window


def init_noise(mic_noise, n_mics=None):
    """ Initial stationary noise of a delay-and-sum output.

    lambda_stat = sum_n sigma_n^2 / N^2

    Parameters
    ----------
    mic_noise : array
        noise floors of the N microphones, shape (N, K)
    n_mics : int, optional
        N; the first dimension of `mic_noise` by default

    Returns
    -------
    lambda_stat : array
        shape (K,)
    """
    mic_noise = np.atleast_2d(np.asarray(mic_noise, dtype=float))
    if n_mics is None:
        n_mics = mic_noise.shape[0]
    return mic_noise.sum(axis=0)/n_mics**2


def leakage_noise(Z, eta=0.1):
    """ Leakage eta sum_{i != m} Z_i for every source m.

    Example
    -------
    >>> leakage_noise(np.array([[0.], [10.]]), 0.1)[0].tolist()
    [1.0]
    """
    Z = np.asarray(Z, dtype=float)
    return eta*(Z.sum(axis=0, keepdims=True) - Z)


def estimate_noise(states, Y, eta=0.1, alpha_s=0.2, gamma=0.65, delta=3.3,
                   leak=True, reverb=True):
    """ Noise power of every separated source for one frame.

    lambda_m = lambda_stat_m + eta sum_{i != m} Z_i [+ sum_i lambda_rev_i]

    Smoothed spectra Z of all sources are updated first, then the
    reverberation terms from the previous post-filter outputs, then the
    stationary noise by MCRA once it has matured.

    Parameters
    ----------
    states : list of PostfilterState
        states of all live sources, updated in place
    Y : array
        separated spectra, shape (M, K)
    eta : float
        leakage factor (power)
    alpha_s : float
        smoothing of Z
    gamma, delta : float
        reverberation decay per frame and signal-to-reverberant ratio
    leak, reverb : bool
        include the leakage and reverberation terms

    Returns
    -------
    lam : array
        noise power, shape (M, K)
    """
    Y = np.atleast_2d(Y)
    if len(states) != Y.shape[0]:
        raise DimensionError('{} post-filter states for {} outputs'.format(
            len(states), Y.shape[0]))
    power = np.abs(Y)**2
    for state, P in zip(states, power):
        state.Z = alpha_s*state.Z + (1. - alpha_s)*P
        state.lambda_rev = (gamma*state.lambda_rev
                            + (1. - gamma)/delta*state.output_power)
        noise = state.mcra.update(P)
        if state.mcra_mature:
            state.lambda_stat = noise.copy()
        state.frames += 1

    Z = np.array([s.Z for s in states])
    leakage = leakage_noise(Z, eta) if leak else np.zeros_like(Z)
    rev = np.sum([s.lambda_rev for s in states], axis=0) if reverb else 0.
    lam = np.empty_like(Z)
    for m, state in enumerate(states):
        state.lambda_leak = leakage[m]
        lam[m] = state.lambda_stat + leakage[m] + rev
    return lam


def log_mmse_gain(xi, gamma):
    """ Log-spectral amplitude MMSE gain under speech presence.

    G = xi/(1+xi) exp(E1(v)/2), v = gamma xi/(1+xi), where E1 is the
    exponential integral. The gain is not limited to 1.

    Example
    -------
    >>> round(float(log_mmse_gain(1., 2.)), 4)
    0.558
    """
    xi = np.asarray(xi, dtype=float)
    upsilon = np.maximum(np.asarray(gamma)*xi/(1. + xi), UPSILON_MIN)
    return xi/(1. + xi)*np.exp(0.5*exp1(upsilon))


def stsa_gain(xi, gamma):
    """ Spectral amplitude MMSE gain under speech presence.

    G = sqrt(pi)/2 sqrt(v)/gamma exp(-v/2) [(1+v) I0(v/2) + v I1(v/2)]
    """
    xi = np.asarray(xi, dtype=float)
    gamma = np.maximum(np.asarray(gamma, dtype=float), UPSILON_MIN)
    upsilon = np.maximum(gamma*xi/(1. + xi), UPSILON_MIN)
    return (np.sqrt(np.pi)/2.*np.sqrt(upsilon)/gamma
            * ((1. + upsilon)*i0e(upsilon/2.) + upsilon*i1e(upsilon/2.)))


def compute_gain_h1(state, Y, lam, alpha_pmin=0.07, xi_min=10.**-2.5,
                    mode='log'):
    """ Update the a priori SNR and return the gain under speech presence.

    xi = (1 - alpha_p) G'^2 gamma' + alpha_p max(gamma - 1, 0), where primes
    denote the previous frame and alpha_p = (xi'/(1+xi'))^2 + alpha_pmin.

    Parameters
    ----------
    state : PostfilterState
        state of the source, updated in place
    Y : array
        separated spectrum, shape (K,)
    lam : array
        noise power, shape (K,)
    mode : {'log', 'stsa'}
        log-spectral or spectral amplitude estimator

    Returns
    -------
    gain : array
        G_H1, not limited to 1
    upsilon : array
        gamma xi/(1+xi)
    """
    gamma = np.abs(Y)**2/np.maximum(lam, POWER_FLOOR)
    alpha_p = np.minimum((state.xi/(1. + state.xi))**2 + alpha_pmin, 1.)
    xi = ((1. - alpha_p)*state.gain_h1**2*state.gamma
          + alpha_p*np.maximum(gamma - 1., 0.))
    xi = np.maximum(xi, xi_min)
    upsilon = np.maximum(gamma*xi/(1. + xi), UPSILON_MIN)
    if mode == 'log':
        gain = log_mmse_gain(xi, gamma)
    elif mode == 'stsa':
        gain = stsa_gain(xi, gamma)
    else:
        raise ValueError('unknown gain mode {}'.format(mode))
    state.xi = xi
    state.gamma = gamma
    state.gain_h1 = gain
    return gain, upsilon


def hann_kernel(bandwidth, bin_width):
    """ Normalised Hann window covering `bandwidth` Hz.

    The width in bins is rounded and made odd; the zero end points of the
    window are not counted.

    Example
    -------
    >>> hann_kernel(140., 46.875).round(3).tolist()
    [0.25, 0.5, 0.25]
    """
    n = max(1, int(round(bandwidth/bin_width)))
    if n % 2 == 0:
        n += 1
    h = signal.windows.hann(n + 2)[1:-1]
    return h/h.sum()


def presence_prior(zeta, theta):
    """ Soft presence decision 1/(1 + (theta/zeta)^2); zero for zeta = 0.

    Example
    -------
    >>> float(presence_prior(0.5, 0.5))
    0.5
    """
    zeta = np.asarray(zeta, dtype=float)
    ratio = np.divide(theta, zeta, out=np.full_like(zeta, np.inf), where=zeta > 0)
    return 1./(1. + ratio**2)


def speech_presence(state, xi, upsilon, local_kernel, global_kernel,
                    theta=10.**-0.5, alpha_zeta=0.3):
    """ Probability of speech presence per frequency bin.

    The a priori SNR is averaged over a local and a global frequency window
    and, with a Hann window, over the full band. The averages are smoothed in
    time and each is turned into a presence probability. Their product gives
    the a priori absence probability
    q = min(1 - P_local P_global P_frame, 0.9), from which

        p = 1 / (1 + q/(1-q) (1+xi) exp(-v)).

    Parameters
    ----------
    state : PostfilterState
        state of the source, updated in place
    xi, upsilon : array
        a priori SNR and gamma xi/(1+xi) of the frame
    local_kernel, global_kernel : array
        normalised frequency smoothing windows
    theta : float
        soft-decision threshold (power ratio)
    alpha_zeta : float
        weight of the current frame in the time smoothing

    Returns
    -------
    p : array
        speech presence probability in [0, 1]
    """
    local = convolve1d(xi, local_kernel, mode='nearest')
    glob = convolve1d(xi, global_kernel, mode='nearest')
    state.zeta_local = (1. - alpha_zeta)*state.zeta_local + alpha_zeta*local
    state.zeta_global = (1. - alpha_zeta)*state.zeta_global + alpha_zeta*glob
    frame = np.average(xi, weights=signal.windows.hann(len(xi) + 2)[1:-1])
    state.zeta_frame = (1. - alpha_zeta)*state.zeta_frame + alpha_zeta*frame

    prior = (presence_prior(state.zeta_local, theta)
             * presence_prior(state.zeta_global, theta)
             * presence_prior(state.zeta_frame, theta))
    q = np.clip(1. - prior, 0., Q_MAX)
    return 1./(1. + q/(1. - q)*(1. + xi)*np.exp(-upsilon))


def apply_gain(Y, gain_h1, p, gain_min=0.1):
    """ Apply the presence-weighted gain G = G_H1^p G_min^(1-p).

    G_H1 is limited to 1 first; the result lies in [G_min, 1].

    Returns
    -------
    S : array
        enhanced spectrum
    gain : array
        applied gain

    Example
    -------
    >>> S, G = apply_gain(np.ones(1), np.array([0.4]), np.array([0.5]))
    >>> round(float(G[0]), 6)
    0.2
    """
    g = np.clip(gain_h1, gain_min, 1.)
    gain = np.clip(g**p*gain_min**(1. - p), gain_min, 1.)
    return gain*np.asarray(Y), gain


class PostFilter:
    """ Post-filter for all outputs of the separation.

    Parameters
    ----------
    sample_rate : float
        sampling rate [Hz]
    frame_length : int
        STFT frame length L
    eta : float
        leakage factor; zero together with ``leak=False`` gives independent
        single-source filters
    leak : bool
        include the leakage term
    reverb : bool
        include the reverberation term
    gain_mode : {'log', 'stsa'}
        amplitude estimator
    record : bool
        keep per-frame diagnostics of every source
    """

    def __init__(self, sample_rate=48000., frame_length=1024, eta=0.1,
                 alpha_s=0.2, alpha_pmin=0.07, gain_min_db=-20.,
                 theta_db=-5., alpha_zeta=0.3, local_bandwidth=140.,
                 global_bandwidth=1400., xi_min_db=-25., leak=True,
                 reverb=True, t60=0.35, srr=3.3, gain_mode='log',
                 mcra_window=1.5, mcra_alpha_s=0.8, mcra_alpha_d=0.95,
                 mcra_alpha_p=0.2, mcra_delta=5., record=True):
        self.sample_rate = sample_rate
        self.frame_length = frame_length
        self.n_bins = frame_length//2 + 1
        self.eta = eta
        self.alpha_s = alpha_s
        self.alpha_pmin = alpha_pmin
        self.gain_min = float(utils.db2amp(gain_min_db))
        self.theta = float(utils.db2pow(theta_db))
        self.alpha_zeta = alpha_zeta
        self.xi_min = float(utils.db2pow(xi_min_db))
        self.leak = leak
        self.reverb = reverb
        hop = frame_length//2
        self.gamma = utils.gamma_from_t60(t60, hop, sample_rate)
        self.delta = srr
        self.gain_mode = gain_mode
        binWidth = sample_rate/frame_length
        self.local_kernel = hann_kernel(local_bandwidth, binWidth)
        self.global_kernel = hann_kernel(global_bandwidth, binWidth)
        self._mcra = dict(window=int(round(mcra_window*sample_rate/hop)),
                          alpha_s=mcra_alpha_s, alpha_d=mcra_alpha_d,
                          alpha_p=mcra_alpha_p, delta=mcra_delta)
        self.record = record
        self.states = {}
        self.diagnostics = {}
        self.frame_index = -1

    @classmethod
    def from_config(cls, cfg, leak=None, reverb=None):
        """ Create a post-filter from a `~micarraytools.config.RunConfig`.

        `leak` and `reverb` override the configured switches.
        """
        pf = cfg.postfilter
        loc = cfg.localization
        return cls(cfg.array.sample_rate, cfg.stft.frame_length, pf.eta,
                   pf.alpha_s, pf.alpha_pmin, pf.gain_min_db, pf.theta_db,
                   pf.alpha_zeta, pf.local_bandwidth, pf.global_bandwidth,
                   pf.xi_min_db, pf.leak if leak is None else leak,
                   pf.reverb if reverb is None else reverb, cfg.reverb.t60,
                   cfg.reverb.srr, pf.gain_mode, loc.mcra_window,
                   loc.mcra_alpha_s, loc.mcra_alpha_d, loc.mcra_alpha_p,
                   loc.mcra_delta)

    @property
    def source_ids(self):
        return list(self.states)

    def add_source(self, source_id, mic_noise=None):
        """ Start filtering a new source.

        Parameters
        ----------
        source_id : hashable
            identifier matching the separator row
        mic_noise : array, optional
            microphone noise floors of shape (N, K) for the initial
            stationary noise estimate
        """
        state = PostfilterState(self.n_bins,
                                McraEstimator((self.n_bins,), **self._mcra))
        if mic_noise is not None:
            state.lambda_stat = init_noise(mic_noise)
        self.states[source_id] = state
        if self.record:
            self.diagnostics.setdefault(source_id, {'frame': [], **{
                name: [] for name in DIAGNOSTIC_FIELDS}})

    def remove_source(self, source_id):
        del self.states[source_id]

    def sync(self, source_ids, mic_noise=None):
        """Add and remove sources to match `source_ids`."""
        for sid in list(self.states):
            if sid not in source_ids:
                self.remove_source(sid)
        for sid in source_ids:
            if sid not in self.states:
                self.add_source(sid, mic_noise)

    def process_frame(self, Y):
        """ Filter one frame of all separated outputs.

        Parameters
        ----------
        Y : array
            separated spectra, shape (M, K), rows in `source_ids` order

        Returns
        -------
        S : array
            enhanced spectra, shape (M, K)
        """
        self.frame_index += 1
        Y = np.atleast_2d(Y)
        states = list(self.states.values())
        if not states:
            return np.zeros((0, self.n_bins), dtype=complex)
        lam = estimate_noise(states, Y, self.eta if self.leak else 0.,
                             self.alpha_s, self.gamma, self.delta, self.leak,
                             self.reverb)
        S = np.empty_like(Y, dtype=complex)
        for m, (sid, state) in enumerate(self.states.items()):
            gainH1, upsilon = compute_gain_h1(state, Y[m], lam[m],
                                              self.alpha_pmin, self.xi_min,
                                              self.gain_mode)
            p = speech_presence(state, state.xi, upsilon, self.local_kernel,
                                self.global_kernel, self.theta,
                                self.alpha_zeta)
            S[m], gain = apply_gain(Y[m], gainH1, p, self.gain_min)
            state.output_power = np.abs(S[m])**2
            if self.record:
                rev = lam[m] - state.lambda_stat - state.lambda_leak
                self._record(sid, {'Y_power': np.abs(Y[m])**2,
                                   'S_power': state.output_power,
                                   'lambda_stat': state.lambda_stat,
                                   'lambda_leak': state.lambda_leak,
                                   'lambda_rev': rev, 'xi': state.xi,
                                   'p': p, 'gain': gain})
        return S

    def _record(self, source_id, values):
        store = self.diagnostics[source_id]
        store['frame'].append(self.frame_index)
        for name in DIAGNOSTIC_FIELDS:
            store[name].append(np.array(values[name], dtype=float))

    def diagnostic_arrays(self):
        """ Recorded diagnostics as arrays.

        Returns
        -------
        diagnostics : dict
            per source id a dict with 'frame' (n,) and each diagnostic field
            of shape (n, K)
        """
        out = {}
        for sid, store in self.diagnostics.items():
            out[sid] = {'frame': np.array(store['frame'], dtype=int)}
            for name in DIAGNOSTIC_FIELDS:
                out[sid][name] = (np.array(store[name]) if store[name]
                                  else np.zeros((0, self.n_bins)))
        log.debug('Post-filter diagnostics for {} sources'.format(len(out)))
        return out
