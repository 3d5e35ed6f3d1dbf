""" Particle-filter tracking of multiple sound sources.

Each tracked source carries a cloud of particles on the unit sphere. Noisy
detections of the beamformer are associated with tracks, false alarms or new
sources by enumerating all admissible assignments; existence and activity
probabilities decide when tracks are confirmed and when they are removed.
"""
import itertools
import warnings
from collections import deque
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from astropy import log

from . import utils
from .exceptions import MicArrayWarning

__all__ = ['REGIMES', 'SourceTrack', 'AssignmentDistribution', 'TrackEstimate',
           'predict', 'observation_likelihood', 'assignment_posteriors',
           'update_existence', 'update_activity', 'activity_prior',
           'activity_evidence', 'update_weights', 'manage_sources',
           'estimate_position', 'effective_sample_size', 'resample',
           'new_track', 'Tracker']

# damping alpha [1/s] and excitation beta [1/s] of the stationary, constant
# velocity and accelerated motion regimes
REGIMES = np.array([[2., 0.04],
                    [0.05, 0.2],
                    [0.5, 0.2]])
REGIME_PROBABILITIES = (0.4, 0.4, 0.2)
UNIFORM_DENSITY = 1./(4.*np.pi)
MAX_OBSERVATIONS = 4
MAX_TRACKS = 8


class SourceTrack:
    """ Particle cloud and probabilities of one tracked source.

    Parameters
    ----------
    track_id : int
        identifier, unique within a tracker
    positions : array
        particle positions, unit vectors of shape (Np, 3)
    velocities : array
        particle velocities tangent to the sphere, shape (Np, 3) [1/s]
    regimes : array
        motion regime index of each particle
    history_length : int
        number of past position sets kept for delayed estimates
    existence : float
        probability that the source exists
    activity : float
        probability that the source is active
    """

    def __init__(self, track_id, positions, velocities, regimes,
                 history_length=1, existence=0.5, activity=0.5, weights=None):
        self.track_id = track_id
        self.positions = np.asarray(positions, dtype=float)
        self.velocities = np.asarray(velocities, dtype=float)
        self.regimes = np.asarray(regimes, dtype=int)
        nParticles = len(self.positions)
        if weights is None:
            weights = np.full(nParticles, 1./nParticles)
        self.weights = np.asarray(weights, dtype=float)
        self.existence = existence
        self.activity = activity
        self.confirmed = False
        self.unobserved_steps = 0
        self.age = 0
        self.degenerate = False
        self.history = deque(maxlen=max(1, int(history_length)))

    @property
    def n_particles(self):
        return len(self.positions)

    def __repr__(self):
        return ('SourceTrack(id={}, particles={}, P_exist={:.3f}, '
                'P_active={:.3f}, confirmed={})'.format(
                    self.track_id, self.n_particles, self.existence,
                    self.activity, self.confirmed))


@dataclass(frozen=True)
class AssignmentDistribution:
    """ Marginal assignment probabilities of Q detections and M tracks.

    Parameters
    ----------
    P : array
        P[q, j], probability that detection q belongs to track j
    H0 : array
        probability that detection q is a false alarm
    H2 : array
        probability that detection q is a new source
    """
    P: np.ndarray
    H0: np.ndarray
    H2: np.ndarray

    @property
    def track_observed(self):
        """Probability P_j that each track is observed by some detection."""
        return self.P.sum(axis=0)


@dataclass(frozen=True)
class TrackEstimate:
    """ Immutable snapshot of one track after a tracker step."""
    step: int
    time: float
    track_id: int
    direction: np.ndarray
    delayed_direction: np.ndarray
    existence: float
    activity: float
    confirmed: bool


def predict(track, delta_t, rng):
    """ Propagate particles with the damped stochastic excitation model.

    The velocity is updated as v <- a v + b F with a = exp(-alpha dt),
    b = beta sqrt(1 - a^2) and F standard normal; positions move by dt v, are
    pushed back to the unit sphere, and velocities are projected onto its
    tangent plane.

    Parameters
    ----------
    track : SourceTrack
        track, updated in place
    delta_t : float
        time step [s]
    rng : numpy.random.Generator
        noise source
    """
    if delta_t <= 0:
        raise ValueError('delta_t must be positive')
    alpha = REGIMES[track.regimes, 0][:, np.newaxis]
    beta = REGIMES[track.regimes, 1][:, np.newaxis]
    a = np.exp(-alpha*delta_t)
    b = beta*np.sqrt(1. - a**2)
    excitation = rng.standard_normal(track.velocities.shape)
    track.velocities = a*track.velocities + b*excitation
    track.positions = utils.normalize(track.positions + delta_t*track.velocities)
    radial = np.sum(track.velocities*track.positions, axis=1, keepdims=True)
    track.velocities = track.velocities - radial*track.positions


def observation_likelihood(x, y, sigma=0.05):
    """ Isotropic Gaussian density of observing `y` from position `x`.

    Parameters
    ----------
    x : array
        particle position(s), shape (..., 3)
    y : array
        observed direction(s), shape (..., 3)
    sigma : float
        standard deviation per coordinate

    Returns
    -------
    density : array
        N(y; x, sigma^2 I) evaluated in three dimensions

    Example
    -------
    >>> x = np.array([1., 0., 0.])
    >>> ratio = observation_likelihood(x, x + [0., .05, 0.])/observation_likelihood(x, x)
    >>> round(float(ratio), 4)
    0.6065
    """
    d2 = np.sum((np.asarray(x) - np.asarray(y))**2, axis=-1)
    return (2.*np.pi*sigma**2)**-1.5*np.exp(-d2/(2.*sigma**2))


@lru_cache(maxsize=None)
def _assignments(nObs, nTracks):
    """All injective maps of nObs detections to {-2, -1, 0..nTracks-1}."""
    rows = [f for f in itertools.product(range(-2, nTracks), repeat=nObs)
            if len([j for j in f if j >= 0]) == len({j for j in f if j >= 0})]
    return np.array(rows, dtype=int).reshape(-1, nObs)


def assignment_posteriors(probabilities, likelihoods, existence, activity,
                          p_false=0.05, p_new=0.005):
    """ Posterior probabilities of associating detections with tracks.

    Every injective assignment f of the Q detections to a false alarm (-2), a
    new source (-1) or one of the M tracks is scored with the product over q
    of the observation density and the prior of f(q):

    ======  =====================================  ===================
    f(q)    prior                                  density
    ======  =====================================  ===================
    -2      (1 - P_q) p_false                      1/(4 pi)
    -1      P_q p_new                              1/(4 pi)
    j       P_q P(E_j) P(A_j)                      p(O_q | track j)
    ======  =====================================  ===================

    Parameters
    ----------
    probabilities : array
        confidence P_q of each detection, shape (Q,)
    likelihoods : array
        p(O_q | track j), shape (Q, M)
    existence : array
        prior existence probability of each track, shape (M,)
    activity : array
        prior activity probability of each track, shape (M,)

    Returns
    -------
    assignment : AssignmentDistribution
        marginals that sum to one per detection
    """
    probabilities = np.asarray(probabilities, dtype=float)
    nObs = len(probabilities)
    nTracks = len(existence)
    likelihoods = np.asarray(likelihoods, dtype=float).reshape(nObs, nTracks)
    if nObs > MAX_OBSERVATIONS or nTracks > MAX_TRACKS:
        raise ValueError('assignment of {} detections to {} tracks exceeds the '
                         'limits of {} and {}'.format(nObs, nTracks,
                                                      MAX_OBSERVATIONS,
                                                      MAX_TRACKS))
    if nObs == 0:
        return AssignmentDistribution(np.zeros((0, nTracks)), np.zeros(0),
                                      np.zeros(0))

    terms = np.empty((nObs, nTracks + 2))
    terms[:, 0] = (1. - probabilities)*p_false*UNIFORM_DENSITY
    terms[:, 1] = probabilities*p_new*UNIFORM_DENSITY
    terms[:, 2:] = (probabilities[:, np.newaxis]
                    * (np.asarray(existence)*np.asarray(activity))[np.newaxis, :]
                    * likelihoods)

    table = _assignments(nObs, nTracks)
    scores = np.prod(terms[np.arange(nObs), table + 2], axis=1)
    total = scores.sum()
    if total <= 0:
        # nothing explains the detections; treat them as false alarms
        posterior = (table == -2).all(axis=1).astype(float)
    else:
        posterior = scores/total

    P = np.zeros((nObs, nTracks))
    H0 = np.zeros(nObs)
    H2 = np.zeros(nObs)
    for q in range(nObs):
        H0[q] = posterior[table[:, q] == -2].sum()
        H2[q] = posterior[table[:, q] == -1].sum()
        P[q] = np.bincount(np.maximum(table[:, q], 0),
                           weights=posterior*(table[:, q] >= 0),
                           minlength=nTracks)[:nTracks]
    return AssignmentDistribution(P, H0, H2)


def update_existence(track, observed, p_unobserved=0.2, confirm_threshold=0.98):
    """ Update the probability that a track's source exists.

    P(E) <- P_j + (1 - P_j) P_o P(E) / (1 - (1 - P_o) P(E)), where P_j is the
    probability that the track was observed and P_o the prior probability
    that an existing source goes unobserved. A track whose existence reaches
    `confirm_threshold` is confirmed; its existence is then fixed at one.

    Example
    -------
    >>> track = new_track(0, [1., 0., 0.], np.random.default_rng(0), 10)
    >>> round(update_existence(track, 0.), 6)
    0.166667
    """
    if track.confirmed:
        return track.existence
    prior = track.existence
    unobserved = p_unobserved*prior/(1. - (1. - p_unobserved)*prior)
    track.existence = float(observed + (1. - observed)*unobserved)
    if track.existence >= confirm_threshold:
        track.existence = 1.
        track.confirmed = True
    return track.existence


def activity_prior(activity, p_stay=0.95, p_become=0.05):
    """Activity probability propagated one step through the Markov chain."""
    return p_stay*activity + p_become*(1. - activity)


def activity_evidence(observed):
    """Instantaneous activity evidence of a track, taken as P_j."""
    return observed


def update_activity(track, evidence, p_stay=0.95, p_become=0.05):
    """ Fuse the temporal activity prior with instantaneous evidence.

    Parameters
    ----------
    track : SourceTrack
        track, updated in place
    evidence : float
        instantaneous probability that the source is active

    Returns
    -------
    activity : float
        posterior activity probability
    """
    prior = activity_prior(track.activity, p_stay, p_become)
    num = prior*evidence
    den = num + (1. - prior)*(1. - evidence)
    track.activity = float(num/den) if den > 0 else float(prior)
    return track.activity


def update_weights(track, observations, assignment_column, observed, sigma=0.05,
                   likelihoods=None):
    """ Update particle weights with the detections assigned to a track.

    w_i <- w_i [(1 - P_j)/Np + P_j s_i/sum(s)] with
    s_i = sum_q P_qj p(O_q | x_i), followed by normalisation.

    Parameters
    ----------
    track : SourceTrack
        track, updated in place
    observations : array
        detected directions, shape (Q, 3)
    assignment_column : array
        P_qj for this track, shape (Q,)
    observed : float
        P_j, the sum of `assignment_column`
    likelihoods : array, optional
        precomputed p(O_q | x_i), shape (Q, Np)

    Returns
    -------
    degenerate : bool
        True when all particle likelihoods vanished and the weights were kept
    """
    track.degenerate = False
    if observed <= 0 or len(observations) == 0:
        return False
    if likelihoods is None:
        likelihoods = observation_likelihood(
            track.positions[np.newaxis], np.asarray(observations)[:, np.newaxis],
            sigma)
    support = np.asarray(assignment_column)@likelihoods
    total = support.sum()
    if not total > 0:
        track.degenerate = True
        warnings.warn('track {}: all particle likelihoods vanished, weights '
                      'kept'.format(track.track_id), MicArrayWarning)
        return True
    instant = (1. - observed)/track.n_particles + observed*support/total
    weights = track.weights*instant
    track.weights = weights/weights.sum()
    return False


def estimate_position(track, delay_steps=0):
    """ Weighted mean particle position, optionally delayed.

    The delayed estimate combines current weights with particle positions
    `delay_steps` steps ago. With a shorter history the oldest available
    positions are used.

    Returns
    -------
    direction : array
        unit vector
    """
    if delay_steps <= 0 or not track.history:
        positions = track.positions
    else:
        index = max(0, len(track.history) - 1 - int(delay_steps))
        positions = track.history[index]
    return utils.normalize(track.weights@positions)


def effective_sample_size(weights):
    """ Effective number of particles 1/sum(w^2).

    Example
    -------
    >>> float(effective_sample_size([0.5, 0.5, 0., 0.]))
    2.0
    """
    return 1./np.sum(np.square(weights))


def _sample_regimes(rng, n, probabilities=REGIME_PROBABILITIES):
    p = np.asarray(probabilities, dtype=float)
    return rng.choice(len(REGIMES), size=n, p=p/p.sum())


def resample(track, rng, fraction=0.7, regime_probabilities=REGIME_PROBABILITIES):
    """ Systematic resampling when the effective sample size is low.

    Resampling happens only when N_eff < `fraction` Np. Selected particles
    are copied with their velocity and history, draw a new motion regime and
    get uniform weights.

    Returns
    -------
    resampled : bool
        whether resampling took place
    """
    nParticles = track.n_particles
    if effective_sample_size(track.weights) >= fraction*nParticles:
        return False
    points = (rng.random() + np.arange(nParticles))/nParticles
    cumulative = np.cumsum(track.weights)
    cumulative[-1] = 1.
    index = np.minimum(np.searchsorted(cumulative, points, side='right'),
                       nParticles - 1)
    track.positions = track.positions[index]
    track.velocities = track.velocities[index]
    track.regimes = _sample_regimes(rng, nParticles, regime_probabilities)
    track.weights = np.full(nParticles, 1./nParticles)
    track.history = deque((h[index] for h in track.history),
                          maxlen=track.history.maxlen)
    return True


def new_track(track_id, direction, rng, n_particles=1000, sigma=0.05,
              history_length=1, existence=0.5,
              regime_probabilities=REGIME_PROBABILITIES):
    """ Seed a track around a detected direction.

    Particles are drawn from a Gaussian of width `sigma` around `direction`
    and normalised; velocities start at zero.
    """
    direction = utils.normalize(direction)
    positions = utils.normalize(direction
                                + sigma*rng.standard_normal((n_particles, 3)))
    return SourceTrack(track_id, positions, np.zeros((n_particles, 3)),
                       _sample_regimes(rng, n_particles, regime_probabilities),
                       history_length, existence)


def manage_sources(tracker, assignment, observations):
    """ Create tracks for new sources and delete unobserved ones.

    A detection whose new-source probability exceeds the birth threshold
    starts a track unless a live track lies within the exclusion distance.
    A track is deleted once it has stayed below the observation threshold
    for longer than the death time.

    Parameters
    ----------
    tracker : Tracker
        tracker, updated in place
    assignment : AssignmentDistribution
        association of this step
    observations : array
        detected directions, shape (Q, 3)

    Returns
    -------
    born : list of SourceTrack
    died : list of SourceTrack
    """
    died = []
    observed = assignment.track_observed
    for track, P_j in zip(list(tracker.tracks), observed):
        if P_j < tracker.observed_threshold:
            track.unobserved_steps += 1
        else:
            track.unobserved_steps = 0
        if track.unobserved_steps > tracker.death_steps:
            tracker.tracks.remove(track)
            died.append(track)
            log.debug('track {} removed'.format(track.track_id))

    born = []
    for q, y in enumerate(observations):
        if assignment.H2[q] <= tracker.birth_threshold:
            continue
        if len(tracker.tracks) >= tracker.max_tracks:
            break
        centres = [estimate_position(t) for t in tracker.tracks]
        if centres and np.min(np.linalg.norm(np.array(centres) - y, axis=1)) \
                < tracker.birth_exclusion:
            continue
        track = new_track(tracker.next_id, y, tracker.rng, tracker.n_particles,
                          tracker.sigma, tracker.delay_steps + 1,
                          tracker.initial_existence, tracker.regime_probabilities)
        tracker.next_id += 1
        tracker.tracks.append(track)
        born.append(track)
        log.debug('track {} born at azimuth {:.1f} deg'.format(
            track.track_id, float(utils.cart2sph(y)[0])))
    return born, died


class Tracker:
    """ Multi-source particle filter.

    Parameters
    ----------
    delta_t : float
        time between steps [s]
    seed : int
        seed of the random generator
    """

    def __init__(self, delta_t=0.04, seed=0, n_particles=1000, sigma=0.05,
                 delay=0.5, p_unobserved=0.2, p_new=0.005, p_false=0.05,
                 birth_threshold=0.3, confirm_threshold=0.98,
                 initial_existence=0.5, death_time=2., observed_threshold=0.5,
                 p_stay_active=0.95, p_become_active=0.05,
                 resample_fraction=0.7, max_tracks=MAX_TRACKS,
                 birth_exclusion=0.15,
                 regime_probabilities=REGIME_PROBABILITIES):
        self.delta_t = delta_t
        self.rng = np.random.default_rng(seed)
        self.n_particles = n_particles
        self.sigma = sigma
        self.delay = delay
        self.delay_steps = int(round(delay/delta_t))
        self.p_unobserved = p_unobserved
        self.p_new = p_new
        self.p_false = p_false
        self.birth_threshold = birth_threshold
        self.confirm_threshold = confirm_threshold
        self.initial_existence = initial_existence
        self.death_steps = int(round(death_time/delta_t))
        self.observed_threshold = observed_threshold
        self.p_stay_active = p_stay_active
        self.p_become_active = p_become_active
        self.resample_fraction = resample_fraction
        self.max_tracks = min(max_tracks, MAX_TRACKS)
        self.birth_exclusion = birth_exclusion
        self.regime_probabilities = tuple(regime_probabilities)
        self.tracks = []
        self.next_id = 0
        self.step_index = -1

    @classmethod
    def from_config(cls, cfg, delta_t=None):
        """ Create a tracker from a `~micarraytools.config.RunConfig`.

        The step defaults to the localisation block duration.
        """
        t = cfg.tracking
        if delta_t is None:
            delta_t = cfg.block_frames*cfg.hop/cfg.array.sample_rate
        return cls(delta_t, cfg.seed, t.particles, t.sigma, t.delay,
                   t.p_unobserved, t.p_new, t.p_false, t.birth_threshold,
                   t.confirm_threshold, t.initial_existence, t.death_time,
                   t.observed_threshold, t.p_stay_active, t.p_become_active,
                   t.resample_fraction, t.max_tracks, t.birth_exclusion,
                   (t.regime_stationary, t.regime_velocity,
                    t.regime_accelerated))

    def step(self, sources, time=None):
        """ Advance the tracker by one step.

        Parameters
        ----------
        sources : list of PotentialSource
            detections of this step
        time : float, optional
            time stamp of the step [s]

        Returns
        -------
        estimates : list of TrackEstimate
            snapshots of all live tracks after the step
        """
        self.step_index += 1
        if time is None:
            time = self.step_index*self.delta_t
        observations = np.array([s.direction for s in sources]).reshape(-1, 3)
        probabilities = np.array([s.probability for s in sources])

        for track in self.tracks:
            predict(track, self.delta_t, self.rng)

        particleLik = [observation_likelihood(track.positions[np.newaxis],
                                              observations[:, np.newaxis],
                                              self.sigma)
                       for track in self.tracks]
        trackLik = np.array([lik@track.weights
                             for lik, track in zip(particleLik, self.tracks)])
        trackLik = trackLik.T.reshape(len(sources), len(self.tracks))
        existence = np.array([t.existence for t in self.tracks])
        activity = np.array([activity_prior(t.activity, self.p_stay_active,
                                            self.p_become_active)
                             for t in self.tracks])
        assignment = assignment_posteriors(probabilities, trackLik, existence,
                                           activity, self.p_false, self.p_new)
        observed = assignment.track_observed

        for j, track in enumerate(self.tracks):
            update_weights(track, observations, assignment.P[:, j], observed[j],
                           self.sigma, particleLik[j])
            update_existence(track, observed[j], self.p_unobserved,
                             self.confirm_threshold)
            update_activity(track, activity_evidence(observed[j]),
                            self.p_stay_active, self.p_become_active)

        manage_sources(self, assignment, observations)

        estimates = []
        for track in self.tracks:
            track.history.append(track.positions)
            track.age += 1
            estimates.append(TrackEstimate(
                self.step_index, time, track.track_id,
                estimate_position(track),
                estimate_position(track, self.delay_steps),
                track.existence, track.activity, track.confirmed))
            resample(track, self.rng, self.resample_fraction,
                     self.regime_probabilities)
        return estimates

    def run(self, detections):
        """ Track a sequence of localisation results.

        Parameters
        ----------
        detections : list of Detection
            output of `~micarraytools.localization.Localizer.run`

        Returns
        -------
        estimates : list of list of TrackEstimate
            snapshots per step
        """
        out = [self.step(d.sources, d.time) for d in detections]
        log.info('Tracked {} steps, {} tracks confirmed'.format(
            len(out), len({e.track_id for step in out for e in step
                           if e.confirmed})))
        return out
