import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose

from .. import utils
from ..exceptions import MicArrayWarning
from ..localization import PotentialSource
from ..tracking import (Tracker, activity_prior, assignment_posteriors,
                        effective_sample_size, estimate_position, new_track,
                        predict, resample, update_activity, update_existence,
                        update_weights)


def detections_at(direction, rng, probability=0.9, jitter=0.01):
    """One true detection near `direction` and one weak random one."""
    true = utils.normalize(direction + jitter*rng.standard_normal(3))
    false = utils.normalize(rng.standard_normal(3))
    return [PotentialSource(true, 1e4, probability, 0),
            PotentialSource(false, 10., 0.3, 1)]


def test_predict_stays_on_sphere(rng):
    track = new_track(0, [0., 1., 0.], rng, 500)
    for _ in range(20):
        predict(track, 0.04, rng)
    assert_allclose(np.linalg.norm(track.positions, axis=1), 1.)
    radial = np.sum(track.positions*track.velocities, axis=1)
    assert_allclose(radial, 0., atol=1e-12)
    with pytest.raises(ValueError):
        predict(track, 0., rng)


def test_assignment_without_tracks():
    a = assignment_posteriors([0.9], np.zeros((1, 0)), [], [])
    assert a.P.shape == (1, 0)
    assert_allclose(a.H0 + a.H2, 1.)
    assert_allclose(a.H2, 0.9*0.005/(0.9*0.005 + 0.1*0.05))


def test_assignment_marginals(rng):
    likelihoods = rng.random((3, 2))*100.
    a = assignment_posteriors([0.9, 0.3, 0.16], likelihoods, [0.8, 0.5],
                              [0.9, 0.4])
    assert_allclose(a.P.sum(axis=1) + a.H0 + a.H2, 1.)
    # a track explains at most one detection
    assert np.all(a.track_observed <= 1. + 1e-12)
    assert np.all(a.P >= 0.)


def enumerate_posteriors(probabilities, likelihoods, existence, activity,
                         p_false, p_new):
    """Marginals of the association by listing every injective assignment."""
    nObs, nTracks = likelihoods.shape
    density = 1./(4.*np.pi)
    P = np.zeros((nObs, nTracks))
    H0 = np.zeros(nObs)
    H2 = np.zeros(nObs)
    total = 0.
    for f in itertools.product(['false', 'new'] + list(range(nTracks)),
                               repeat=nObs):
        tracks = [j for j in f if j not in ('false', 'new')]
        if len(tracks) != len(set(tracks)):
            continue
        score = 1.
        for q, j in enumerate(f):
            if j == 'false':
                score *= (1. - probabilities[q])*p_false*density
            elif j == 'new':
                score *= probabilities[q]*p_new*density
            else:
                score *= (probabilities[q]*existence[j]*activity[j]
                          * likelihoods[q, j])
        total += score
        for q, j in enumerate(f):
            if j == 'false':
                H0[q] += score
            elif j == 'new':
                H2[q] += score
            else:
                P[q, j] += score
    return P/total, H0/total, H2/total


@pytest.mark.parametrize(('nObs', 'nTracks'),
                         [(1, 0), (1, 1), (1, 2), (2, 0), (2, 1), (2, 2)])
def test_assignment_matches_enumeration(nObs, nTracks, rng):
    for _ in range(50):
        probabilities = rng.random(nObs)
        likelihoods = rng.random((nObs, nTracks))*10.**rng.uniform(-2, 3)
        existence = rng.random(nTracks)
        activity = rng.random(nTracks)
        p_false, p_new = rng.uniform(0.01, 0.2), rng.uniform(0.001, 0.05)
        a = assignment_posteriors(probabilities, likelihoods, existence,
                                  activity, p_false, p_new)
        P, H0, H2 = enumerate_posteriors(probabilities, likelihoods, existence,
                                         activity, p_false, p_new)
        assert_allclose(a.P, P, rtol=0, atol=1e-12)
        assert_allclose(a.H0, H0, rtol=0, atol=1e-12)
        assert_allclose(a.H2, H2, rtol=0, atol=1e-12)


def test_assignment_prefers_likely_track():
    a = assignment_posteriors([0.9], [[500., 1e-6]], [1., 1.], [1., 1.])
    assert a.P[0, 0] > 0.99
    assert a.P[0, 1] < 1e-6


def test_assignment_limits():
    with pytest.raises(ValueError):
        assignment_posteriors(np.full(5, 0.5), np.ones((5, 1)), [1.], [1.])


def test_existence_and_confirmation(rng):
    track = new_track(0, [1., 0., 0.], rng, 10)
    assert_allclose(update_existence(track, 0.), 0.2*0.5/(1. - 0.8*0.5))
    assert not track.confirmed
    update_existence(track, 1.)
    assert track.confirmed
    assert track.existence == 1.
    # confirmed tracks keep their existence
    assert update_existence(track, 0.) == 1.


def test_activity(rng):
    assert_allclose(activity_prior(1.), 0.95)
    assert_allclose(activity_prior(0.), 0.05)
    track = new_track(0, [1., 0., 0.], rng, 10)
    prior = activity_prior(0.5)
    post = update_activity(track, 0.8)
    assert_allclose(post, prior*0.8/(prior*0.8 + (1. - prior)*0.2))


def test_weights_and_resampling(rng):
    track = new_track(0, [1., 0., 0.], rng, 200, sigma=0.1)
    target = utils.normalize([1., 0.1, 0.])
    update_weights(track, target[np.newaxis], [1.], 1.)
    assert_allclose(track.weights.sum(), 1.)
    assert effective_sample_size(track.weights) < 200
    # the weighted estimate moves towards the observation
    assert (utils.angular_distance(estimate_position(track), target)
            < utils.angular_distance([1., 0., 0.], target))

    track.weights = np.zeros(200)
    track.weights[7] = 1.
    assert resample(track, rng)
    assert_allclose(track.positions, track.positions[7][np.newaxis])
    assert_allclose(track.weights, 1./200)
    assert not resample(track, rng)


def test_vanished_likelihoods_warn(rng):
    track = new_track(3, [1., 0., 0.], rng, 50)
    before = track.weights.copy()
    with pytest.warns(MicArrayWarning):
        assert update_weights(track, np.array([[-1., 0., 0.]]), [1.], 1.,
                              sigma=0.001)
    assert track.degenerate
    assert_allclose(track.weights, before)


def test_tracker_confirms_and_removes(rng):
    tracker = Tracker(delta_t=0.04, seed=3, n_particles=200)
    u = utils.sph2cart(30., 0.)
    for _ in range(40):
        estimates = tracker.step(detections_at(u, rng))
    assert len(estimates) == 1
    estimate = estimates[0]
    assert estimate.confirmed
    assert estimate.activity > 0.9
    assert utils.angular_distance(estimate.direction, u) < 5.
    assert utils.angular_distance(estimate.delayed_direction, u) < 5.

    # the source falls silent; the track is dropped after the death time
    for step in range(tracker.death_steps):
        estimates = tracker.step([])
    assert len(estimates) == 1
    assert estimates[0].activity < 0.1
    assert tracker.step([]) == []


def test_tracker_follows_moving_source(rng):
    tracker = Tracker(delta_t=0.04, seed=5, n_particles=500)
    errors = []
    for step in range(100):
        u = utils.sph2cart(0.2*step, 0.)
        estimates = tracker.step(detections_at(u, rng), time=0.04*step)
        if step > 20:
            errors.append(utils.angular_distance(estimates[0].direction, u))
    assert estimates[0].time == pytest.approx(3.96)
    assert len({e.track_id for e in estimates}) == 1
    assert np.max(errors) < 8.


def test_tracker_is_reproducible():
    runs = []
    for _ in range(2):
        tracker = Tracker(seed=11, n_particles=100)
        rng = np.random.default_rng(0)
        out = [tracker.step(detections_at(utils.sph2cart(-45., 20.), rng))
               for _ in range(10)]
        runs.append(np.array([e.direction for step in out for e in step]))
    assert_allclose(runs[0], runs[1])


def test_from_config(cfg):
    tracker = Tracker.from_config(cfg)
    assert_allclose(tracker.delta_t, 4*512/48000.)
    assert tracker.n_particles == 1000
    assert tracker.delay_steps == int(round(0.5/tracker.delta_t))
