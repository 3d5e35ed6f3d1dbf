import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from .. import output, pipeline, utils
from ..audio_stft import MultichannelBuffer, frame_count
from ..cli import main
from ..config import load_config
from ..exceptions import (ConfigurationError, DimensionError, EvaluationError,
                          MicArrayError)
from ..simulator import (SceneSpec, SourceSpec, TrajectoryPoint,
                         standard_fixtures, synthesize_scene)

AZIMUTH = 30.


@pytest.fixture(scope='module')
def scene():
    mics = load_config().mic_positions
    spec = SceneSpec(mics, [SourceSpec(
        'chirp', [TrajectoryPoint.from_angles(0., AZIMUTH, 10.)])],
        duration=1.)
    return synthesize_scene(spec, seed=3)


def static_tracks(direction, n_steps, track_id=7):
    x, y, z = direction
    return pd.DataFrame({'step': np.arange(n_steps), 'track_id': track_id,
                         'x': x, 'y': y, 'z': z, 'activity': 1.,
                         'confirmed': 1})


def test_run_simulation(tmp_path, cfg):
    spec = SceneSpec(cfg.mic_positions, [SourceSpec(
        'chirp', [TrajectoryPoint.from_angles(0., -45.)])], duration=0.25)
    run = pipeline.run_simulation(spec, 5, str(tmp_path / 'scene'))
    assert run.source_indices() == [0]
    mixture = run.mixture()
    assert mixture.samples.shape == (8, 12000)
    assert mixture.sample_rate == 48000
    stems = run.stems()
    assert stems.shape == (1, 8, 12000)
    # float32 files keep the mixture equal to stems plus a small noise
    assert np.max(np.abs(mixture.samples - stems[0])) < 0.05
    truth = run.truth()
    assert_allclose(truth['azimuth_deg'], -45.)


def test_run_localization(scene, cfg, cube_grid):
    mixture, truth = scene
    detections, estimates = pipeline.run_localization(mixture, cfg, cube_grid)
    assert len(detections) == len(estimates)
    assert len(detections) == frame_count(48000, 1024)//cfg.block_frames
    u = truth.directions[0, 0]
    errors = [utils.angular_distance(d.sources[0].direction, u)
              for d in detections[2:] if d.sources]
    assert np.median(errors) < 10.


def test_input_checks(scene, cfg):
    mixture, _ = scene
    with pytest.raises(DimensionError):
        pipeline.run_localization(
            MultichannelBuffer(mixture.samples[:4], 48000), cfg)
    with pytest.raises(ConfigurationError):
        pipeline.run_localization(
            MultichannelBuffer(mixture.samples, 16000), cfg)
    with pytest.raises(ConfigurationError):
        pipeline.run_separation(mixture, cfg)


def test_track_schedule():
    tracks = pd.DataFrame({'step': [0, 0, 1, 2], 'track_id': [1, 2, 1, 1],
                           'x': 1., 'y': 0., 'z': 0., 'activity': 0.5,
                           'confirmed': [1, 0, 1, 1]})
    schedule = pipeline.track_schedule(tracks, 4, 14)
    assert len(schedule) == 14
    assert all(s == [] for s in schedule[:4])
    assert [len(s) for s in schedule[4:]] == [1]*10
    assert schedule[4][0][0] == 1
    assert_allclose(schedule[13][0][1], [1., 0., 0.])


def test_separation_against_references(scene, cfg):
    mixture, truth = scene
    tracks = static_tracks(truth.directions[0, 0], 30)
    result = pipeline.run_separation(mixture, cfg, tracks, postfilter=False,
                                     delay_and_sum=True, stems=truth.stems)
    assert list(result.separated) == [7]
    assert result.separated[7].shape == (mixture.n_samples,)
    assert list(result.references[7]) == [0]
    assert result.W.shape == (513, 1, 8)
    assert result.source_ids == [7]
    assert result.diagnostics == {}

    # the frozen beamformer is linear: output = filtered stem + filtered noise
    report = pipeline.run_evaluation(
        result.separated, mixture.samples, truth.stems, truth.signals,
        truth.to_dataframe(), cfg, result.references)
    assert report.names == ['source_0']
    assert report.snr_db[0] > 15.
    assert np.isfinite(report.lsd_db[0])

    with pytest.raises(DimensionError):
        pipeline.run_separation(mixture, cfg, tracks, stems=truth.stems[:, :4])


def test_evaluation_errors(scene, cfg):
    mixture, truth = scene
    separated = {0: mixture.samples[0]}
    with pytest.raises(EvaluationError):
        pipeline.run_evaluation(separated, mixture.samples, truth.stems,
                                truth.signals, truth.to_dataframe(), cfg,
                                reference='gss')
    with pytest.raises(EvaluationError):
        pipeline.run_evaluation({0: mixture.samples[0, :-1]}, mixture.samples,
                                truth.stems, truth.signals,
                                truth.to_dataframe(), cfg, reference='stem')


def test_postfilter_and_features(scene, cfg, tmp_path):
    mixture, truth = scene
    tracks = static_tracks(truth.directions[0, 0], 30, track_id=0)
    result = pipeline.run_separation(mixture, cfg, tracks)
    diagnostics = result.diagnostics[0]
    assert diagnostics['frame'][0] == cfg.block_frames
    assert diagnostics['gain'].shape == (result.n_frames - cfg.block_frames,
                                         513)

    run = pipeline.write_separation(result, cfg, str(tmp_path / 'run'))
    assert run.separated_ids() == [0]
    diagnostics, attrs = run.diagnostics()
    assert attrs['n_frames'] == result.n_frames
    W, ids = output.read_demixing(run.path(run.DEMIXING))
    assert ids == [0]

    features, mask = pipeline.run_featurize(result.separated[0],
                                            diagnostics[0], attrs, cfg)
    assert len(features) == 98
    assert mask.binary.shape == features.static.shape
    assert set(np.unique(mask.binary)) <= {0, 1}

    incomplete = {k: v for k, v in diagnostics[0].items() if k != 'S_power'}
    with pytest.raises(MicArrayError):
        pipeline.run_featurize(result.separated[0], incomplete, attrs, cfg)
    with pytest.raises(ConfigurationError):
        pipeline.run_featurize(result.separated[0], diagnostics[0],
                               dict(attrs, sample_rate=44100.), cfg)


def test_silence_segments():
    truth = pd.DataFrame({'time_s': [0., 0.1, 0.2, 0.3, 0.], 'source_id':
                          [0, 0, 0, 0, 1], 'active': [0, 1, 1, 0, 1]})
    assert pipeline.silence_segments(truth, 0, 4000, 10000.) == [
        (0, 1000), (3000, 4000)]
    assert pipeline.silence_segments(truth, 1, 4000, 10000.) == []


# Scenario tests on the packaged fixture scenes.

def block_span(detection, cfg):
    """Sample interval covered by the frames averaged in a detection."""
    first = detection.frame_index - cfg.block_frames + 1
    return first*cfg.hop, detection.frame_index*cfg.hop + cfg.stft.frame_length


def closest_track(step, direction):
    confirmed = [e for e in step if e.confirmed]
    if not confirmed:
        return None
    return min(confirmed, key=lambda e: utils.angular_distance(
        e.direction, direction)).track_id


@pytest.fixture(scope='module')
def three_static():
    spec = standard_fixtures(seed=1)['three-static']
    return synthesize_scene(spec)


@pytest.mark.slow
def test_three_static_detection(cfg, cube_grid):
    spec = standard_fixtures(seed=1)['three-static-reverb']
    mixture, truth = synthesize_scene(spec)
    detections, _ = pipeline.run_localization(mixture, cfg, cube_grid)
    hits = []
    for d in detections:
        start, stop = block_span(d, cfg)
        if not truth.activity[:, start:stop].all():
            continue
        hits.append(all(
            min(utils.angular_distance(s.direction, u) for s in d.sources) < 10.
            for u in truth.directions[:, 0]))
    assert len(hits) >= 5
    assert np.mean(hits) >= 0.9


@pytest.mark.slow
def test_crossing_sources_keep_identity(cfg, cube_grid):
    spec = standard_fixtures(seed=2)['two-crossing']
    mixture, truth = synthesize_scene(spec)
    _, estimates = pipeline.run_localization(mixture, cfg, cube_grid)

    block = cfg.block_frames*cfg.hop/cfg.array.sample_rate

    def owners(s):
        t = np.argmin(np.abs(truth.times - (s + 1)*block))
        return [closest_track(estimates[s], truth.directions[i, t])
                for i in range(2)]

    # sources are 60 degrees apart one second in
    early = owners(int(round(1./block)) - 1)
    assert None not in early
    assert early[0] != early[1]
    assert owners(len(estimates) - 1) == early


@pytest.mark.slow
def test_three_static_separation(three_static, cfg):
    mixture, truth = three_static
    nSteps = frame_count(mixture.n_samples, cfg.stft.frame_length)
    tracks = pd.concat([static_tracks(truth.directions[i, 0], nSteps,
                                      track_id=i) for i in range(3)],
                       ignore_index=True)
    reports = {}
    for single in (False, True):
        result = pipeline.run_separation(mixture, cfg, tracks,
                                         single_source=single,
                                         stems=truth.stems)
        assert sorted(result.separated) == [0, 1, 2]
        reports[single] = pipeline.run_evaluation(
            result.separated, mixture.samples, truth.stems, truth.signals,
            truth.to_dataframe(), cfg, result.references)
    full, baseline = reports[False], reports[True]
    assert np.mean(full.snr_gain_db) >= 8.
    assert np.mean(full.attenuation_db - baseline.attenuation_db) >= 5.


@pytest.mark.slow
def test_mask_keeps_noise_only_segments(cfg):
    spec = standard_fixtures(seed=3, duration=3.)['single-static']
    mixture, truth = synthesize_scene(spec)
    nSteps = frame_count(mixture.n_samples, cfg.stft.frame_length)
    tracks = static_tracks(truth.directions[0, 0], nSteps, track_id=0)
    result = pipeline.run_separation(mixture, cfg, tracks)
    attrs = {'sample_rate': cfg.array.sample_rate,
             'frame_length': cfg.stft.frame_length,
             'n_frames': result.n_frames}
    _, mask = pipeline.run_featurize(result.separated[0],
                                     result.diagnostics[0], attrs, cfg)

    # Mel frames lying inside pauses of the source, away from its edges
    f = cfg.features
    factor = int(cfg.array.sample_rate/f.sample_rate)
    margin = 2*cfg.stft.frame_length
    starts = np.arange(len(mask.binary))*f.hop*factor
    stops = starts + f.window*factor
    inside = np.zeros(len(mask.binary), dtype=bool)
    for start, stop in truth.silence_segments(0):
        if start == 0:
            continue
        inside |= (starts >= start + margin) & (stops <= stop - margin)
    assert inside.sum() >= 3
    assert mask.binary[inside].mean() >= 0.95


@pytest.mark.slow
def test_runs_are_bit_identical(tmp_path):
    outputs = []
    for run in ('a', 'b'):
        root = tmp_path / run
        scene = str(root / 'scene')
        assert main(['--seed', '9', 'simulate', '--fixture', 'two-crossing',
                     '--duration', '1.5', '--out', scene]) == 0
        mixture = str(root / 'scene' / 'mixture.wav')
        assert main(['localize', mixture, '--out', str(root / 'loc')]) == 0
        tracks = output.RunArtifacts(str(root / 'loc'))
        assert main(['separate', mixture, '--tracks',
                     tracks.path(tracks.TRACKS), '--out', str(root / 'sep'),
                     '--stems', scene]) == 0
        outputs.append({p.relative_to(root): p.read_bytes()
                        for p in sorted(root.rglob('*'))
                        if p.suffix in ('.csv', '.wav')})
    assert len(outputs[0]) > 5
    assert outputs[0] == outputs[1]
