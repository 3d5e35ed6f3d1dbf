""" Processing stages of the audition chain.

Each stage consumes and produces the artifacts described in
`~micarraytools.output.RunArtifacts`, so that a run can be restarted from
any intermediate file.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np
from astropy import log
from scipy.optimize import linear_sum_assignment

from . import metrics, output
from .audio_stft import (MultichannelBuffer, istft_synthesize, stft_analyze,
                         write_wav)
from .exceptions import (ConfigurationError, DimensionError, EvaluationError,
                         MicArrayError, MicArrayWarning)
from .features_mft import compute_mask, decimate, mel_energies, mel_features
from .localization import Localizer, NoiseWeightState, mcra_update
from .postfilter import PostFilter
from .separation import GeometricSeparator
from .simulator import synthesize_scene
from .tracking import Tracker

__all__ = ['run_simulation', 'run_localization', 'track_schedule',
           'SeparationResult', 'run_separation', 'write_separation',
           'run_featurize', 'silence_segments', 'best_mic_snr',
           'run_evaluation']


def _check_input(buf, cfg):
    if buf.sample_rate != cfg.array.sample_rate:
        raise ConfigurationError('recording sampled at {} Hz, configuration '
                                 'expects {} Hz'.format(buf.sample_rate,
                                                        cfg.array.sample_rate))
    if buf.channel_count != cfg.n_mics:
        raise DimensionError('{} channels for {} microphones'.format(
            buf.channel_count, cfg.n_mics))


def run_simulation(spec, seed, directory):
    """ Synthesise a scene and write its files.

    Writes ``mixture.wav``, ``source_<i>.wav``, ``stem_<i>.wav`` (float32)
    and ``truth.csv`` to `directory`.

    Parameters
    ----------
    spec : SceneSpec
        scene description
    seed : int or None
        synthesis seed; ``spec.seed`` if None
    directory : str
        output directory, created if missing

    Returns
    -------
    artifacts : RunArtifacts
        the written files
    """
    mixture, truth = synthesize_scene(spec, seed)
    run = output.RunArtifacts(directory).makedirs()
    write_wav(run.path(run.MIXTURE), mixture, 'float32')
    for i in range(truth.n_sources):
        write_wav(run.path('source', i),
                  MultichannelBuffer(truth.signals[i], truth.sample_rate),
                  'float32')
        write_wav(run.path('stem', i), truth.stem_buffer(i), 'float32')
    output.write_truth(run.path(run.TRUTH), truth)
    log.info('Wrote scene with {} sources to {}'.format(truth.n_sources,
                                                        directory))
    return run


def run_localization(mixture, cfg, grid=None):
    """ Localise and track the sources of a recording.

    Parameters
    ----------
    mixture : MultichannelBuffer
        microphone signals
    cfg : RunConfig
        run configuration
    grid : SphericalGrid, optional
        precomputed search grid

    Returns
    -------
    detections : list of Detection
        potential sources of every block
    estimates : list of list of TrackEstimate
        tracker snapshots of every block
    """
    _check_input(mixture, cfg)
    frames = stft_analyze(mixture, cfg.stft.frame_length)
    localizer = Localizer.from_config(cfg, grid)
    detections = localizer.run(frames)
    tracker = Tracker.from_config(cfg, localizer.block_duration)
    return detections, tracker.run(detections)


def track_schedule(tracks, block_frames, n_frames):
    """ Live confirmed sources for every STFT frame.

    The estimates of tracker step s become available at the end of block s
    and steer frames of block s+1.

    Parameters
    ----------
    tracks : DataFrame
        tracks table as written by `~micarraytools.output.write_tracks`
    block_frames : int
        frames per tracker step
    n_frames : int
        number of frames of the recording

    Returns
    -------
    schedule : list of list
        per frame (track_id, direction, activity) tuples
    """
    schedule = [[] for _ in range(n_frames)]
    confirmed = tracks[tracks['confirmed'].astype(bool)]
    for step, rows in confirmed.groupby('step'):
        sources = [(int(r.track_id), np.array([r.x, r.y, r.z]), r.activity)
                   for r in rows.itertuples(index=False)]
        start = (int(step) + 1)*block_frames
        for l in range(start, min(start + block_frames, n_frames)):
            schedule[l] = sources
    return schedule


@dataclass
class SeparationResult:
    """ Output of `run_separation`.

    Parameters
    ----------
    separated : dict
        signal of each separated track id
    references : dict
        per track id the GSS-filtered stems {source index: signal}
    diagnostics : dict
        post-filter diagnostics, empty without post-filter
    W : array
        final demixing matrices
    source_ids : list
        track ids of the rows of `W`
    n_frames : int
        number of STFT frames
    estimates : list
        tracker snapshots when tracking ran live
    """
    separated: dict
    references: dict
    diagnostics: dict
    W: np.ndarray
    source_ids: list
    n_frames: int
    estimates: list = field(default_factory=list)


def run_separation(mixture, cfg, tracks=None, live=False, postfilter=True,
                   single_source=False, delay_and_sum=False, reverb=None,
                   stems=None):
    """ Separate the tracked sources of a recording.

    Parameters
    ----------
    mixture : MultichannelBuffer
        microphone signals
    cfg : RunConfig
        run configuration
    tracks : DataFrame, optional
        tracks table; required unless `live`
    live : bool
        localise and track while separating
    postfilter : bool
        apply the post-filter after the separation
    single_source : bool
        post-filter without the leakage term
    delay_and_sum : bool
        keep the initial delay-and-sum demixing
    reverb : bool, optional
        override of the reverberation term of the post-filter
    stems : array, optional
        clean images (M, N, n) filtered alongside the mixture to give
        reference signals

    Returns
    -------
    result : SeparationResult
        separated signals, references and diagnostics
    """
    if tracks is None and not live:
        raise ConfigurationError('no tracks given and live tracking not '
                                 'requested')
    _check_input(mixture, cfg)
    fs = cfg.array.sample_rate
    frames = stft_analyze(mixture, cfg.stft.frame_length)
    nFrames, nBins = frames.n_frames, frames.n_bins

    stemFrames = []
    if stems is not None:
        stems = np.asarray(stems, dtype=float)
        if stems.ndim != 3 or stems.shape[1:] != mixture.samples.shape:
            raise DimensionError('stems of shape {} for a mixture of shape {}'
                                 .format(stems.shape, mixture.samples.shape))
        stemFrames = [stft_analyze(MultichannelBuffer(s, fs),
                                   cfg.stft.frame_length).frames
                      for s in stems]

    separator = GeometricSeparator.from_config(cfg, frozen=delay_and_sum)
    pf = PostFilter.from_config(cfg, leak=False if single_source else None,
                                reverb=reverb) if postfilter else None
    loc = cfg.localization
    micNoise = NoiseWeightState.create(
        cfg.n_mics, nBins, fs, cfg.hop, loc.mcra_window, loc.mcra_alpha_s,
        loc.mcra_alpha_d, loc.mcra_alpha_p, loc.mcra_delta)

    if live:
        localizer = Localizer.from_config(cfg)
        tracker = Tracker.from_config(cfg, localizer.block_duration)
        schedule = None
    else:
        schedule = track_schedule(tracks, cfg.block_frames, nFrames)
    estimates = []
    current = []

    spectra, references = {}, {}
    for l in range(nFrames):
        x = frames.frames[:, l, :]
        noise = mcra_update(micNoise, np.abs(x)**2)
        if schedule is not None:
            current = schedule[l]
        separator.set_sources(current)
        ids = separator.source_ids
        y, filtered = separator.process_frame(x, [s[:, l, :]
                                                  for s in stemFrames])
        if pf is not None:
            pf.sync(ids, noise)
            y = pf.process_frame(y)
        for m, sid in enumerate(ids):
            spectra.setdefault(sid, np.zeros((nFrames, nBins), dtype=complex))
            spectra[sid][l] = y[m]
            if stemFrames:
                references.setdefault(sid, np.zeros(
                    (len(stemFrames), nFrames, nBins), dtype=complex))
                for i, f in enumerate(filtered):
                    references[sid][i, l] = f[m]

        if live:
            detection = localizer.process_frame(x)
            if detection is not None:
                step = tracker.step(detection.sources, detection.time)
                estimates.append(step)
                current = [(e.track_id, e.direction, e.activity)
                           for e in step if e.confirmed]

    def synthesize(spec):
        return istft_synthesize(frames.replace(spec[np.newaxis])).samples[0]

    separated = {sid: synthesize(spec) for sid, spec in sorted(spectra.items())}
    refs = {sid: {i: synthesize(spec[i]) for i in range(len(spec))}
            for sid, spec in sorted(references.items())}
    log.info('Separated {} sources over {} frames'.format(len(separated),
                                                          nFrames))
    return SeparationResult(separated, refs,
                            pf.diagnostic_arrays() if pf is not None else {},
                            separator.state.W, separator.source_ids, nFrames,
                            estimates)


def write_separation(result, cfg, directory):
    """ Write separated signals, references, diagnostics and W."""
    run = output.RunArtifacts(directory).makedirs()
    fs = cfg.array.sample_rate
    for sid, sig in result.separated.items():
        write_wav(run.path('separated', sid), MultichannelBuffer(sig, fs),
                  'float32')
    for sid, refs in result.references.items():
        for i, sig in refs.items():
            write_wav(run.path('reference', sid, i),
                      MultichannelBuffer(sig, fs), 'float32')
    output.write_diagnostics(run.path(run.DIAGNOSTICS), result.diagnostics,
                             fs, cfg.stft.frame_length, result.n_frames)
    output.write_demixing(run.path(run.DEMIXING), result.W, result.source_ids)
    if result.estimates:
        output.write_tracks(run.path(run.TRACKS), result.estimates)
    return run


def run_featurize(separated, diagnostics, attrs, cfg):
    """ Features and missing-feature masks of one separated source.

    Parameters
    ----------
    separated : array
        separated signal at the array sampling rate
    diagnostics : dict
        post-filter diagnostics of this source
    attrs : dict
        sample_rate, frame_length and n_frames of the diagnostics
    cfg : RunConfig
        run configuration

    Returns
    -------
    features : MelFeatureSet
        smoothed log-Mel features and deltas
    mask : FeatureMask
        reliability of every feature
    """
    f = cfg.features
    fs = attrs['sample_rate']
    factor = fs/f.sample_rate
    if factor != int(factor):
        raise ConfigurationError('cannot decimate {} Hz to {} Hz'.format(
            fs, f.sample_rate))
    audio = decimate(separated, int(factor))
    features = mel_features(audio, f.sample_rate, f.window, f.hop, f.n_fft,
                            f.n_mels, f.n_ceps, f.delta_window)

    L = attrs['frame_length']
    energies = {}
    for name in ('Y_power', 'S_power', 'lambda_stat'):
        if name not in diagnostics:
            raise MicArrayError('diagnostics lack {}'.format(name))
        full = np.zeros((attrs['n_frames'], L//2 + 1))
        full[diagnostics['frame']] = diagnostics[name]
        energies[name] = mel_energies(full, fs, L, len(features),
                                      f.sample_rate, f.hop, f.window, f.n_mels)
    mask = compute_mask(energies['Y_power'], energies['S_power'],
                        energies['lambda_stat'], f.mask_threshold,
                        f.delta_window)
    log.info('Featurised {} frames, {:.1%} reliable'.format(
        len(features), mask.binary.mean()))
    return features, mask


def silence_segments(truth, source_id, n_samples, sample_rate):
    """ Sample intervals in which a source is silent according to the truth
    table."""
    rows = truth[truth['source_id'] == source_id].sort_values('time_s')
    starts = np.round(rows['time_s'].to_numpy()*sample_rate).astype(int)
    stops = np.append(starts[1:], n_samples)
    return [(a, b) for a, b, act in zip(starts, stops, rows['active'])
            if not act]


def best_mic_snr(mixture, stem, sample_rate, band):
    """ Highest SNR of the source among the single microphones.

    Parameters
    ----------
    mixture : array
        microphone signals, shape (N, n)
    stem : array
        clean image of the source at every microphone, shape (N, n)
    """
    return max(metrics.snr(m, s, sample_rate, band)
               for m, s in zip(mixture, stem))


def run_evaluation(separated, mixture, stems, sources, truth, cfg,
                   references=None, reference=None):
    """ Evaluate separated signals against the scene ground truth.

    Separated tracks are matched to true sources by maximising the total
    SNR. References are either the stems filtered by the same demixing
    ('gss') or the dry source signals ('stem').

    Parameters
    ----------
    separated : dict
        signal of each track id
    mixture : array
        microphone signals, shape (N, n)
    stems : array
        clean images, shape (M, N, n)
    sources : array
        dry source signals, shape (M, n)
    truth : DataFrame
        ground-truth table
    cfg : RunConfig
        run configuration
    references : dict, optional
        GSS-filtered stems {track id: {source index: signal}}
    reference : {'gss', 'stem'}, optional
        reference mode; defaults to ``cfg.metrics.reference``

    Returns
    -------
    report : EvalReport
        per-source measures
    """
    m = cfg.metrics
    fs = cfg.array.sample_rate
    band = (m.band_low, m.band_high)
    reference = reference or m.reference
    mixture = np.asarray(mixture, dtype=float)
    nSources = len(sources)
    ids = sorted(separated)
    for sid in ids:
        if len(separated[sid]) != mixture.shape[1]:
            raise EvaluationError('separated signal {} has {} samples, the '
                                  'mixture {}'.format(sid, len(separated[sid]),
                                                      mixture.shape[1]))
    if reference == 'gss' and any(sid not in (references or {}) for sid in ids):
        raise EvaluationError('GSS references missing; separate with stems')

    def ref(sid, i):
        return references[sid][i] if reference == 'gss' else sources[i]

    scores = np.full((nSources, len(ids)), -np.inf)
    for i in range(nSources):
        for j, sid in enumerate(ids):
            scores[i, j] = metrics.snr(separated[sid], ref(sid, i), fs, band,
                                       m.cap_db)
    rows, cols = linear_sum_assignment(-scores) if ids else ([], [])

    snr = np.full(nSources, np.nan)
    lsd = np.full(nSources, np.nan)
    att = np.full(nSources, np.nan)
    for i, j in zip(rows, cols):
        sid = ids[j]
        snr[i] = scores[i, j]
        lsd[i] = metrics.lsd(separated[sid], ref(sid, i), fs,
                             cfg.stft.frame_length, band, m.lsd_eps_factor)
        try:
            att[i] = metrics.attenuation(
                separated[sid], mixture[0],
                silence_segments(truth, i, mixture.shape[1], fs), m.cap_db)
        except EvaluationError as e:
            warnings.warn('source {}: {}'.format(i, e), MicArrayWarning)
    inputSnr = [best_mic_snr(mixture, stems[i], fs, band)
                for i in range(nSources)]
    unmatched = nSources - len(rows)
    if unmatched:
        warnings.warn('{} sources without a separated track'.format(unmatched),
                      MicArrayWarning)
    return metrics.EvalReport(['source_{}'.format(i) for i in range(nSources)],
                              snr, lsd, att, inputSnr, band, reference)
