""" Synthetic array recordings with exact ground truth.

Sources are rendered to every microphone with (fractional) propagation
delays that follow piecewise-linear trajectories, optionally followed by an
exponentially decaying incoherent reverberation tail. Independent coloured
noise is added per microphone. The clean image of each source at each
microphone (its stem) is returned with the mixture, so that

    mixture = sum of stems + noise

holds sample by sample.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from astropy import log
from astropy.extern.configobj import configobj
from scipy import fft as sfft
from scipy import signal

from . import utils
from .audio_stft import MultichannelBuffer, read_wav
from .exceptions import AudioFileError, ConfigurationError, MicArrayWarning
from .separation import steering_delays

__all__ = ['TrajectoryPoint', 'SourceSpec', 'SceneSpec', 'GroundTruth',
           'GENERATORS', 'speech_noise', 'chirp', 'tone_bursts',
           'noise_bursts', 'hand_clap', 'coloured_noise', 'reverb_kernel',
           'interpolate_trajectory', 'render_delayed', 'synthesize_scene',
           'read_scene', 'standard_fixtures', 'FIXTURE_NAMES']

RENDER_BLOCK = 1024
NOISE_POLE = 0.7
SOURCE_LEVEL_DB = -26.
NOISE_LEVEL_DB = -50.
FIXTURE_DISTANCE = 3.


@dataclass
class TrajectoryPoint:
    """ Position of a source at `time`.

    `direction` is a unit vector seen from the array centroid; `distance`
    is the range in metres, infinite for a plane wave.
    """
    time: float
    direction: np.ndarray
    distance: float = np.inf

    def __post_init__(self):
        self.direction = np.asarray(self.direction, dtype=float)
        norm = np.linalg.norm(self.direction)
        if norm == 0:
            raise ConfigurationError('trajectory direction must be non-zero')
        if not np.isclose(norm, 1.):
            warnings.warn('trajectory direction of norm {:.3f} normalised'
                          .format(norm), MicArrayWarning)
            self.direction = self.direction/norm
        if not self.distance > 0:
            raise ConfigurationError('source distance must be positive')

    @classmethod
    def from_angles(cls, time, azimuth, elevation=0., distance=np.inf):
        return cls(time, utils.sph2cart(azimuth, elevation), distance)


@dataclass
class SourceSpec:
    """ One source of a scene.

    Parameters
    ----------
    signal : str or array
        generator name from `GENERATORS`, WAV file name or samples
    trajectory : list of TrajectoryPoint
        time-sorted positions
    level_db : float
        RMS level of the active signal [dBFS]
    onset : float
        silence before the signal starts [s]
    name : str
        label used in file names
    """
    signal: object
    trajectory: list
    level_db: float = SOURCE_LEVEL_DB
    onset: float = 0.
    name: str = ''

    def __post_init__(self):
        if not self.trajectory:
            raise ConfigurationError('a source needs at least one trajectory point')
        times = [p.time for p in self.trajectory]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ConfigurationError('trajectory of {} is not time-sorted'
                                     .format(self.name or 'source'))
        if not np.isfinite(self.level_db):
            raise ConfigurationError('source level must be finite')
        if self.onset < 0:
            raise ConfigurationError('source onset must not be negative')


@dataclass
class SceneSpec:
    """ Complete description of a synthetic recording.

    Parameters
    ----------
    mic_positions : array
        microphone positions of shape (N, 3) [m]
    sources : list of SourceSpec
        sources of the scene
    noise_db : float
        RMS level of the diffuse noise at each microphone [dBFS];
        ``-inf`` disables it
    t60 : float
        reverberation time [s]; 0 for an anechoic scene
    srr : float
        direct-to-reverberant power ratio delta
    mode : {'fractional', 'integer'}
        fractional delays or delays rounded to whole samples
    mic_gains_db : array, optional
        fixed gain of each microphone [dB]
    seed : int
        seed used by `synthesize_scene` when it is given none
    """
    mic_positions: np.ndarray
    sources: list
    noise_db: float = NOISE_LEVEL_DB
    t60: float = 0.
    srr: float = 3.3
    sample_rate: float = utils.SAMPLE_RATE
    duration: float = 2.
    speed_of_sound: float = utils.SPEED_OF_SOUND
    mode: str = 'fractional'
    mic_gains_db: np.ndarray = None
    seed: int = 0

    def __post_init__(self):
        self.mic_positions = np.atleast_2d(np.asarray(self.mic_positions,
                                                      dtype=float))
        if self.mic_positions.shape[1] != 3 or len(self.mic_positions) < 1:
            raise ConfigurationError('microphone positions must be (N, 3)')
        if self.t60 < 0:
            raise ConfigurationError('T60 must not be negative')
        if self.srr <= 0:
            raise ConfigurationError('SRR must be positive')
        if self.duration <= 0 or self.sample_rate <= 0:
            raise ConfigurationError('duration and sample rate must be positive')
        if self.mode not in ('fractional', 'integer'):
            raise ConfigurationError('unknown delay mode {!r}'.format(self.mode))
        if np.isnan(self.noise_db) or self.noise_db == np.inf:
            raise ConfigurationError('noise level must be finite or -inf')
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigurationError('seed must be a nonnegative integer')
        if self.mic_gains_db is None:
            self.mic_gains_db = np.zeros(len(self.mic_positions))
        self.mic_gains_db = np.asarray(self.mic_gains_db, dtype=float)
        if self.mic_gains_db.shape != (len(self.mic_positions),):
            raise ConfigurationError('one gain per microphone is required')
        for i, source in enumerate(self.sources):
            if not source.name:
                source.name = 'source_{}'.format(i)

    @property
    def n_samples(self):
        return int(round(self.duration*self.sample_rate))


@dataclass
class GroundTruth:
    """ Exact description of a synthesised scene.

    Parameters
    ----------
    times : array
        time stamps of the trajectory samples [s], shape (T,)
    directions : array
        true unit vectors, shape (M, T, 3)
    distances : array
        true ranges [m], shape (M, T)
    active : array
        source activity at each time stamp, shape (M, T)
    signals : array
        dry source signals as they arrive at the array centroid, shape (M, n)
    activity : array
        sample-wise source activity, shape (M, n)
    stems : array
        clean image of each source at each microphone, shape (M, N, n)
    noise : array
        diffuse noise, shape (N, n)
    names : list of str
        source labels
    """
    times: np.ndarray
    directions: np.ndarray
    distances: np.ndarray
    active: np.ndarray
    signals: np.ndarray
    activity: np.ndarray
    stems: np.ndarray
    noise: np.ndarray
    names: list = field(default_factory=list)
    sample_rate: float = utils.SAMPLE_RATE

    @property
    def n_sources(self):
        return len(self.signals)

    def stem_buffer(self, i):
        return MultichannelBuffer(self.stems[i], self.sample_rate)

    def silence_segments(self, i):
        """Sample intervals [start, stop) in which source `i` is silent."""
        return _segments(~self.activity[i])

    def to_dataframe(self):
        """ Trajectories as a table.

        Columns are time_s, source_id, azimuth_deg, elevation_deg,
        distance_m and active.
        """
        frames = []
        for i in range(self.n_sources):
            az, el = utils.cart2sph(self.directions[i])
            frames.append(pd.DataFrame({
                'time_s': self.times, 'source_id': i, 'azimuth_deg': az,
                'elevation_deg': el, 'distance_m': self.distances[i],
                'active': self.active[i].astype(int)}))
        if not frames:
            return pd.DataFrame(columns=['time_s', 'source_id', 'azimuth_deg',
                                         'elevation_deg', 'distance_m',
                                         'active'])
        return pd.concat(frames, ignore_index=True)


def _segments(mask):
    """Start and stop indices of the runs of True in a boolean array."""
    edges = np.diff(np.concatenate([[0], mask.astype(int), [0]]))
    return list(zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)))


def _unit_rms(x, active):
    rms = np.sqrt(np.mean(x[active]**2)) if active.any() else 0.
    return x/rms if rms > 0 else x


def coloured_noise(n, rng, pole=NOISE_POLE):
    """ First-order low-pass noise of unit RMS.

    Example
    -------
    >>> x = coloured_noise(48000, np.random.default_rng(0))
    >>> round(float(np.sqrt(np.mean(x**2))), 6)
    1.0
    """
    x = signal.lfilter([1.], [1., -pole], rng.standard_normal(n))
    return x/np.sqrt(np.mean(x**2))


def _on_off(n, sample_rate, rng, on=(0.4, 1.2), off=(0.15, 0.5)):
    """Random alternation of active and pause segments."""
    active = np.zeros(n, dtype=bool)
    pos = 0
    while pos < n:
        length = int(rng.uniform(*on)*sample_rate)
        active[pos:pos + length] = True
        pos += length + int(rng.uniform(*off)*sample_rate)
    return active


def speech_noise(n, sample_rate, rng):
    """ Speech-shaped noise with a syllabic envelope and pauses.

    Returns
    -------
    x : array
        unit RMS over the active samples
    active : array
        boolean activity
    """
    sos = signal.butter(4, [100., min(4000., 0.45*sample_rate)], 'bandpass',
                        fs=sample_rate, output='sos')
    x = signal.lfilter([1.], [1., -0.9], rng.standard_normal(n))
    x = signal.sosfilt(sos, x)
    t = np.arange(n)/sample_rate
    envelope = 0.3 + 0.7*np.sin(np.pi*4.*t + rng.uniform(0, np.pi))**2
    active = _on_off(n, sample_rate, rng)
    x = x*envelope*active
    return _unit_rms(x, active), active


def chirp(n, sample_rate, rng=None, f0=200., f1=4000., period=1.):
    """Repeated linear sweeps from `f0` to `f1`."""
    t = (np.arange(n)/sample_rate) % period
    x = signal.chirp(t, f0, period, f1)
    active = np.ones(n, dtype=bool)
    return _unit_rms(x, active), active


def tone_bursts(n, sample_rate, rng=None, frequency=1000., burst=0.2, gap=0.3):
    """Sine bursts of `burst` seconds separated by `gap` seconds."""
    t = np.arange(n)/sample_rate
    active = (t % (burst + gap)) < burst
    x = np.sin(2*np.pi*frequency*t)*active
    return _unit_rms(x, active), active


def noise_bursts(n, sample_rate, rng, burst=0.2, gap=0.5):
    """White-noise bursts of `burst` seconds separated by `gap` seconds."""
    t = np.arange(n)/sample_rate
    active = (t % (burst + gap)) < burst
    x = rng.standard_normal(n)*active
    return _unit_rms(x, active), active


def hand_clap(n, sample_rate, rng, period=0.5, decay=0.01):
    """Short exponentially decaying noise bursts every `period` seconds."""
    t = np.arange(n)/sample_rate
    phase = t % period
    active = phase < 5*decay
    x = rng.standard_normal(n)*np.exp(-phase/decay)*active
    return _unit_rms(x, active), active


GENERATORS = {'speech': speech_noise, 'chirp': chirp, 'tones': tone_bursts,
              'bursts': noise_bursts, 'clap': hand_clap}


def _source_signal(source, n, sample_rate, rng):
    """Dry signal of a source at unit active RMS, with its activity."""
    onset = int(round(source.onset*sample_rate))
    x = np.zeros(n)
    active = np.zeros(n, dtype=bool)
    if onset >= n:
        return x, active

    length = n - onset
    if isinstance(source.signal, str) and source.signal in GENERATORS:
        sig, act = GENERATORS[source.signal](length, sample_rate, rng)
    else:
        if isinstance(source.signal, str):
            buf = read_wav(source.signal)
            if buf.sample_rate != sample_rate:
                raise AudioFileError('{} is sampled at {} Hz, the scene at {} '
                                     'Hz'.format(source.signal, buf.sample_rate,
                                                 sample_rate))
            sig = buf.samples[0]
        else:
            sig = np.asarray(source.signal, dtype=float)
        sig = np.pad(sig, (0, max(0, length - len(sig))))[:length]
        frames = np.abs(sig) > 1e-4*np.max(np.abs(sig), initial=0.)
        act = np.convolve(frames, np.ones(int(0.02*sample_rate)),
                          mode='same') > 0
        sig = _unit_rms(sig, act)
    x[onset:] = sig
    active[onset:] = act
    return x, active


def interpolate_trajectory(trajectory, times):
    """ Piecewise-linear interpolation of a trajectory.

    Positions are interpolated in Cartesian coordinates and the directions
    renormalised; before the first and after the last point the source
    stays put.

    Returns
    -------
    directions : array
        unit vectors, shape (T, 3)
    distances : array
        ranges, shape (T,)
    """
    t = np.array([p.time for p in trajectory])
    dirs = np.array([p.direction for p in trajectory])
    dist = np.array([p.distance for p in trajectory])
    times = np.atleast_1d(np.asarray(times, dtype=float))
    out = np.stack([np.interp(times, t, dirs[:, d]) for d in range(3)], axis=1)
    if np.isinf(dist).any():
        distances = np.full(len(times), np.inf)
    else:
        distances = np.interp(times, t, dist)
    return utils.normalize(out), distances


def render_delayed(x, delays, gains, block=RENDER_BLOCK):
    """ Render one signal to several channels with time-varying delays.

    The signal is cut into Hann-windowed blocks with 50% overlap; each block
    is zero-padded, delayed by a phase shift and overlap-added.

    Parameters
    ----------
    x : array
        dry signal, shape (n,)
    delays : array
        delay of each channel for each block [samples], shape (B, N) where
        B = n // (block/2) + 2; block b is centred on sample b block/2
    gains : array
        amplitude of each channel for each block, shape (B, N)
    block : int
        block length

    Returns
    -------
    y : array
        shape (N, n)
    """
    hop = block//2
    n = len(x)
    delays = np.asarray(delays, dtype=float)
    gains = np.asarray(gains, dtype=float)
    nBlocks = n//hop + 2
    if delays.shape[0] != nBlocks:
        raise ValueError('{} delay rows for {} blocks'.format(len(delays),
                                                              nBlocks))
    if np.abs(delays).max(initial=0.) >= hop:
        raise ValueError('delays must stay below {} samples'.format(hop))

    window = signal.get_window('hann', block, fftbins=True)
    nfft = 2*block
    k = np.arange(nfft//2 + 1)
    # block b covers x[b*hop - hop : b*hop + hop]
    padded = np.concatenate([np.zeros(hop), x, np.zeros(block + hop)])
    out = np.zeros((delays.shape[1], len(padded) + block))
    for b in range(nBlocks):
        seg = np.zeros(nfft)
        seg[hop:hop + block] = padded[b*hop:b*hop + block]*window
        phase = np.exp(-2j*np.pi*np.outer(delays[b], k)/nfft)
        shifted = sfft.irfft(sfft.rfft(seg)*phase*gains[b][:, None], n=nfft,
                             axis=-1)
        out[:, b*hop:b*hop + nfft] += shifted
    return out[:, 2*hop:2*hop + n]


def reverb_kernel(t60, sample_rate, rng, length=None):
    """ Exponentially decaying white-noise impulse response.

    The power decays by 60 dB in `t60` seconds. The kernel has unit energy
    and starts one sample after the direct path.
    """
    if length is None:
        length = int(np.ceil(t60*sample_rate))
    n = np.arange(1, length + 1)
    h = rng.standard_normal(length)*10.**(-3.*n/(sample_rate*t60))
    return np.concatenate([[0.], h/np.sqrt(np.sum(h**2))])


def synthesize_scene(spec, seed=None):
    """ Synthesise the microphone signals of a scene.

    Parameters
    ----------
    spec : SceneSpec
        scene description
    seed : int, optional
        seed, ``spec.seed`` if omitted; source i draws from
        ``default_rng([seed, i])``

    Returns
    -------
    mixture : MultichannelBuffer
        microphone signals
    truth : GroundTruth
        trajectories, activity, stems and noise
    """
    if seed is None:
        seed = spec.seed
    fs = spec.sample_rate
    n = spec.n_samples
    nMics = len(spec.mic_positions)
    hop = RENDER_BLOCK//2
    blockTimes = np.arange(n//hop + 2)*hop/fs
    micGains = utils.db2amp(spec.mic_gains_db)
    centre = utils.array_centroid(spec.mic_positions)

    signals, activity, stems = [], [], []
    for i, source in enumerate(spec.sources):
        rng = np.random.default_rng([seed, i])
        dry, active = _source_signal(source, n, fs, rng)
        dry = dry*utils.db2amp(source.level_db)

        dirs, dists = interpolate_trajectory(source.trajectory, blockTimes)
        delays = np.array([steering_delays(u, spec.mic_positions, fs,
                                           spec.speed_of_sound, d)
                           for u, d in zip(dirs, dists)])
        gains = np.ones_like(delays)
        near = np.isfinite(dists)
        if near.any():
            ranges = np.linalg.norm(centre + dirs[near]*dists[near, None]
                                    - spec.mic_positions[:, None, :], axis=2).T
            gains[near] = dists[near, None]/ranges
        if spec.mode == 'integer':
            delays = np.round(delays)
        image = render_delayed(dry, delays, gains*micGains)

        if spec.t60 > 0:
            tail = np.stack([signal.fftconvolve(ch, reverb_kernel(spec.t60, fs,
                                                                  rng))[:n]
                             for ch in image])
            direct = np.sum(image**2, axis=1, keepdims=True)
            tailPower = np.sum(tail**2, axis=1, keepdims=True)
            scale = np.sqrt(np.divide(direct/spec.srr, tailPower,
                                      out=np.zeros_like(direct),
                                      where=tailPower > 0))
            image = image + tail*scale
        signals.append(dry)
        activity.append(active)
        stems.append(image)
        log.debug('Rendered {} ({} dBFS)'.format(source.name, source.level_db))

    noiseRng = np.random.default_rng([seed, len(spec.sources), 1])
    if np.isfinite(spec.noise_db):
        noise = np.stack([coloured_noise(n, noiseRng) for _ in range(nMics)])
        noise *= utils.db2amp(spec.noise_db)
    else:
        noise = np.zeros((nMics, n))

    stems = np.array(stems).reshape(len(spec.sources), nMics, n)
    mixture = stems.sum(axis=0) + noise

    frameHop = hop
    times = np.arange(0, n, frameHop)/fs
    directions, distances, active = [], [], []
    for source, act in zip(spec.sources, activity):
        dirs, dists = interpolate_trajectory(source.trajectory, times)
        directions.append(dirs)
        distances.append(dists)
        active.append(act[np.arange(0, n, frameHop)])
    truth = GroundTruth(times, np.array(directions).reshape(-1, len(times), 3),
                        np.array(distances).reshape(-1, len(times)),
                        np.array(active, dtype=bool).reshape(-1, len(times)),
                        np.array(signals).reshape(-1, n),
                        np.array(activity, dtype=bool).reshape(-1, n),
                        stems, noise, [s.name for s in spec.sources], fs)
    log.info('Synthesised {:.2f} s scene with {} sources on {} microphones'
             .format(spec.duration, len(spec.sources), nMics))
    return MultichannelBuffer(mixture, fs), truth


def _float(section, key, default):
    try:
        return float(section.get(key, default))
    except (TypeError, ValueError):
        raise ConfigurationError('invalid value for {}'.format(key))


def read_scene(filename, mic_positions=None):
    """ Read a scene description from a ConfigObj file.

    The file holds a ``[scene]`` section (sample_rate, duration, noise_db,
    t60, srr, mode), an optional ``[array]`` section with ``mic_0 ...``
    positions and one ``[source_<i>]`` section per source with keys
    ``signal``, ``level_db``, ``onset`` and trajectory points
    ``point_<j> = time, azimuth, elevation[, distance]``.

    Parameters
    ----------
    filename : str
        scene file
    mic_positions : array, optional
        geometry used when the file has no ``[array]`` section

    Returns
    -------
    spec : SceneSpec
        parsed scene
    """
    try:
        raw = configobj.ConfigObj(filename, file_error=True)
    except (configobj.ConfigObjError, IOError) as e:
        raise ConfigurationError('cannot read scene {}: {}'.format(filename, e))
    scene = raw.get('scene', {})
    if 'array' in raw:
        from .config import _parse_geometry
        mic_positions = _parse_geometry(raw['array'], filename)
    if mic_positions is None:
        raise ConfigurationError('no microphone geometry for scene {}'.format(
            filename))

    sources = []
    for name in sorted((s for s in raw.sections if s.startswith('source_')),
                       key=lambda s: (len(s), s)):
        section = raw[name]
        keys = sorted((k for k in section if k.startswith('point_')),
                      key=lambda k: (len(k), k))
        points = []
        for key in keys:
            try:
                values = [float(v) for v in section[key]]
            except (TypeError, ValueError):
                raise ConfigurationError('invalid {}.{}'.format(name, key))
            if len(values) not in (3, 4):
                raise ConfigurationError('{}.{} needs time, azimuth, elevation'
                                         '[, distance]'.format(name, key))
            points.append(TrajectoryPoint.from_angles(*values))
        sources.append(SourceSpec(section.get('signal', 'speech'), points,
                                  _float(section, 'level_db', SOURCE_LEVEL_DB),
                                  _float(section, 'onset', 0.), name))

    return SceneSpec(mic_positions, sources,
                     _float(scene, 'noise_db', NOISE_LEVEL_DB),
                     _float(scene, 't60', 0.), _float(scene, 'srr', 3.3),
                     _float(scene, 'sample_rate', utils.SAMPLE_RATE),
                     _float(scene, 'duration', 2.),
                     _float(scene, 'speed_of_sound', utils.SPEED_OF_SOUND),
                     scene.get('mode', 'fractional'))


def _static(azimuth, elevation=0., distance=FIXTURE_DISTANCE):
    return [TrajectoryPoint.from_angles(0., azimuth, elevation, distance)]


def _moving(duration, start, stop, elevation=0., distance=FIXTURE_DISTANCE):
    return [TrajectoryPoint.from_angles(0., start, elevation, distance),
            TrajectoryPoint.from_angles(duration, stop, elevation, distance)]


FIXTURE_NAMES = ('single-static', 'three-static', 'four-moving',
                 'two-crossing')


def standard_fixtures(seed=0, mic_positions=None, duration=None, t60=0.35):
    """ Named test scenes.

    Every base scene exists anechoic and with a ``-reverb`` suffix using
    reverberation time `t60`. Sources are speech-shaped noise at -26 dBFS,
    3 m from the array, after a silent lead-in of 0.3 to 0.5 s; the diffuse
    noise is at -50 dBFS.

    Parameters
    ----------
    seed : int
        seed stored in every scene
    mic_positions : array, optional
        geometry; the packaged default array if omitted
    duration : float, optional
        override of the scene lengths [s]
    t60 : float
        reverberation time of the ``-reverb`` scenes [s]

    Returns
    -------
    fixtures : dict
        name to SceneSpec

    Example
    -------
    >>> sorted(standard_fixtures())[:3]
    ['four-moving', 'four-moving-reverb', 'single-static']
    """
    if mic_positions is None:
        from .config import load_config
        mic_positions = load_config().mic_positions

    def length(default):
        return default if duration is None else duration

    def sources(trajectories):
        return [SourceSpec('speech', traj, onset=0.3 + 0.1*(i % 3))
                for i, traj in enumerate(trajectories)]

    d4 = length(6.)
    base = {
        'single-static': (length(3.), [_static(30., 10.)]),
        'three-static': (length(4.), [_static(-90.), _static(0.),
                                      _static(135.)]),
        'four-moving': (d4, [_moving(d4, -150., -60., 10.),
                             _moving(d4, -30., 30., -10.),
                             _moving(d4, 60., 120., 20.),
                             _moving(d4, 170., 100., 0.)]),
        'two-crossing': (length(4.), [_moving(length(4.), -60., 60.),
                                      _moving(length(4.), 60., -60.)]),
    }
    fixtures = {}
    for name, (dur, trajectories) in base.items():
        for suffix, reverb in (('', 0.), ('-reverb', t60)):
            fixtures[name + suffix] = SceneSpec(
                mic_positions, sources(trajectories), NOISE_LEVEL_DB, reverb,
                duration=dur, seed=seed)
    return fixtures
