""" Run configuration and parameter limits for micarraytools.

Runs are configured with a ConfigObj ini file. `load_config` merges a user
file over the packaged defaults in ``data/default_run.cfg`` and validates every
value against `parameterLimits`.
"""
import os
from types import SimpleNamespace

import numpy as np
from astropy import config as _config
from astropy import log
from astropy.extern.configobj import configobj

from .exceptions import ConfigurationError

__all__ = ['conf', 'parameterLimits', 'RunConfig', 'load_config',
           'DEFAULT_CONFIG']

DEFAULT_CONFIG = os.path.join(os.path.dirname(__file__), 'data',
                              'default_run.cfg')

_TRUE = ('true', 'on', 'yes', '1')
_FALSE = ('false', 'off', 'no', '0')


class Conf(_config.ConfigNamespace):
    """ Configuration parameters for `micarraytools`."""
    grid_cache_dir = _config.ConfigItem(
        '', 'Directory for cached search grids and delay tables. '
        'An empty value disables the cache.')


conf = Conf()


def parameterLimits():
    """ Provide the admissible range of every numeric run parameter.

    Returns
    -------
    limits : dict
        (low, high) limits, both inclusive, keyed by 'section.key'
    """
    limits = {
    'array.sample_rate' : (1000, 384000),
    'array.speed_of_sound' : (300., 400.),
    'stft.frame_length' : (16, 65536),
    'reverb.t60' : (0., 10.),
    'reverb.srr' : (1e-3, 1e3),
    'localization.alpha_d' : (0., 1.),
    'localization.energy_threshold' : (1e-6, np.inf),
    'localization.n_sources' : (1, 4),
    'localization.grid_levels' : (0, 6),
    'localization.mcra_window' : (0.05, 30.),
    'localization.mcra_alpha_s' : (0., 1.),
    'localization.mcra_alpha_d' : (0., 1.),
    'localization.mcra_alpha_p' : (0., 1.),
    'localization.mcra_delta' : (1., 1e3),
    'localization.zero_width' : (0, 16),
    'tracking.delta_t' : (1e-3, 1.),
    'tracking.particles' : (10, 100000),
    'tracking.sigma' : (1e-4, 1.),
    'tracking.delay' : (0., 10.),
    'tracking.p_unobserved' : (0., 1.),
    'tracking.p_new' : (1e-9, 1.),
    'tracking.p_false' : (1e-9, 1.),
    'tracking.birth_threshold' : (0., 1.),
    'tracking.confirm_threshold' : (0., 1.),
    'tracking.initial_existence' : (0., 1.),
    'tracking.death_time' : (0., 60.),
    'tracking.observed_threshold' : (0., 1.),
    'tracking.p_stay_active' : (0., 1.),
    'tracking.p_become_active' : (0., 1.),
    'tracking.resample_fraction' : (0., 1.),
    'tracking.max_tracks' : (1, 8),
    'tracking.birth_exclusion' : (0., 2.),
    'tracking.regime_stationary' : (0., 1.),
    'tracking.regime_velocity' : (0., 1.),
    'tracking.regime_accelerated' : (0., 1.),
    'separation.mu' : (0., 1.),
    'separation.regularisation' : (0., 100.),
    'separation.move_threshold' : (0., 180.),
    'separation.activity_gate' : (0., 1.),
    'postfilter.eta' : (0., 1.),
    'postfilter.alpha_s' : (0., 1.),
    'postfilter.alpha_pmin' : (0., 1.),
    'postfilter.gain_min_db' : (-60., 0.),
    'postfilter.theta_db' : (-40., 40.),
    'postfilter.alpha_zeta' : (0., 1.),
    'postfilter.local_bandwidth' : (0., 24000.),
    'postfilter.global_bandwidth' : (0., 24000.),
    'postfilter.xi_min_db' : (-80., 0.),
    'features.mask_threshold' : (0., np.inf),
    'features.sample_rate' : (1000, 96000),
    'features.window' : (16, 8192),
    'features.hop' : (1, 8192),
    'features.n_fft' : (16, 8192),
    'features.n_mels' : (2, 128),
    'features.n_ceps' : (2, 128),
    'features.delta_window' : (1, 10),
    'metrics.band_low' : (0., np.inf),
    'metrics.band_high' : (0., np.inf),
    'metrics.cap_db' : (1., 1000.),
    'metrics.lsd_eps_factor' : (0., 1.),
    'run.seed' : (0, 2**32 - 1),
    }
    return limits


def choiceLimits():
    """Provide the admissible values of string parameters."""
    return {
    'postfilter.gain_mode' : ('log', 'stsa'),
    'metrics.reference' : ('gss', 'stem'),
    }


class RunConfig:
    """ Validated run configuration.

    Each section is available as an attribute holding a namespace of its
    keys, e.g. ``cfg.tracking.particles``. The microphone geometry is kept
    separately in `mic_positions`.

    Parameters
    ----------
    sections : dict
        converted values per section, without the mic_* keys
    mic_positions : array
        microphone positions of shape (N, 3) in metres
    """

    def __init__(self, sections, mic_positions):
        self._names = list(sections)
        for name, values in sections.items():
            setattr(self, name, SimpleNamespace(**values))
        self.mic_positions = np.asarray(mic_positions, dtype=float)

    @property
    def n_mics(self):
        return len(self.mic_positions)

    @property
    def hop(self):
        return self.stft.frame_length // 2

    @property
    def block_frames(self):
        """Number of STFT frames averaged for one localisation step."""
        return max(1, int(round(self.tracking.delta_t*self.array.sample_rate
                                / self.hop)))

    @property
    def seed(self):
        return self.run.seed

    def as_dict(self):
        """ Return the configuration as nested dicts, geometry included."""
        out = {name: dict(vars(getattr(self, name))) for name in self._names}
        for i, pos in enumerate(self.mic_positions):
            out['array']['mic_{}'.format(i)] = [float(p) for p in pos]
        return out

    def write(self, filename):
        """ Write the configuration to a ConfigObj file."""
        cfgObj = configobj.ConfigObj()
        cfgObj.filename = filename
        for name, values in self.as_dict().items():
            cfgObj[name] = {key: _to_text(val) for key, val in values.items()}
        cfgObj.write()


def _to_text(value):
    if isinstance(value, (list, tuple)):
        return [repr(v) for v in value]
    return str(value)


def _convert(section, key, text, default):
    """Convert a raw ConfigObj value to the type of its default."""
    name = '{}.{}'.format(section, key)
    if isinstance(text, list) and not isinstance(default, list):
        raise ConfigurationError('{} expects a single value'.format(name))
    try:
        if isinstance(default, bool):
            low = str(text).strip().lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        if isinstance(default, int):
            value = float(text)
            if value != int(value):
                raise ValueError(text)
            return int(value)
        if isinstance(default, float):
            return float(text)
        return str(text).strip()
    except (TypeError, ValueError):
        raise ConfigurationError('invalid value {!r} for {}'.format(text, name))


def _parse_defaults():
    """Read the packaged defaults with their Python types."""
    raw = configobj.ConfigObj(DEFAULT_CONFIG)
    defaults = {}
    for section in raw.sections:
        defaults[section] = {}
        for key, text in raw[section].items():
            if key.startswith('mic_'):
                continue
            defaults[section][key] = _guess_type(text)
    return defaults, _parse_geometry(raw['array'], 'default configuration')


def _guess_type(text):
    low = text.strip().lower()
    if low in ('true', 'false'):
        return low == 'true'
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text.strip()


def _parse_geometry(section, origin):
    keys = [k for k in section if k.startswith('mic_')]
    if not keys:
        raise ConfigurationError(
            'no microphone geometry ([array] mic_0 ...) in {}'.format(origin))
    expected = ['mic_{}'.format(i) for i in range(len(keys))]
    if sorted(keys, key=lambda k: (len(k), k)) != expected:
        raise ConfigurationError(
            'microphone keys in {} must be mic_0 ... mic_{}'.format(
                origin, len(keys) - 1))
    if len(keys) < 2:
        raise ConfigurationError('at least two microphones are required')
    positions = []
    for key in expected:
        value = section[key]
        try:
            pos = [float(v) for v in value]
        except (TypeError, ValueError):
            raise ConfigurationError('invalid position for array.{}'.format(key))
        if len(pos) != 3 or isinstance(value, str):
            raise ConfigurationError(
                'array.{} needs three coordinates x, y, z'.format(key))
        positions.append(pos)
    return np.array(positions)


def _check_limits(values):
    limits = parameterLimits()
    choices = choiceLimits()
    for section, entries in values.items():
        for key, value in entries.items():
            name = '{}.{}'.format(section, key)
            if name in limits:
                low, high = limits[name]
                if not (low <= value <= high):
                    raise ConfigurationError(
                        '{} = {} outside [{}, {}]'.format(name, value, low, high))
            if name in choices and value not in choices[name]:
                raise ConfigurationError('{} must be one of {}'.format(
                    name, ', '.join(choices[name])))
    if values['stft']['frame_length'] & (values['stft']['frame_length'] - 1):
        raise ConfigurationError('stft.frame_length must be a power of two')
    if values['metrics']['band_low'] >= values['metrics']['band_high']:
        raise ConfigurationError('metrics.band_low must be below band_high')


def load_config(filename=None):
    """ Load and validate a run configuration.

    Parameters
    ----------
    filename : str, optional
        user ConfigObj file. Its keys override the packaged defaults; it must
        declare the microphone geometry. Without a file the defaults are used.

    Returns
    -------
    cfg : RunConfig
        validated configuration

    Example
    -------
    >>> cfg = load_config()
    >>> cfg.stft.frame_length, cfg.n_mics
    (1024, 8)
    """
    defaults, geometry = _parse_defaults()
    values = {section: dict(entries) for section, entries in defaults.items()}

    if filename is not None:
        if not os.path.isfile(filename):
            raise ConfigurationError('configuration file not found: {}'.format(
                filename))
        try:
            user = configobj.ConfigObj(filename, file_error=True)
        except (configobj.ConfigObjError, IOError) as e:
            raise ConfigurationError('cannot parse {}: {}'.format(filename, e))
        if user.scalars:
            raise ConfigurationError('keys outside a section: {}'.format(
                ', '.join(user.scalars)))
        for section in user.sections:
            if section not in defaults:
                raise ConfigurationError('unknown section [{}]'.format(section))
            for key, text in user[section].items():
                if section == 'array' and key.startswith('mic_'):
                    continue
                if key not in defaults[section]:
                    raise ConfigurationError('unknown key {}.{}'.format(
                        section, key))
                values[section][key] = _convert(section, key, text,
                                                defaults[section][key])
        geometry = _parse_geometry(user.get('array', {}), filename)
        log.debug('Loaded run configuration from {}'.format(filename))

    _check_limits(values)
    return RunConfig(values, geometry)
