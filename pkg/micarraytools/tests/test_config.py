import numpy as np
import pytest
from numpy.testing import assert_allclose

from ..config import load_config, parameterLimits
from ..exceptions import ConfigurationError

GEOMETRY = """[array]
mic_0 = 0.1, 0.0, 0.0
mic_1 = -0.1, 0.0, 0.0
mic_2 = 0.0, 0.1, 0.0
mic_3 = 0.0, -0.1, 0.0
"""


def write_cfg(tmp_path, text):
    filename = tmp_path / 'run.cfg'
    filename.write_text(text)
    return str(filename)


def test_defaults(cfg):
    assert cfg.n_mics == 8
    assert cfg.hop == 512
    assert cfg.block_frames == 4
    assert cfg.seed == 0
    assert cfg.postfilter.gain_mode == 'log'
    assert cfg.localization.reverb is True
    assert_allclose(np.abs(cfg.mic_positions), 0.15)


def test_defaults_within_limits(cfg):
    for name, (low, high) in parameterLimits().items():
        section, key = name.split('.')
        assert low <= getattr(getattr(cfg, section), key) <= high, name


def test_user_override(tmp_path):
    cfg = load_config(write_cfg(tmp_path, GEOMETRY + """
[tracking]
particles = 500
[postfilter]
reverb = off
gain_mode = stsa
"""))
    assert cfg.n_mics == 4
    assert cfg.tracking.particles == 500
    assert cfg.postfilter.reverb is False
    assert cfg.postfilter.gain_mode == 'stsa'
    # untouched keys keep their defaults
    assert cfg.tracking.sigma == 0.05


def test_write_and_reload(tmp_path, cfg):
    cfg.tracking.particles = 321
    filename = str(tmp_path / 'copy.cfg')
    cfg.write(filename)
    reloaded = load_config(filename)
    assert reloaded.tracking.particles == 321
    assert_allclose(reloaded.mic_positions, cfg.mic_positions)


@pytest.mark.parametrize('text', [
    '[tracking]\nparticles = 500\n',
    GEOMETRY + '[tracking]\nparticles = 5\n',
    GEOMETRY + '[tracking]\nparticles = many\n',
    GEOMETRY + '[tracking]\nparticle = 100\n',
    GEOMETRY + '[beamformer]\nwidth = 1\n',
    GEOMETRY + '[stft]\nframe_length = 1000\n',
    GEOMETRY + '[postfilter]\ngain_mode = wiener\n',
    GEOMETRY + '[metrics]\nband_low = 4000\n',
    '[array]\nmic_0 = 0, 0, 0\nmic_2 = 1, 0, 0\n',
    '[array]\nmic_0 = 0, 0, 0\nmic_1 = 1, 0\n',
    '[array]\nmic_0 = 0, 0, 0\n',
])
def test_invalid(tmp_path, text):
    with pytest.raises(ConfigurationError):
        load_config(write_cfg(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(str(tmp_path / 'nothing.cfg'))
