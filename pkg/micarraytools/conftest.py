# This file is used to configure the behavior of pytest when using the Astropy
# test infrastructure.
import os

import matplotlib
import numpy as np
import pytest

matplotlib.use('Agg')

try:
    from pytest_astropy_header.display import (PYTEST_HEADER_MODULES,
                                               TESTED_VERSIONS)
except ImportError:
    PYTEST_HEADER_MODULES = {}
    TESTED_VERSIONS = {}

# display the versions of the numerical stack in the test header
PYTEST_HEADER_MODULES.clear()
PYTEST_HEADER_MODULES.update({'Numpy': 'numpy', 'Scipy': 'scipy',
                              'Pandas': 'pandas', 'Astropy': 'astropy',
                              'h5py': 'h5py', 'Matplotlib': 'matplotlib'})

try:
    from .version import version
except ImportError:
    version = 'dev'
TESTED_VERSIONS[os.path.basename(os.path.dirname(__file__))] = version


@pytest.fixture(autouse=True)
def no_grid_cache(monkeypatch):
    """Keep tests from reading or writing a user grid cache."""
    from .config import conf
    monkeypatch.setattr(conf, 'grid_cache_dir', '')


@pytest.fixture
def cfg():
    from .config import load_config
    return load_config()


@pytest.fixture
def cube_mics(cfg):
    """Default eight-microphone cube, 0.3 m side."""
    return cfg.mic_positions


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope='session')
def cube_grid():
    """Level-4 search grid with delays for the default array."""
    from .config import load_config
    from .localization import build_grid, build_tdoa_table
    cfg = load_config()
    grid = build_grid(4)
    build_tdoa_table(grid, cfg.mic_positions, cfg.array.sample_rate,
                     cfg.array.speed_of_sound)
    return grid
