# Licensed under a 3-clause BSD style license - see LICENSE.rst
"""
Localisation, tracking and separation of sound sources with a microphone
array, and missing-feature masks for recognising the separated speech.
"""

# Packages may add whatever they like to this file, but
# should keep this content at the top.
# ----------------------------------------------------------------------------
from ._astropy_init import *
# ----------------------------------------------------------------------------

# Enforce Python version check during package import.
# This is the same check as the one at the top of setup.py
import sys

__minimum_python_version__ = "3.8"

class UnsupportedPythonError(Exception):
    pass

if sys.version_info < tuple((int(val) for val in __minimum_python_version__.split('.'))):
    raise UnsupportedPythonError("micarraytools does not support Python < {}".format(__minimum_python_version__))

from . import exceptions
from . import utils
from . import config
from . import audio_stft
from . import localization
from . import tracking
from . import separation
from . import postfilter
from . import features_mft
from . import simulator
from . import metrics
from . import output
from . import pipeline
