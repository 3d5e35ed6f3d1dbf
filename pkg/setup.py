#!/usr/bin/env python
# Licensed under a 3-clause BSD style license - see LICENSE.rst

import sys

from setuptools import setup

__minimum_python_version__ = "3.8"

# Enforce Python version check - this is the same check as in __init__.py
if sys.version_info < tuple((int(val) for val in __minimum_python_version__.split('.'))):
    sys.stderr.write("ERROR: micarraytools requires Python {} or later\n".format(__minimum_python_version__))
    sys.exit(1)

setup()
