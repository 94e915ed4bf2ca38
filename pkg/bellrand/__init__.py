"""
bellrand
========

Randomness analysis of two-station photon-detection time tags.

"""
import pathlib
from importlib import metadata

try:
    version = metadata.version('bellrand')
except metadata.PackageNotFoundError:  # running from a source checkout
    version = (pathlib.Path(__file__).parent.parent / 'VERSION').read_text(
    ).strip()
