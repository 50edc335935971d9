"""Load-altering attack simulation and capsule-network localization."""

import os
from pathlib import Path

_data = Path(__file__).with_name("data")
if _data.is_dir():
    os.environ.setdefault("GRIDCAPS_DATA_DIR", str(_data))

from ._gridcaps import *  # noqa: E402,F401,F403
from ._gridcaps import __doc__  # noqa: E402,F401

__version__ = "0.1.0"
