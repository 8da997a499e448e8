"""Python bindings for the gridvc voltage-control core."""

import os
from pathlib import Path

_data = Path(__file__).with_name("data")
if (_data / "desk14.net").is_file():
    os.environ.setdefault("GRIDVC_DATA", str(_data))

from ._gridvc import *  # noqa: E402,F401,F403
from ._gridvc import builtin_network_path, load_network  # noqa: E402


def desk_network():
    """The built-in 14-bus desk network."""
    return load_network(builtin_network_path())
