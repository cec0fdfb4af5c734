"""Optimal transport and monotone quantities on evolving manifolds."""

import json as _json

from ._core import *  # noqa: F401,F403
from ._core import __version__, run_config as _run_config


def run(path, out_dir=None, seed=None):
    """Run a config; returns (exit_code, summary dict)."""
    code, summary = _run_config(path, out_dir, seed)
    return code, _json.loads(summary)
