"""Test-time training on the query tokens of a toy visual-foresight policy.

The compiled core lives in ``t3vf._core``; this module re-exports it and adds
JSON-decoding helpers for the report and metadata accessors.
"""

import json as _json

from . import _core
from ._core import *  # noqa: F401,F403

__all__ = [name for name in dir(_core) if not name.startswith("_")]
__all__ += ["report_dict", "checkpoint_metadata", "load_run_config"]


def report_dict(report, **kwargs):
    """Decoded JSON form of an EvalReport, AblationReport or TimingReport."""
    return _json.loads(report.json(**kwargs))


def checkpoint_metadata(checkpoint):
    return _json.loads(checkpoint.metadata_json)


def load_run_config(path):
    """Effective configuration of an INI file as a nested dict."""
    return _json.loads(_core.load_run_config_json(str(path)))
