"""Python bindings for the mfc toolkit.

Models, grids and functionals are passed as registry names or as dicts in the
same JSON shape the config files use.
"""

import json as _json

from . import _mfclab
from ._mfclab import (
    ConfigError,
    GridValue,
    evaluate_expression,
    moment,
    optimal_assignment,
    render_expression,
    riccati_lq_value,
    wasserstein,
)

__version__ = _mfclab.__version__

__all__ = [
    "ConfigError",
    "GridValue",
    "evaluate_expression",
    "listing",
    "model",
    "moment",
    "optimal_assignment",
    "render_expression",
    "riccati_lq_value",
    "run",
    "simulate",
    "smooth_eval",
    "solve_hjb",
    "wasserstein",
    "zero_control_cost",
]


def _doc(obj):
    return _json.dumps(obj)


def listing():
    """Registry entries as a list of {"category", "name"} dicts."""
    return _json.loads(_mfclab.listing_json())


def model(spec):
    """Validated model document for a registry name or a model dict."""
    return _json.loads(_mfclab.model_json(_doc(spec)))


def solve_hjb(spec, n, grid=None):
    return _mfclab.solve_hjb(_doc(spec), n, _doc(grid or {}))


def simulate(spec, x0, **kwargs):
    """Zero-control particle paths: (states[path, step, particle, coord], alive[path])."""
    return _mfclab.simulate(_doc(spec), x0, **kwargs)


def zero_control_cost(spec, x0, **kwargs):
    return _mfclab.zero_control_cost(_doc(spec), x0, **kwargs)


def smooth_eval(functional, k, x, mu, mc_reps=1000, seed=0):
    """(mean, standard error) of the smoothed functional at (x, mu)."""
    return _mfclab.smooth_eval(_doc(functional), k, mc_reps, seed, x, mu)


def run(config, out=None, seed=None, jobs=None, format="csv"):
    """Runs a config file like `mfc run`; returns (exit code, stdout, stderr)."""
    return _mfclab.run(str(config), None if out is None else str(out), seed, jobs, format)
