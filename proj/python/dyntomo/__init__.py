"""Dynamic sparse-angle tomography with joint motion estimation."""

import json

from . import _dyntomo
from ._dyntomo import DimensionError, IoError, SolverError, set_num_threads

__all__ = [
    "DimensionError",
    "IoError",
    "SolverError",
    "default_config",
    "evaluate",
    "forward",
    "reconstruct",
    "schedule",
    "set_num_threads",
    "simulate",
    "table",
]


def _dump(config):
    if config is None:
        return "{}"
    if isinstance(config, str):
        return config
    return json.dumps(config)


def default_config():
    """The default run configuration as a dict."""
    return json.loads(_dyntomo.default_config())


def schedule(config=None):
    """Per-step projection angles (radians) for the configured protocol."""
    return _dyntomo.schedule(_dump(config))


def simulate(config=None):
    """Noisy sinogram and ground truth.

    Returns a dict with ``sinogram`` (list of ``(angles, values)`` per step,
    values shaped ``(n_angles, n_bins)``), ``truth`` shaped ``(n_t, n, n)``
    and a one-line ``summary``.
    """
    return _dyntomo.simulate(_dump(config))


def reconstruct(sinogram, config=None):
    """Joint reconstruction; returns ``u`` (n_t, n, n), ``v`` (n_t-1, 2, n, n) and traces."""
    return _dyntomo.reconstruct(_dump(config), list(sinogram))


def forward(u, angles, config=None):
    """Applies the time-dependent Radon operator to ``u`` shaped (n_t, n, n)."""
    return _dyntomo.forward(_dump(config), [list(a) for a in angles], u)


def evaluate(recon, truth):
    """Relative l1 and l2 errors and the frame-averaged SSIM."""
    return _dyntomo.evaluate(recon, truth)


def table(config=None, cells=None):
    """Protocol x fidelity error table as CSV text."""
    return _dyntomo.table(_dump(config), list(cells or []))
