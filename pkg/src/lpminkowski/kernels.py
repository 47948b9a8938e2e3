"""Backend selection for the hot kernels.

The compiled extension is used when it imports cleanly. Setting the
environment variable ``LPMINKOWSKI_PURE_PYTHON=1`` forces the numpy fallback.
"""

from contextlib import contextmanager
import importlib
import logging
import os

from . import _pykernels

log = logging.getLogger(__name__)

_NAMES = ("sigma_1d", "grad_1d", "grad_2d", "hess_2d", "flow_terms", "split_step_1d",
          "dsigma_stats", "entropy_newton")


def load_backend(name):
    """Return the kernel module for ``name`` (``"cython"`` or ``"python"``)."""
    if name == "python":
        return _pykernels
    if name == "cython":
        return importlib.import_module("lpminkowski._kernels")
    raise ValueError(f"unknown kernel backend {name!r}")


def _select():
    if os.environ.get("LPMINKOWSKI_PURE_PYTHON", "").strip() not in ("", "0"):
        return _pykernels
    try:
        return load_backend("cython")
    except ImportError:
        log.debug("compiled kernels unavailable, using numpy fallback")
        return _pykernels


_impl = _select()
BACKEND = _impl.BACKEND

sigma_1d = _impl.sigma_1d
grad_1d = _impl.grad_1d
grad_2d = _impl.grad_2d
hess_2d = _impl.hess_2d
flow_terms = _impl.flow_terms
split_step_1d = _impl.split_step_1d
dsigma_stats = _impl.dsigma_stats
entropy_newton = _impl.entropy_newton


@contextmanager
def use_backend(name):
    """Temporarily route every kernel call through backend ``name``."""
    global BACKEND
    impl = load_backend(name)
    g = globals()
    saved = {k: g[k] for k in _NAMES}
    saved_backend = BACKEND
    g.update({k: getattr(impl, k) for k in _NAMES})
    BACKEND = impl.BACKEND
    try:
        yield impl
    finally:
        g.update(saved)
        BACKEND = saved_backend
