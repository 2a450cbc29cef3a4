"""Pick the compiled kernels when available, the numpy ones otherwise.

Set ``RBMFLOCK_PURE_PYTHON=1`` to force the numpy path.
"""
import os

from . import _pykernels

try:
    if os.environ.get("RBMFLOCK_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from . import _core
except ImportError:
    _core = None

_BACKENDS = {"python": _pykernels}
if _core is not None:
    _BACKENDS["cython"] = _core

BACKEND = "cython" if _core is not None else "python"
_impl = _BACKENDS[BACKEND]

velocity_rhs = _impl.velocity_rhs
max_pairwise_distance = _impl.max_pairwise_distance
clean_trials = _impl.clean_trials


def available():
    return sorted(_BACKENDS)


def get(name=None):
    """Kernel module by name; ``None`` means the active one."""
    if name is None:
        return _impl
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} not available (have {available()})") from None
