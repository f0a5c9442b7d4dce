"""Numeric core with a compiled fast path and a pure-numpy fallback.

The Cython extension is used when it imported cleanly; set
``WNCS_PURE_PYTHON=1`` to force the fallback (useful for benchmarking
and for environments without a compiler).
"""

import os

from . import _pure

if os.environ.get("WNCS_PURE_PYTHON", "") in ("1", "true", "yes"):
    _impl = _pure
    BACKEND = "python"
else:
    try:
        from . import _speedups as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _pure
        BACKEND = "python"

periodic_kernel_matrix = _impl.periodic_kernel_matrix
policy_rollout = _impl.policy_rollout


def available_backends():
    """Names of importable backends (the compiled one may be absent)."""
    names = ["python"]
    try:
        from . import _speedups  # noqa: F401

        names.insert(0, "cython")
    except ImportError:
        pass
    return names
