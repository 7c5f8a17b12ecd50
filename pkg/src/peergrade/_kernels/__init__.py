"""Kernel backend selection.

The compiled extension (``peergrade._kernels._core``) is used when available;
otherwise the pure-Python mirror (``_pure``) takes over.  Set the environment
variable ``PEERGRADE_BACKEND`` to ``python`` or ``cython`` to force a choice.
"""

import os

from peergrade._kernels import _pure as python_impl

try:
    from peergrade._kernels import _core as cython_impl
except ImportError:
    cython_impl = None

_requested = os.environ.get("PEERGRADE_BACKEND", "").strip().lower()
if _requested == "python":
    active = python_impl
elif _requested == "cython":
    if cython_impl is None:
        raise ImportError(
            "PEERGRADE_BACKEND=cython but the compiled extension is not built; "
            "run `pip install -e .` (or `python setup.py build_ext --inplace`)"
        )
    active = cython_impl
elif _requested:
    raise ImportError(f"unknown PEERGRADE_BACKEND value: {_requested!r}")
else:
    active = cython_impl if cython_impl is not None else python_impl

BACKEND = active.BACKEND


def backends():
    """Mapping of backend name to module, for benchmarks and equivalence tests."""
    out = {"python": python_impl}
    if cython_impl is not None:
        out["cython"] = cython_impl
    return out
