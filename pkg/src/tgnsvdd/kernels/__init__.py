"""Kernel backend selection.

The hot loops (GRU cell forward/backward, temporal-neighbor gathering,
isolation-forest traversal) exist twice: a compiled Cython extension
(``_cyext``) and a pure-numpy reference (``pyref``).  The compiled backend is
preferred when importable; setting ``TGNSVDD_PURE_PY=1`` forces the pure
backend (useful for debugging and for verifying backend equivalence).
"""

from __future__ import annotations

import os

from . import pyref

HAVE_EXT = False
_impl = pyref

if not os.environ.get("TGNSVDD_PURE_PY"):
    try:
        from . import _cyext  # type: ignore[attr-defined]

        HAVE_EXT = True
        _impl = _cyext
    except ImportError:
        pass

BACKEND = _impl.BACKEND


def get_kernels():
    """The active backend module (``compiled`` or ``pure``)."""
    return _impl
