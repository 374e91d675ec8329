"""Kernel dispatch: compiled extension when available, numpy fallback otherwise.

Set ``POSECUT_PURE_PYTHON=1`` to force the fallback.  ``BACKEND`` names the
implementation in use.
"""

import os

from posecut import _pykernels

if os.environ.get("POSECUT_PURE_PYTHON"):
    _impl = _pykernels
else:
    try:
        from posecut import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = "python" if _impl is _pykernels else "cython"

se2_linearize = _impl.se2_linearize
se2_loop_errors = _impl.se2_loop_errors
max_clique = _impl.max_clique
best_partition = _impl.best_partition
