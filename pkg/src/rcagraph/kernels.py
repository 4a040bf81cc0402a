"""Backend selection for the hot training kernels.

Tries the compiled extension first and falls back to the numpy versions.
Set RCAGRAPH_BACKEND=python to force the fallback, =c to require the
extension (ImportError if it was not built). BACKEND names the active one.
"""

from __future__ import annotations

import os

from . import _kernels_py

_requested = os.environ.get("RCAGRAPH_BACKEND", "").lower()

if _requested == "python":
    BACKEND = "python"
    sgns_epoch = _kernels_py.sgns_epoch
    pegasos_train = _kernels_py.pegasos_train
else:
    try:
        from . import _kernels  # type: ignore[attr-defined]

        BACKEND = "c"
        sgns_epoch = _kernels.sgns_epoch
        pegasos_train = _kernels.pegasos_train
    except ImportError:
        if _requested == "c":
            raise
        BACKEND = "python"
        sgns_epoch = _kernels_py.sgns_epoch
        pegasos_train = _kernels_py.pegasos_train
