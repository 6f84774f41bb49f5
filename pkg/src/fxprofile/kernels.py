"""Backend selection for the compressor inner loop.

The Cython extension is used when it imports; otherwise the pure-Python
loop is used. Set ``FXPROFILE_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

if os.environ.get("FXPROFILE_PURE_PYTHON"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

comp_run = _impl.comp_run
comp_run_rows = _impl.comp_run_rows
