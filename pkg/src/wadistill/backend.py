"""Select the batch-evaluation kernel at import time.

The compiled extension is preferred; setting ``WADISTILL_PURE_PYTHON=1``
forces the numpy fallback (useful for the kernel benchmark and for
debugging).  Both implementations share one contract, so callers never
branch on the backend.
"""

import os

if os.environ.get("WADISTILL_PURE_PYTHON"):
    from . import _fallback as _impl

    BACKEND = "python"
else:
    try:
        from . import _speedups as _impl

        BACKEND = "compiled"
    except ImportError:
        from . import _fallback as _impl

        BACKEND = "python"

eval_weights = _impl.eval_weights
eval_row_weights = _impl.eval_row_weights


def available_backends():
    """Name -> kernel module for every importable backend (benchmark use)."""
    from . import _fallback

    backends = {"python": _fallback}
    try:
        from . import _speedups

        backends["compiled"] = _speedups
    except ImportError:
        pass
    return backends


def flatten_batch(seqs):
    """CSR-encode a list of symbol-id sequences for the kernels."""
    import numpy as np

    offsets = np.zeros(len(seqs) + 1, dtype=np.int64)
    total = 0
    for i, s in enumerate(seqs):
        total += len(s)
        offsets[i + 1] = total
    flat_list = []
    for s in seqs:
        flat_list.extend(s)
    flat = np.asarray(flat_list, dtype=np.int32)
    return flat, offsets
