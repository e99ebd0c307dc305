"""Pure-python twin of the compiled batch kernel.

Used when the extension module is unavailable (or disabled through the
``WADISTILL_PURE_PYTHON`` environment variable).  Same prefix-sharing
algorithm, same CSR batch encoding; only the per-symbol step runs through
numpy instead of a C loop.
"""

import numpy as np


def eval_weights(alpha0, mats, alpha_inf, flat, offsets):
    return _shared_walk(alpha0, mats, alpha_inf, flat, offsets)


def eval_row_weights(alpha0, head, mats, alpha_inf, flat, offsets):
    config = np.asarray(alpha0, dtype=np.float64)
    for sym in head:
        config = config @ mats[sym]
    return _shared_walk(config, mats, alpha_inf, flat, offsets)


def _shared_walk(start_vec, mats, alpha_inf, flat, offsets):
    n = len(offsets) - 1
    out = np.empty(n, dtype=np.float64)
    if n == 0:
        return out
    lengths = np.diff(offsets)
    max_len = int(lengths.max())
    r = start_vec.shape[0]
    stack = np.empty((max_len + 1, r), dtype=np.float64)
    stack[0] = start_vec

    prev_start = 0
    prev_len = 0
    for i in range(n):
        start = int(offsets[i])
        length = int(lengths[i])
        shared = min(prev_len, length)
        lcp = 0
        while lcp < shared and flat[start + lcp] == flat[prev_start + lcp]:
            lcp += 1
        for d in range(lcp, length):
            np.dot(stack[d], mats[flat[start + d]], out=stack[d + 1])
        out[i] = np.dot(stack[length], alpha_inf)
        prev_start = start
        prev_len = length
    return out
