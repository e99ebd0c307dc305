# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled batch kernels for weighted-automaton evaluation.

The single hot loop of the whole package is evaluating a long stream of
sequences against one automaton (Hankel fills issue millions of them).
Consecutive queries tend to share prefixes, so the kernel keeps a stack of
state vectors indexed by depth and only recomputes the tail that differs
from the previous query.  Results are bit-identical to evaluating each
sequence from scratch because the per-depth vector only ever depends on the
query's own prefix.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def eval_weights(const double[::1] alpha0,
                 const double[:, :, ::1] mats,
                 const double[::1] alpha_inf,
                 const int[::1] flat,
                 const long long[::1] offsets):
    """Weights of a batch of sequences.

    ``flat``/``offsets`` encode the batch in CSR style: query ``i`` is
    ``flat[offsets[i]:offsets[i+1]]``.  Symbol ids must already be validated
    against the alphabet.  Returns a float64 vector of raw series weights.
    """
    cdef Py_ssize_t n = offsets.shape[0] - 1
    cdef Py_ssize_t r = alpha0.shape[0]
    cdef Py_ssize_t i, j, k, d, length, lcp, shared, prev_start, prev_len, start
    cdef double acc

    cdef Py_ssize_t max_len = 0
    for i in range(n):
        length = offsets[i + 1] - offsets[i]
        if length > max_len:
            max_len = length

    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    stack_arr = np.empty((max_len + 1, r), dtype=np.float64)
    cdef double[:, ::1] stack = stack_arr

    for j in range(r):
        stack[0, j] = alpha0[j]

    prev_start = 0
    prev_len = 0
    for i in range(n):
        start = offsets[i]
        length = offsets[i + 1] - start
        shared = prev_len if prev_len < length else length
        lcp = 0
        while lcp < shared and flat[start + lcp] == flat[prev_start + lcp]:
            lcp += 1
        for d in range(lcp, length):
            sym = flat[start + d]
            for j in range(r):
                acc = 0.0
                for k in range(r):
                    acc += stack[d, k] * mats[sym, k, j]
                stack[d + 1, j] = acc
        acc = 0.0
        for k in range(r):
            acc += stack[length, k] * alpha_inf[k]
        out[i] = acc
        prev_start = start
        prev_len = length

    return out_arr


def eval_row_weights(const double[::1] alpha0,
                     const int[::1] head,
                     const double[:, :, ::1] mats,
                     const double[::1] alpha_inf,
                     const int[::1] flat,
                     const long long[::1] offsets):
    """Weights of ``head`` followed by each CSR-encoded suffix.

    The head is pushed through the matrices with the same arithmetic as
    the suffix steps, so a concatenation's weight does not depend on where
    the head/suffix boundary falls.  One call per Hankel row keeps the
    python-side loop out of the per-cell cost.
    """
    cdef Py_ssize_t n = offsets.shape[0] - 1
    cdef Py_ssize_t r = alpha0.shape[0]
    cdef Py_ssize_t h = head.shape[0]
    cdef Py_ssize_t i, j, k, d, length, lcp, shared, prev_start, prev_len, start
    cdef double acc

    cdef Py_ssize_t max_len = 0
    for i in range(n):
        length = offsets[i + 1] - offsets[i]
        if length > max_len:
            max_len = length

    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    stack_arr = np.empty((max_len + 1, r), dtype=np.float64)
    cdef double[:, ::1] stack = stack_arr
    config_arr = np.empty(r, dtype=np.float64)
    scratch_arr = np.empty(r, dtype=np.float64)
    cdef double[::1] config = config_arr
    cdef double[::1] scratch = scratch_arr

    for j in range(r):
        config[j] = alpha0[j]
    for d in range(h):
        sym = head[d]
        for j in range(r):
            acc = 0.0
            for k in range(r):
                acc += config[k] * mats[sym, k, j]
            scratch[j] = acc
        config, scratch = scratch, config
    for j in range(r):
        stack[0, j] = config[j]

    prev_start = 0
    prev_len = 0
    for i in range(n):
        start = offsets[i]
        length = offsets[i + 1] - start
        shared = prev_len if prev_len < length else length
        lcp = 0
        while lcp < shared and flat[start + lcp] == flat[prev_start + lcp]:
            lcp += 1
        for d in range(lcp, length):
            sym = flat[start + d]
            for j in range(r):
                acc = 0.0
                for k in range(r):
                    acc += stack[d, k] * mats[sym, k, j]
                stack[d + 1, j] = acc
        acc = 0.0
        for k in range(r):
            acc += stack[length, k] * alpha_inf[k]
        out[i] = acc
        prev_start = start
        prev_len = length

    return out_arr
