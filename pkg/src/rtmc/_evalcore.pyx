# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled strategy-evaluation kernel.

One call accumulates the stage cost of a fixed branch of channel 1
against a stack of channel-2 branches, with the per-evidence-cell optimal
estimate taken inside. This is the innermost loop of the brute-force
search; the numpy fallback in _evalcore_py.py computes the same thing.
"""

import numpy as np

cimport cython
from libc.float cimport DBL_MAX

BACKEND = "cython"


def row_costs(double[:, :, ::1] R, double[:, :, ::1] V, double[::1] out):
    """out[j] += sum_{e1,e2} min_s sum_k R[s,e1,k] * V[j,k,e2]."""
    cdef Py_ssize_t S = R.shape[0]
    cdef Py_ssize_t E1 = R.shape[1]
    cdef Py_ssize_t K = R.shape[2]
    cdef Py_ssize_t N = V.shape[0]
    cdef Py_ssize_t E2 = V.shape[2]
    cdef Py_ssize_t j, e1, e2, s, k
    cdef double best, c, acc
    with nogil:
        for j in range(N):
            acc = 0.0
            for e1 in range(E1):
                for e2 in range(E2):
                    best = DBL_MAX
                    for s in range(S):
                        c = 0.0
                        for k in range(K):
                            c += R[s, e1, k] * V[j, k, e2]
                        if c < best:
                            best = c
                    acc += best
            out[j] += acc
