# cython: boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled tag-stream kernels.

All timestamps are int64 picoseconds.  Inputs must be sorted ascending;
callers are responsible for validation (kept out of the hot path).
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def match_count(cnp.int64_t[::1] ts, cnp.int64_t[::1] ti, cnp.int64_t half_width):
    """Count coincidences between two sorted streams.

    Greedy earliest-compatible pairing: sweep both streams once, consume a
    (signal, idler) pair whenever |t_i - t_s| <= half_width.  Each tag joins
    at most one pair.  For sorted inputs this greedy yields the maximum
    matching, and the count is symmetric under swapping the streams.
    """
    cdef Py_ssize_t i = 0, j = 0
    cdef Py_ssize_t ns = ts.shape[0], ni = ti.shape[0]
    cdef cnp.int64_t dt
    cdef long long c = 0
    with nogil:
        while i < ns and j < ni:
            dt = ti[j] - ts[i]
            if dt < -half_width:
                j += 1
            elif dt > half_width:
                i += 1
            else:
                c += 1
                i += 1
                j += 1
    return int(c)


def match_indices(cnp.int64_t[::1] ts, cnp.int64_t[::1] ti, cnp.int64_t half_width):
    """Like match_count, but returns the paired (signal, idler) indices."""
    cdef Py_ssize_t i = 0, j = 0, c = 0
    cdef Py_ssize_t ns = ts.shape[0], ni = ti.shape[0]
    cdef Py_ssize_t cap = ns if ns < ni else ni
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out_s = np.empty(cap, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out_i = np.empty(cap, dtype=np.int64)
    cdef cnp.int64_t[::1] vs = out_s
    cdef cnp.int64_t[::1] vi = out_i
    cdef cnp.int64_t dt
    with nogil:
        while i < ns and j < ni:
            dt = ti[j] - ts[i]
            if dt < -half_width:
                j += 1
            elif dt > half_width:
                i += 1
            else:
                vs[c] = i
                vi[c] = j
                c += 1
                i += 1
                j += 1
    return out_s[:c], out_i[:c]


def delay_histogram(cnp.int64_t[::1] ts, cnp.int64_t[::1] ti,
                    cnp.int64_t bin_ps, cnp.int64_t span_ps):
    """Histogram of delays t_i - t_s over |delay| <= span_ps.

    Bins are centered on integer multiples of bin_ps; bin k collects
    delays in [k*bin - bin//2, k*bin + (bin - bin//2)).  Returns an int64
    array of length 2*(span_ps // bin_ps) + 1 (center bin at index n_half).
    """
    cdef Py_ssize_t n_half = span_ps // bin_ps
    cdef cnp.ndarray[cnp.int64_t, ndim=1] hist = np.zeros(2 * n_half + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] h = hist
    cdef Py_ssize_t i, j, lo = 0
    cdef Py_ssize_t ns = ts.shape[0], ni = ti.shape[0]
    cdef cnp.int64_t dt, k, reach = span_ps + bin_ps // 2
    with nogil:
        for i in range(ns):
            while lo < ni and ti[lo] - ts[i] < -reach:
                lo += 1
            j = lo
            while j < ni and ti[j] - ts[i] <= reach:
                dt = ti[j] - ts[i]
                k = (dt + bin_ps // 2) // bin_ps  # python floordiv semantics
                if -n_half <= k <= n_half:
                    h[k + n_half] += 1
                j += 1
    return hist


def dead_time_mask(cnp.int64_t[::1] t, cnp.int64_t dead_ps):
    """Non-paralyzable dead time: keep a tag iff >= dead_ps after last kept."""
    cdef Py_ssize_t n = t.shape[0]
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] keep = np.zeros(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] k = keep
    cdef cnp.int64_t last
    cdef Py_ssize_t i
    if n == 0:
        return keep.view(bool)
    with nogil:
        k[0] = 1
        last = t[0]
        for i in range(1, n):
            if t[i] - last >= dead_ps:
                k[i] = 1
                last = t[i]
    return keep.view(bool)
