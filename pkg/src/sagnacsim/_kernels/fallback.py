"""Pure-python kernels, semantically identical to the compiled versions.

Used when the compiled extension is unavailable (or forced via the
SAGNACSIM_PURE_PYTHON=1 environment variable).  Slower, same results.
"""

from __future__ import annotations

import numpy as np


def match_count(ts: np.ndarray, ti: np.ndarray, half_width: int) -> int:
    # Greedy earliest-compatible pairing, one pass.  Lists are much faster
    # than element-wise ndarray indexing here.
    s = ts.tolist()
    d = ti.tolist()
    ns, ni = len(s), len(d)
    i = j = 0
    c = 0
    while i < ns and j < ni:
        dt = d[j] - s[i]
        if dt < -half_width:
            j += 1
        elif dt > half_width:
            i += 1
        else:
            c += 1
            i += 1
            j += 1
    return c


def match_indices(ts: np.ndarray, ti: np.ndarray, half_width: int):
    s = ts.tolist()
    d = ti.tolist()
    ns, ni = len(s), len(d)
    i = j = 0
    out_s, out_i = [], []
    while i < ns and j < ni:
        dt = d[j] - s[i]
        if dt < -half_width:
            j += 1
        elif dt > half_width:
            i += 1
        else:
            out_s.append(i)
            out_i.append(j)
            i += 1
            j += 1
    return (np.array(out_s, dtype=np.int64), np.array(out_i, dtype=np.int64))


def delay_histogram(ts: np.ndarray, ti: np.ndarray, bin_ps: int, span_ps: int) -> np.ndarray:
    n_half = int(span_ps // bin_ps)
    hist = np.zeros(2 * n_half + 1, dtype=np.int64)
    if len(ts) == 0 or len(ti) == 0:
        return hist
    reach = span_ps + bin_ps // 2
    # Vectorized over all (signal, idler) pairs inside the span.
    lo = np.searchsorted(ti, ts - reach, side="left")
    hi = np.searchsorted(ti, ts + reach, side="right")
    counts = hi - lo
    src = np.repeat(ts, counts)
    idx = np.concatenate([np.arange(a, b) for a, b in zip(lo, hi)]) if counts.sum() else []
    if len(idx) == 0:
        return hist
    dt = ti[idx] - src
    k = (dt + bin_ps // 2) // bin_ps
    inside = (k >= -n_half) & (k <= n_half)
    np.add.at(hist, (k[inside] + n_half).astype(np.intp), 1)
    return hist


def dead_time_mask(t: np.ndarray, dead_ps: int) -> np.ndarray:
    n = len(t)
    keep = np.zeros(n, dtype=bool)
    if n == 0:
        return keep
    ts = t.tolist()
    keep[0] = True
    last = ts[0]
    for i in range(1, n):
        if ts[i] - last >= dead_ps:
            keep[i] = True
            last = ts[i]
    return keep
