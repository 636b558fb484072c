"""Hot loops of the rolling-window framework.

Every kernel exists twice: a numba ``@njit`` version and a vectorised numpy
twin with identical signature and results.  The numba path is used when numba
imports and ``PROXYCAL_DISABLE_NUMBA`` is unset (or ``0``).  Both paths are
importable explicitly (``*_numba`` / ``*_numpy``) so tests and the benchmark
can compare them.

KS statistics are carried as integers: with ``n1`` site values and ``n2``
proxy values, ``D * n1 * n2`` is an integer, which keeps ``D == 0`` exact for
identical windows and lets the exact p-value compare path heights without
rounding.
"""
from __future__ import annotations

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


def _numba_requested() -> bool:
    flag = os.environ.get("PROXYCAL_DISABLE_NUMBA", "").strip().lower()
    return flag in ("", "0", "false", "no")


NUMBA_ENABLED = numba is not None and _numba_requested()


# ---------------------------------------------------------------------------
# numpy twins


def window_moments_numpy(y, z, window, stride):
    """Per-window counts, means and n-1 variances of ``y`` and ``z``.

    Windows are trailing: the k-th window ends at index ``window - 1 + k*stride``.
    NaN marks a missing value.  Variance is NaN below two present values and
    exactly 0.0 for a constant window.
    """
    out = []
    for x in (y, z):
        w = sliding_window_view(np.asarray(x, dtype=np.float64), window)[::stride]
        present = ~np.isnan(w)
        n = present.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = np.where(present, w, 0.0).sum(axis=1) / n
            dev = np.where(present, w - mean[:, None], 0.0)
            var = (dev * dev).sum(axis=1) / (n - 1)
        mean[n == 0] = np.nan
        var[n < 2] = np.nan
        lo = np.where(present, w, np.inf).min(axis=1)
        hi = np.where(present, w, -np.inf).max(axis=1)
        var[(n >= 2) & (lo == hi)] = 0.0
        out.extend([n.astype(np.int64), mean, var])
    ny, my, vy, nz, mz, vz = out
    return ny, my, vy, nz, mz, vz


def window_ks_numpy(y, z, window, stride):
    """Per-window two-sample KS distance as the integer ``D * n1 * n2``.

    Returns ``(dint, n1, n2)``; ``dint`` is -1 where either window is empty.
    Ties are resolved by evaluating the ECDF gap only after the last member
    of each block of equal pooled values.
    """
    yw = sliding_window_view(np.asarray(y, dtype=np.float64), window)[::stride]
    zw = sliding_window_view(np.asarray(z, dtype=np.float64), window)[::stride]
    py, pz = ~np.isnan(yw), ~np.isnan(zw)
    n1 = py.sum(axis=1).astype(np.int64)
    n2 = pz.sum(axis=1).astype(np.int64)
    vals = np.concatenate([yw, zw], axis=1)
    steps = np.concatenate(
        [np.where(py, n2[:, None], 0), np.where(pz, -n1[:, None], 0)], axis=1
    )
    order = np.argsort(vals, axis=1, kind="stable")
    svals = np.take_along_axis(vals, order, axis=1)
    height = np.cumsum(np.take_along_axis(steps, order, axis=1), axis=1)
    boundary = np.ones_like(svals, dtype=bool)
    boundary[:, :-1] = svals[:, :-1] != svals[:, 1:]
    dint = np.where(boundary, np.abs(height), 0).max(axis=1)
    dint[(n1 == 0) | (n2 == 0)] = -1
    return dint, n1, n2


def ks_exact_sf_numpy(pooled, n1, dint):
    """P(D >= observed) under random relabelling of the pooled sample.

    ``pooled`` must be sorted.  Counts lattice paths (i site draws, j proxy
    draws after k pooled values) that stay strictly below the observed height
    at every tie-block boundary; the p-value is one minus their share.
    """
    n = len(pooled)
    n2 = n - n1
    counts = np.zeros(n1 + 1)
    counts[0] = 1.0
    for k in range(1, n + 1):
        nxt = np.zeros(n1 + 1)
        nxt[1:] += counts[:-1]  # k-th value goes to the site sample
        nxt += counts  # ... or to the proxy sample
        i = np.arange(n1 + 1)
        j = k - i
        nxt[(j < 0) | (j > n2)] = 0.0
        if k == n or pooled[k - 1] != pooled[k]:
            nxt[np.abs(i * n2 - j * n1) >= dint] = 0.0
        counts = nxt
    total = _binom(n, n1)
    return max(0.0, min(1.0, 1.0 - counts[n1] / total))


def _binom(n, k):
    out = 1.0
    for t in range(1, k + 1):
        out = out * (n - k + t) / t
    return round(out)


# ---------------------------------------------------------------------------
# numba kernels

if numba is not None:

    @numba.njit(cache=True)
    def _moments_one(x, window, stride, n_out, n, mean, var):
        for k in range(n_out):
            end = window - 1 + k * stride
            cnt = 0
            s = 0.0
            lo = np.inf
            hi = -np.inf
            for t in range(end - window + 1, end + 1):
                v = x[t]
                if not np.isnan(v):
                    cnt += 1
                    s += v
                    lo = min(lo, v)
                    hi = max(hi, v)
            n[k] = cnt
            if cnt == 0:
                mean[k] = np.nan
                var[k] = np.nan
                continue
            m = s / cnt
            mean[k] = m
            if cnt < 2:
                var[k] = np.nan
            elif lo == hi:
                var[k] = 0.0
            else:
                ss = 0.0
                for t in range(end - window + 1, end + 1):
                    v = x[t]
                    if not np.isnan(v):
                        ss += (v - m) * (v - m)
                var[k] = ss / (cnt - 1)

    @numba.njit(cache=True)
    def _window_moments_nb(y, z, window, stride):
        n_out = (len(y) - window) // stride + 1
        ny = np.empty(n_out, np.int64)
        nz = np.empty(n_out, np.int64)
        my = np.empty(n_out)
        vy = np.empty(n_out)
        mz = np.empty(n_out)
        vz = np.empty(n_out)
        _moments_one(y, window, stride, n_out, ny, my, vy)
        _moments_one(z, window, stride, n_out, nz, mz, vz)
        return ny, my, vy, nz, mz, vz

    @numba.njit(cache=True)
    def _present_sorted(x, start, stop):
        buf = np.empty(stop - start)
        cnt = 0
        for t in range(start, stop):
            if not np.isnan(x[t]):
                buf[cnt] = x[t]
                cnt += 1
        return np.sort(buf[:cnt])

    @numba.njit(cache=True)
    def _ks_dint_sorted(a, b):
        n1 = len(a)
        n2 = len(b)
        i = 0
        j = 0
        dmax = 0
        while i < n1 and j < n2:
            v = min(a[i], b[j])
            while i < n1 and a[i] == v:
                i += 1
            while j < n2 and b[j] == v:
                j += 1
            d = abs(i * n2 - j * n1)
            if d > dmax:
                dmax = d
        return dmax

    @numba.njit(cache=True)
    def _window_ks_nb(y, z, window, stride):
        n_out = (len(y) - window) // stride + 1
        dint = np.empty(n_out, np.int64)
        n1 = np.empty(n_out, np.int64)
        n2 = np.empty(n_out, np.int64)
        for k in range(n_out):
            end = window - 1 + k * stride
            a = _present_sorted(y, end - window + 1, end + 1)
            b = _present_sorted(z, end - window + 1, end + 1)
            n1[k] = len(a)
            n2[k] = len(b)
            if len(a) == 0 or len(b) == 0:
                dint[k] = -1
            else:
                dint[k] = _ks_dint_sorted(a, b)
        return dint, n1, n2

    @numba.njit(cache=True)
    def _ks_exact_sf_nb(pooled, n1, dint):
        n = len(pooled)
        n2 = n - n1
        counts = np.zeros(n1 + 1)
        counts[0] = 1.0
        for k in range(1, n + 1):
            nxt = np.zeros(n1 + 1)
            boundary = k == n or pooled[k - 1] != pooled[k]
            for i in range(n1 + 1):
                j = k - i
                if j < 0 or j > n2:
                    continue
                c = counts[i]
                if i > 0:
                    c += counts[i - 1]
                if boundary and abs(i * n2 - j * n1) >= dint:
                    c = 0.0
                nxt[i] = c
            counts = nxt
        total = 1.0
        for t in range(1, n1 + 1):
            total = total * (n - n1 + t) / t
        total = np.round(total)
        p = 1.0 - counts[n1] / total
        return min(1.0, max(0.0, p))


def window_moments_numba(y, z, window, stride):
    return _window_moments_nb(
        np.ascontiguousarray(y, dtype=np.float64),
        np.ascontiguousarray(z, dtype=np.float64),
        window,
        stride,
    )


def window_ks_numba(y, z, window, stride):
    return _window_ks_nb(
        np.ascontiguousarray(y, dtype=np.float64),
        np.ascontiguousarray(z, dtype=np.float64),
        window,
        stride,
    )


def ks_exact_sf_numba(pooled, n1, dint):
    return _ks_exact_sf_nb(np.ascontiguousarray(pooled, dtype=np.float64), n1, dint)


if NUMBA_ENABLED:
    window_moments = window_moments_numba
    window_ks = window_ks_numba
    ks_exact_sf = ks_exact_sf_numba
else:
    window_moments = window_moments_numpy
    window_ks = window_ks_numpy
    ks_exact_sf = ks_exact_sf_numpy
