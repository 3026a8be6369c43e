"""Hot numeric kernels with numba-accelerated and pure-numpy implementations.

The numba path is used by default when numba imports cleanly; set the
environment variable ``FSDM_DISABLE_NUMBA=1`` before import to force the
pure-numpy fallback (used by the benchmark suite and as a safety hatch).

Both paths implement identical math with per-item summation order, so
results agree to floating-point noise and batched evaluation is bitwise
equal to one-at-a-time evaluation within a path.
"""

from __future__ import annotations

import os

import numpy as np

USING_NUMBA = False

if os.environ.get("FSDM_DISABLE_NUMBA", "0") != "1":
    try:
        from numba import njit

        USING_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USING_NUMBA = False


# ---------------------------------------------------------------------------
# Mixture marginals: the exact-denoiser inner loop.
#
# Inputs:
#   log_prior : (Nh,)      log weight of each of the Nh = 5^E hypnograms
#   hyp       : (Nh, E)    stage index of each hypnogram per epoch (uint8)
#   a         : (B, 5, E)  per-epoch additive log-likelihood terms; the
#                          total log weight of hypnogram h for batch item b
#                          is log_prior[h] + sum_e a[b, hyp[h,e], e]
# Output:
#   out       : (B, 5, E)  normalized mixture marginals
#                          out[b,s,e] = sum_{h: hyp[h,e]=s} w_h / sum_h w_h
# ---------------------------------------------------------------------------


def _mixture_marginals_numpy(log_prior, hyp, a):
    n_hyp, n_epochs = hyp.shape
    batch = a.shape[0]
    out = np.empty((batch, 5, n_epochs))
    for b in range(batch):
        s = log_prior.copy()
        for e in range(n_epochs):
            s += a[b, hyp[:, e], e]
        m = s.max()
        if not np.isfinite(m):
            raise FloatingPointError("all mixture components have zero weight")
        w = np.exp(s - m)
        z = w.sum()
        for e in range(n_epochs):
            out[b, :, e] = np.bincount(hyp[:, e], weights=w, minlength=5) / z
    return out


if USING_NUMBA:

    @njit(cache=True)
    def _mixture_marginals_numba(log_prior, hyp, a):  # pragma: no cover - jitted
        n_hyp, n_epochs = hyp.shape
        batch = a.shape[0]
        out = np.zeros((batch, 5, n_epochs))
        for b in range(batch):
            m = -np.inf
            for h in range(n_hyp):
                s = log_prior[h]
                for e in range(n_epochs):
                    s += a[b, hyp[h, e], e]
                if s > m:
                    m = s
            if m == -np.inf or np.isnan(m):
                raise FloatingPointError("all mixture components have zero weight")
            z = 0.0
            for h in range(n_hyp):
                s = log_prior[h]
                for e in range(n_epochs):
                    s += a[b, hyp[h, e], e]
                w = np.exp(s - m)
                z += w
                for e in range(n_epochs):
                    out[b, hyp[h, e], e] += w
            for e in range(n_epochs):
                for st in range(5):
                    out[b, st, e] /= z
        return out


def mixture_marginals(log_prior, hyp, a):
    """Dispatch to the active implementation; see module docstring."""
    log_prior = np.ascontiguousarray(log_prior, dtype=np.float64)
    hyp = np.ascontiguousarray(hyp, dtype=np.uint8)
    a = np.ascontiguousarray(a, dtype=np.float64)
    if USING_NUMBA:
        return _mixture_marginals_numba(log_prior, hyp, a)
    return _mixture_marginals_numpy(log_prior, hyp, a)


# ---------------------------------------------------------------------------
# AMPD local-maxima scalogram.
#
# Stage 1 returns gamma[k-1] = count of i that are NOT k-local maxima,
# for scales k = 1..L.  Stage 2 returns the boolean mask of samples that
# are local maxima at every scale 1..lam (the detected peaks).
# ---------------------------------------------------------------------------


def _ampd_gamma_numpy(x, max_scale):
    n = x.shape[0]
    gamma = np.empty(max_scale, dtype=np.int64)
    for k in range(1, max_scale + 1):
        if 2 * k >= n:
            gamma[k - 1] = n
            continue
        core = (x[k:n - k] > x[: n - 2 * k]) & (x[k:n - k] > x[2 * k:])
        gamma[k - 1] = n - int(core.sum())
    return gamma


def _ampd_peaks_numpy(x, lam):
    n = x.shape[0]
    is_peak = np.zeros(n, dtype=np.bool_)
    if 2 * lam < n:
        core = np.ones(n - 2 * lam, dtype=np.bool_)
        for k in range(1, lam + 1):
            lo = lam - k
            hi = n - lam - k
            core &= (x[lam:n - lam] > x[lo:hi]) & (x[lam:n - lam] > x[lo + 2 * k:hi + 2 * k])
        is_peak[lam:n - lam] = core
    return is_peak


if USING_NUMBA:

    @njit(cache=True)
    def _ampd_gamma_numba(x, max_scale):  # pragma: no cover - jitted
        n = x.shape[0]
        gamma = np.empty(max_scale, dtype=np.int64)
        for k in range(1, max_scale + 1):
            if 2 * k >= n:
                gamma[k - 1] = n
                continue
            cnt = 0
            for i in range(k, n - k):
                if x[i] > x[i - k] and x[i] > x[i + k]:
                    cnt += 1
            gamma[k - 1] = n - cnt
        return gamma

    @njit(cache=True)
    def _ampd_peaks_numba(x, lam):  # pragma: no cover - jitted
        n = x.shape[0]
        is_peak = np.zeros(n, dtype=np.bool_)
        for i in range(lam, n - lam):
            ok = True
            for k in range(1, lam + 1):
                if not (x[i] > x[i - k] and x[i] > x[i + k]):
                    ok = False
                    break
            is_peak[i] = ok
        return is_peak


def ampd_gamma(x, max_scale):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if USING_NUMBA:
        return _ampd_gamma_numba(x, max_scale)
    return _ampd_gamma_numpy(x, max_scale)


def ampd_local_maxima(x, lam):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if USING_NUMBA:
        return _ampd_peaks_numba(x, lam)
    return _ampd_peaks_numpy(x, lam)
