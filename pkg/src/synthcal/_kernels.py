"""Hot loops with a numba backend and a pure-numpy fallback.

The numba versions are used when numba imports cleanly and the environment
variable ``SYNTHCAL_DISABLE_NUMBA`` is unset (or "0"). Both backends are always
importable as ``*_numpy`` / ``*_numba`` so they can be compared directly.

Parallel loops only ever split work across independent output slots and count
with integers, so results never depend on the thread count.
"""

import math
import os

import numpy as np

# Fixed bisection depth: the bracket width after 36 halvings is below 1.5e-11.
KL_BISECT_STEPS = 36

CLT, KL, BERNSTEIN = 0, 1, 2
CONSTRUCTOR_CODES = {"clt": CLT, "kl": KL, "bernstein": BERNSTEIN}


def _flag_disabled():
    return os.environ.get("SYNTHCAL_DISABLE_NUMBA", "0") not in ("", "0")


try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
    # skip the TBB probe, which warns on mismatched system TBB builds
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _flag_disabled()


# ---------------------------------------------------------------- numpy


def _kl_np(q, p):
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(q > 0.0, q * np.log(q / p), 0.0)
        t2 = np.where(q < 1.0, (1.0 - q) * np.log((1.0 - q) / (1.0 - p)), 0.0)
    return t1 + t2


def kl_bounds_numpy(ybar, thr):
    """Endpoints of {p : KL(ybar || p) <= thr}, elementwise.

    Each endpoint is the innermost bisection point still inside the set, so
    the returned interval never pokes outside the true one.
    """
    ybar = np.asarray(ybar, dtype=np.float64)
    thr = np.broadcast_to(np.asarray(thr, dtype=np.float64), ybar.shape)
    # lower side: KL decreasing on (0, ybar)
    lo = np.zeros_like(ybar)
    hi = ybar.copy()
    for _ in range(KL_BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        inside = _kl_np(ybar, mid) <= thr
        hi = np.where(inside, mid, hi)
        lo = np.where(inside, lo, mid)
    lower = np.where(_kl_np(ybar, np.zeros_like(ybar)) <= thr, 0.0, hi)
    # upper side: KL increasing on (ybar, 1)
    lo = ybar.copy()
    hi = np.ones_like(ybar)
    for _ in range(KL_BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        inside = _kl_np(ybar, mid) <= thr
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    upper = np.where(_kl_np(ybar, np.ones_like(ybar)) <= thr, 1.0, lo)
    return lower, upper


def coverage_counts_numpy(prefix, mu, dilation, crit, code, min_k=1, range_width=1.0):
    """Count paths whose binary prefix interval covers ``mu``, for k = 1..K.

    prefix: (R, K) integer running sums of 0/1 draws; mu: (R,) targets.
    crit is z for CLT, log(2/alpha) for KL and log(4/alpha) for Bernstein.
    Prefixes shorter than min_k (and Bernstein with k < 2) use the universe.
    """
    prefix = np.asarray(prefix)
    R, K = prefix.shape
    k = np.arange(1, K + 1, dtype=np.float64)
    yb = prefix / k
    m = np.asarray(mu, dtype=np.float64)[:, None]
    if code == CLT:
        hw = crit * np.sqrt(yb * (1.0 - yb)) * np.sqrt(dilation / k)
        cov = np.abs(yb - m) <= hw
    elif code == KL:
        cov = _kl_np(yb, np.broadcast_to(m, yb.shape)) <= dilation * crit / k
    elif code == BERNSTEIN:
        km1 = np.maximum(k - 1.0, 1.0)
        r = (np.sqrt(yb * (1.0 - yb)) * np.sqrt(2.0 * dilation * crit / k)
             + 7.0 * dilation * range_width * crit / (3.0 * km1))
        cov = (np.abs(yb - m) <= r) | (k < 2)
    else:
        raise ValueError(f"unknown constructor code {code}")
    cov = cov | (k < min_k)
    return cov.sum(axis=0).astype(np.int64)


# ---------------------------------------------------------------- numba

if HAVE_NUMBA:

    @njit(cache=True)
    def _kl_scalar(q, p):
        total = 0.0
        if q > 0.0:
            if p <= 0.0:
                return math.inf
            total += q * math.log(q / p)
        if q < 1.0:
            if p >= 1.0:
                return math.inf
            total += (1.0 - q) * math.log((1.0 - q) / (1.0 - p))
        return total

    @njit(cache=True, parallel=True)
    def _kl_bounds_nb(ybar, thr, lower, upper):
        for i in prange(ybar.size):
            y = ybar[i]
            t = thr[i]
            lo = 0.0
            hi = y
            for _ in range(KL_BISECT_STEPS):
                mid = 0.5 * (lo + hi)
                if _kl_scalar(y, mid) <= t:
                    hi = mid
                else:
                    lo = mid
            lower[i] = 0.0 if _kl_scalar(y, 0.0) <= t else hi
            lo = y
            hi = 1.0
            for _ in range(KL_BISECT_STEPS):
                mid = 0.5 * (lo + hi)
                if _kl_scalar(y, mid) <= t:
                    lo = mid
                else:
                    hi = mid
            upper[i] = 1.0 if _kl_scalar(y, 1.0) <= t else lo

    @njit(cache=True, parallel=True)
    def _coverage_nb(prefix_t, mu, dilation, crit, code, min_k, range_width, out):
        K, R = prefix_t.shape
        for j in prange(K):
            k = j + 1.0
            if k < min_k or (code == 2 and k < 2):
                out[j] = R
                continue
            count = 0
            for r in range(R):
                yb = prefix_t[j, r] / k
                if code == 0:
                    hw = crit * math.sqrt(yb * (1.0 - yb)) * math.sqrt(dilation / k)
                    if abs(yb - mu[r]) <= hw:
                        count += 1
                elif code == 1:
                    if _kl_scalar(yb, mu[r]) <= dilation * crit / k:
                        count += 1
                else:
                    rad = (math.sqrt(yb * (1.0 - yb)) * math.sqrt(2.0 * dilation * crit / k)
                           + 7.0 * dilation * range_width * crit / (3.0 * (k - 1.0)))
                    if abs(yb - mu[r]) <= rad:
                        count += 1
            out[j] = count

    def kl_bounds_numba(ybar, thr):
        ybar = np.asarray(ybar, dtype=np.float64)
        thr = np.broadcast_to(np.asarray(thr, dtype=np.float64), ybar.shape)
        flat_y = np.ascontiguousarray(ybar).ravel()
        flat_t = np.ascontiguousarray(thr).ravel()
        lower = np.empty_like(flat_y)
        upper = np.empty_like(flat_y)
        _kl_bounds_nb(flat_y, flat_t, lower, upper)
        return lower.reshape(ybar.shape), upper.reshape(ybar.shape)

    def coverage_counts_numba(prefix, mu, dilation, crit, code, min_k=1, range_width=1.0):
        # column-major walk: each k reads one contiguous row
        prefix_t = np.ascontiguousarray(np.asarray(prefix, dtype=np.int64).T)
        out = np.empty(prefix_t.shape[0], dtype=np.int64)
        _coverage_nb(prefix_t, np.ascontiguousarray(mu, dtype=np.float64), float(dilation),
                     float(crit), int(code), float(min_k), float(range_width), out)
        return out

else:  # pragma: no cover
    kl_bounds_numba = None
    coverage_counts_numba = None


def set_threads(n):
    """Cap the numba worker pool; a no-op for the numpy backend."""
    if n is not None and HAVE_NUMBA:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def backend():
    return "numba" if USE_NUMBA else "numpy"


def kl_bounds(ybar, thr):
    if USE_NUMBA:
        return kl_bounds_numba(ybar, thr)
    return kl_bounds_numpy(ybar, thr)


def coverage_counts(prefix, mu, dilation, crit, code, min_k=1, range_width=1.0):
    if USE_NUMBA:
        return coverage_counts_numba(prefix, mu, dilation, crit, code, min_k, range_width)
    return coverage_counts_numpy(prefix, mu, dilation, crit, code, min_k, range_width)
