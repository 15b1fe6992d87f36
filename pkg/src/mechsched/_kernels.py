"""Hot loops: batched allocation and per-trial ratio evaluation.

Every kernel exists twice, a numba ``@njit`` version and a pure-numpy
version with the same signature. The public dispatchers at the bottom pick
one at import time; set ``MECHSCHED_DISABLE_NUMBA=1`` to force numpy (or
when numba is not importable). ``MECHSCHED_THREADS`` caps numba's worker
pool. Rows are independent, so results never depend on the thread count.

Mechanism K is evaluated on the normalized form

    p_(k) = r_k * int_0^1 prod_{i != k} (1 - r_i x) dx,   r_i = t_(1) / t_(i)

with Gauss-Legendre nodes on [0, 1]. The integrand is a polynomial of
degree n - 1, so ceil(n / 2) nodes integrate it exactly. Leave-one-out
products come from prefix and suffix products, so no factor is divided out.
"""

from __future__ import annotations

import functools
import os

import numpy as np
from scipy.special import roots_legendre

OPT, K, P = 0, 1, 2

# Nodes where the full product drops below this (scaled) bound are skipped.
# The product is non-increasing in x, so every later node is skipped too, and
# the total probability dropped is below 1e-18.
_DROP_TOL = 1e-18

_NUMPY_CHUNK_ELEMS = 4_000_000


def _numba_requested() -> bool:
    flag = os.environ.get("MECHSCHED_DISABLE_NUMBA", "").strip().lower()
    return flag in ("", "0", "false", "no")


try:
    if not _numba_requested():
        raise ImportError("numba disabled by MECHSCHED_DISABLE_NUMBA")
    import numba
    from numba import njit, prange

    # the system TBB may be too old for numba and warns on first launch
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
    USE_NUMBA = True
except ImportError:
    numba = None
    USE_NUMBA = False

BACKEND = "numba" if USE_NUMBA else "numpy"


@functools.lru_cache(maxsize=256)
def gauss_legendre_unit(q: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes (ascending) and weights mapped to [0, 1]."""
    if q < 1:
        raise ValueError(f"need at least one node, got {q}")
    x, w = roots_legendre(q)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def nodes_for(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Smallest exact rule for a degree n - 1 polynomial integrand."""
    return gauss_legendre_unit((n + 1) // 2)


def apply_thread_limit() -> int:
    """Apply ``MECHSCHED_THREADS`` to numba; returns the thread count in use."""
    raw = os.environ.get("MECHSCHED_THREADS")
    if not USE_NUMBA:
        return 1
    if raw is None or raw.strip() == "":
        numba.set_num_threads(numba.config.NUMBA_NUM_THREADS)
        return numba.config.NUMBA_NUM_THREADS
    try:
        want = int(raw)
    except ValueError:
        raise ValueError(f"MECHSCHED_THREADS must be a positive integer, got {raw!r}") from None
    if want < 1:
        raise ValueError(f"MECHSCHED_THREADS must be a positive integer, got {raw!r}")
    use = min(want, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(use)
    return use


# ---------------------------------------------------------------- numpy path


def _k_sorted_np(r: np.ndarray, x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Unnormalized K probabilities for rows of sorted ratios ``r`` (B, n)."""
    B, n = r.shape
    out = np.empty((B, n))
    step = max(1, _NUMPY_CHUNK_ELEMS // max(1, n * x.size))
    for lo in range(0, B, step):
        rr = r[lo : lo + step]
        f = 1.0 - rr[:, :, None] * x
        pre = np.ones_like(f)
        suf = np.ones_like(f)
        if n > 1:
            pre[:, 1:] = np.cumprod(f[:, :-1], axis=1)
            suf[:, :-1] = np.cumprod(f[:, :0:-1], axis=1)[:, ::-1]
        out[lo : lo + step] = rr * ((pre * suf) @ w)
    return out


def _allocate_batch_np(costs, mech, x, w):
    B, n = costs.shape
    if mech == P:
        inv = 1.0 / costs
        return inv / inv.sum(axis=1, keepdims=True), 0.0
    if mech == OPT:
        probs = np.zeros((B, n))
        probs[np.arange(B), np.argmin(costs, axis=1)] = 1.0
        return probs, 0.0
    order = np.argsort(costs, axis=1, kind="stable")
    s = np.take_along_axis(costs, order, axis=1)
    p = _k_sorted_np(s[:, :1] / s, x, w)
    tot = p.sum(axis=1, keepdims=True)
    dev = float(np.max(np.abs(tot - 1.0))) if B else 0.0
    probs = np.empty_like(p)
    np.put_along_axis(probs, order, p / tot, axis=1)
    return probs, dev


def _ratio_batch_np(costs, mech, x, w):
    B, m, n = costs.shape
    flat = costs.reshape(B * m, n)
    opt = flat.min(axis=1)
    dev = 0.0
    if mech == OPT:
        sc = opt
    elif mech == P:
        inv = 1.0 / flat
        sc = ((inv / inv.sum(axis=1, keepdims=True)) * flat).sum(axis=1)
    else:
        s = np.sort(flat, axis=1)
        p = _k_sorted_np(s[:, :1] / s, x, w)
        tot = p.sum(axis=1)
        dev = float(np.max(np.abs(tot - 1.0))) if B else 0.0
        sc = ((p / tot[:, None]) * s).sum(axis=1)
    num = sc.reshape(B, m).sum(axis=1)
    den = opt.reshape(B, m).sum(axis=1)
    return num / den, dev


# ---------------------------------------------------------------- numba path

if USE_NUMBA:

    @njit(cache=True, nogil=True)
    def _k_sorted_nb(r, x, w, out):
        n = r.size
        cut = _DROP_TOL * (1.0 - x[x.size - 1]) / n
        pre = np.empty(n)
        for i in range(n):
            out[i] = 0.0
        for j in range(x.size):
            xj = x[j]
            acc = 1.0
            for i in range(n):
                pre[i] = acc
                acc *= 1.0 - r[i] * xj
            if acc < cut:
                break
            suf = 1.0
            for i in range(n - 1, -1, -1):
                out[i] += w[j] * pre[i] * suf
                suf *= 1.0 - r[i] * xj
        tot = 0.0
        for i in range(n):
            out[i] *= r[i]
            tot += out[i]
        return tot

    @njit(parallel=True, cache=True, nogil=True)
    def _allocate_batch_nb(costs, mech, x, w):
        B, n = costs.shape
        probs = np.zeros((B, n))
        devs = np.zeros(B)
        for b in prange(B):
            t = costs[b]
            if mech == OPT:
                probs[b, np.argmin(t)] = 1.0
            elif mech == P:
                acc = 0.0
                for i in range(n):
                    acc += 1.0 / t[i]
                for i in range(n):
                    probs[b, i] = (1.0 / t[i]) / acc
            else:
                order = np.argsort(t, kind="mergesort")
                r = np.empty(n)
                t1 = t[order[0]]
                for i in range(n):
                    r[i] = t1 / t[order[i]]
                p = np.empty(n)
                tot = _k_sorted_nb(r, x, w, p)
                devs[b] = abs(tot - 1.0)
                for i in range(n):
                    probs[b, order[i]] = p[i] / tot
        return probs, devs.max() if B else 0.0

    @njit(parallel=True, cache=True, nogil=True)
    def _ratio_batch_nb(costs, mech, x, w):
        B, m, n = costs.shape
        ratios = np.empty(B)
        devs = np.zeros(B)
        for b in prange(B):
            num = 0.0
            den = 0.0
            worst = 0.0
            for j in range(m):
                t = costs[b, j]
                if mech == K:
                    s = np.sort(t)
                    r = np.empty(n)
                    for i in range(n):
                        r[i] = s[0] / s[i]
                    p = np.empty(n)
                    tot = _k_sorted_nb(r, x, w, p)
                    worst = max(worst, abs(tot - 1.0))
                    sc = 0.0
                    for i in range(n):
                        sc += p[i] / tot * s[i]
                    num += sc
                    den += s[0]
                else:
                    lo = t[0]
                    acc = 0.0
                    for i in range(n):
                        lo = min(lo, t[i])
                        acc += 1.0 / t[i]
                    if mech == OPT:
                        num += lo
                    else:
                        for i in range(n):
                            num += (1.0 / t[i]) / acc * t[i]
                    den += lo
            ratios[b] = num / den
            devs[b] = worst
        return ratios, devs.max() if B else 0.0


# ---------------------------------------------------------------- dispatch


def allocate_batch(costs: np.ndarray, mech: int) -> tuple[np.ndarray, float]:
    """Allocate every row of ``costs`` (B, n), original machine order.

    Returns the normalized probabilities and the largest pre-normalization
    deviation |sum - 1| seen (0 for P and OPT).
    """
    costs = np.ascontiguousarray(costs, dtype=np.float64)
    x, w = nodes_for(costs.shape[1])
    if USE_NUMBA:
        apply_thread_limit()
        probs, dev = _allocate_batch_nb(costs, mech, x, w)
        return probs, float(dev)
    return _allocate_batch_np(costs, mech, x, w)


def ratio_batch(costs: np.ndarray, mech: int) -> tuple[np.ndarray, float]:
    """Per-trial ratio sum_j SC(t^j) / sum_j t^j_(1) for costs of shape (B, m, n)."""
    costs = np.ascontiguousarray(costs, dtype=np.float64)
    x, w = nodes_for(costs.shape[2])
    if USE_NUMBA:
        apply_thread_limit()
        ratios, dev = _ratio_batch_nb(costs, mech, x, w)
        return ratios, float(dev)
    return _ratio_batch_np(costs, mech, x, w)
