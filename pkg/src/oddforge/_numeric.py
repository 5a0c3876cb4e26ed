"""Compiled inner loops for affinity evaluation and nearest-neighbour search.

Both loops fix the floating-point evaluation order: each query's product runs
over anchors in the order given, and each squared distance sums coordinates
in index order. Parallelism is only ever across query points.
"""

import math
import os
import warnings

import numba
import numpy as np
from numba import njit, prange

# Old system TBB: numba falls back to another layer on its own, just noisily.
warnings.filterwarnings("ignore", message="The TBB threading layer requires")

# exp(-0.5 * q) for q above this is < 2**-55, so 1 - a rounds to exactly 1.0
# and skipping the factor leaves the product bit-identical.
_Q_CUTOFF = 80.0


@njit(parallel=True, cache=True)
def _affinity_batch(X, C, S, out):
    m, n = X.shape
    N = C.shape[0]
    for p in prange(m):
        prod = 1.0
        best = 0.0
        for i in range(N):
            q = 0.0
            for k in range(n):
                d = X[p, k] - C[i, k]
                q += d * d / S[i, k]
                if q > _Q_CUTOFF:
                    break
            if q > _Q_CUTOFF:
                continue
            a = math.exp(-0.5 * q)
            prod *= 1.0 - a
            if a > best:
                best = a
            if prod == 0.0:
                break
        # 1 - (1 - a) can round below a; the exact value never does.
        out[p] = max(1.0 - prod, best)


@njit(cache=True)
def _local_batch(x, C, S, out):
    N, n = C.shape
    for i in range(N):
        q = 0.0
        for k in range(n):
            d = x[k] - C[i, k]
            q += d * d / S[i, k]
        out[i] = math.exp(-0.5 * q)


@njit(cache=True)
def _nn_brute(P, dist, idx):
    N, n = P.shape
    for i in range(N):
        best = np.inf
        bj = -1
        for j in range(N):
            if j == i:
                continue
            s = 0.0
            for k in range(n):
                d = P[i, k] - P[j, k]
                s += d * d
            if s < best:
                best = s
                bj = j
        idx[i] = bj
        dist[i] = math.sqrt(best) if bj >= 0 else 0.0


def affinity_batch(X: np.ndarray, C: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Global affinity of every row of ``X`` against anchors ``C`` with variances ``S``."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    out = np.empty(X.shape[0])
    if X.shape[0]:
        _affinity_batch(X, np.ascontiguousarray(C), np.ascontiguousarray(S), out)
    return out


def local_batch(x: np.ndarray, C: np.ndarray, S: np.ndarray) -> np.ndarray:
    out = np.empty(C.shape[0])
    _local_batch(np.ascontiguousarray(x, dtype=np.float64), np.ascontiguousarray(C),
                 np.ascontiguousarray(S), out)
    return out


def nearest_neighbours(P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact brute-force nearest neighbour of each row (self excluded).

    Ties go to the lowest index. A single point gets distance 0 and index -1.
    """
    P = np.ascontiguousarray(P, dtype=np.float64)
    dist = np.empty(P.shape[0])
    idx = np.empty(P.shape[0], dtype=np.int64)
    _nn_brute(P, dist, idx)
    return dist, idx


def configure_threads(env_var: str = "ODDFORGE_THREADS") -> int:
    """Cap numba's worker pool from the environment. Affects speed only."""
    raw = os.environ.get(env_var)
    if raw:
        try:
            want = int(raw)
        except ValueError:
            want = 0
        if want >= 1:
            numba.set_num_threads(min(want, numba.config.NUMBA_NUM_THREADS))
    return numba.get_num_threads()
