"""Hot numeric kernels for dynamic time warping.

Two interchangeable implementations exist for each kernel: a numba-compiled
loop nest and a vectorised numpy anti-diagonal sweep, which for ``pairwise``
runs over a padded batch of pairs at once. Both perform the same
floating point operations cell by cell, so they agree bit for bit. The active
backend is chosen at import time (see :mod:`msgait._accel`) and can be
switched with :func:`use_backend`.
"""
from contextlib import contextmanager

import numpy as np

from ._accel import HAVE_NUMBA, njit, prange

# -- numba implementations ----------------------------------------------------


@njit(cache=True, nogil=True)
def _accumulate_nb(a, b):
    n = a.shape[0]
    m = b.shape[0]
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        ai = a[i - 1]
        for j in range(1, m + 1):
            best = acc[i - 1, j - 1]
            up = acc[i - 1, j]
            left = acc[i, j - 1]
            if up < best:
                best = up
            if left < best:
                best = left
            acc[i, j] = abs(ai - b[j - 1]) + best
    return acc


@njit(cache=True, nogil=True)
def _distance_nb(a, b):
    n = a.shape[0]
    m = b.shape[0]
    prev = np.full(m + 1, np.inf)
    cur = np.full(m + 1, np.inf)
    prev[0] = 0.0
    for i in range(1, n + 1):
        ai = a[i - 1]
        cur[0] = np.inf
        for j in range(1, m + 1):
            best = prev[j - 1]
            up = prev[j]
            left = cur[j - 1]
            if up < best:
                best = up
            if left < best:
                best = left
            cur[j] = abs(ai - b[j - 1]) + best
        prev, cur = cur, prev
    return prev[m]


@njit(cache=True, parallel=True)
def _pairwise_nb(flat_a, off_a, flat_b, off_b):
    na = off_a.shape[0] - 1
    nb = off_b.shape[0] - 1
    out = np.empty((na, nb))
    for k in prange(na * nb):
        i = k // nb
        j = k % nb
        out[i, j] = _distance_nb(flat_a[off_a[i]:off_a[i + 1]], flat_b[off_b[j]:off_b[j + 1]])
    return out


# -- numpy implementations ----------------------------------------------------


def _accumulate_np(a, b):
    n = a.shape[0]
    m = b.shape[0]
    cost = np.abs(a[:, None] - b[None, :])
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    # sweep anti-diagonals i + j = d (1-based); every cell on a diagonal only
    # depends on the two previous diagonals
    for d in range(2, n + m + 1):
        i = np.arange(max(1, d - m), min(n, d - 1) + 1)
        j = d - i
        best = np.minimum(np.minimum(acc[i - 1, j - 1], acc[i - 1, j]), acc[i, j - 1])
        acc[i, j] = cost[i - 1, j - 1] + best
    return acc


def _distance_np(a, b):
    return _accumulate_np(a, b)[-1, -1]


PAIR_BATCH = 512


def _distance_batch_np(seqs_a, seqs_b):
    """Distances of the pairs ``(seqs_a[k], seqs_b[k])`` in one padded sweep.

    Cell ``(n, m)`` depends only on cells ``(<= n, <= m)``, so padding past a
    pair's own lengths never reaches the cell that is read back.
    """
    p = len(seqs_a)
    na = np.array([s.shape[0] for s in seqs_a])
    nb = np.array([s.shape[0] for s in seqs_b])
    n, m = int(na.max()), int(nb.max())
    a = np.zeros((p, n))
    b = np.zeros((p, m))
    for k in range(p):
        a[k, :na[k]] = seqs_a[k]
        b[k, :nb[k]] = seqs_b[k]
    cost = np.abs(a[:, :, None] - b[:, None, :])
    acc = np.full((p, n + 1, m + 1), np.inf)
    acc[:, 0, 0] = 0.0
    for d in range(2, n + m + 1):
        i = np.arange(max(1, d - m), min(n, d - 1) + 1)
        j = d - i
        best = np.minimum(np.minimum(acc[:, i - 1, j - 1], acc[:, i - 1, j]), acc[:, i, j - 1])
        acc[:, i, j] = cost[:, i - 1, j - 1] + best
    return acc[np.arange(p), na, nb]


def _pairwise_np(seqs_a, seqs_b):
    seqs_a = [_as_seq(s) for s in seqs_a]
    seqs_b = [_as_seq(s) for s in seqs_b]
    out = np.empty((len(seqs_a), len(seqs_b)))
    if out.size == 0:
        return out
    rows, cols = np.divmod(np.arange(out.size), len(seqs_b))
    for start in range(0, out.size, PAIR_BATCH):
        r, c = rows[start:start + PAIR_BATCH], cols[start:start + PAIR_BATCH]
        out[r, c] = _distance_batch_np([seqs_a[k] for k in r], [seqs_b[k] for k in c])
    return out


# -- dispatch -------------------------------------------------------------------

_backend = "numba" if HAVE_NUMBA else "numpy"


def backend():
    """Name of the active backend, ``"numba"`` or ``"numpy"``."""
    return _backend


def set_backend(name):
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is unavailable or disabled")
    _backend = name


@contextmanager
def use_backend(name):
    """Temporarily switch the kernel backend."""
    old = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(old)


class EvaluationCount:
    """Number of DTW distances evaluated while a :func:`count_evaluations` block is open."""

    def __init__(self):
        self.count = 0


_counters = []


@contextmanager
def count_evaluations():
    """Count DTW distance evaluations made through this module, on any backend."""
    counter = EvaluationCount()
    _counters.append(counter)
    try:
        yield counter
    finally:
        _counters.remove(counter)


def _tally(n):
    for c in _counters:
        c.count += n


def _as_seq(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def accumulate(a, b):
    """Accumulated-cost matrix, padded with an infinite first row and column.

    ``acc[i, j]`` (1-based in both sequences) is the minimal total cost of a
    warping path from ``(1, 1)`` to ``(i, j)``; ``acc[0, 0]`` is the zero seed.
    """
    a, b = _as_seq(a), _as_seq(b)
    if _backend == "numba":
        return _accumulate_nb(a, b)
    return _accumulate_np(a, b)


def distance(a, b):
    """DTW distance only, without the path (linear memory under numba)."""
    a, b = _as_seq(a), _as_seq(b)
    _tally(1)
    if _backend == "numba":
        return float(_distance_nb(a, b))
    return float(_distance_np(a, b))


def _flatten(seqs):
    seqs = [_as_seq(s) for s in seqs]
    off = np.zeros(len(seqs) + 1, dtype=np.int64)
    off[1:] = np.cumsum([s.shape[0] for s in seqs])
    flat = np.concatenate(seqs) if seqs else np.empty(0)
    return flat, off


def pairwise(seqs_a, seqs_b):
    """Matrix of DTW distances between every sequence of ``seqs_a`` and ``seqs_b``.

    Under numba the pairs are evaluated in parallel; the result does not
    depend on scheduling since each cell is written exactly once.
    """
    _tally(len(seqs_a) * len(seqs_b))
    if _backend == "numba":
        fa, oa = _flatten(seqs_a)
        fb, ob = _flatten(seqs_b)
        return _pairwise_nb(fa, oa, fb, ob)
    return _pairwise_np(seqs_a, seqs_b)
