"""Blocked, optionally threaded kernels for exact Euclidean distances.

Distances are accumulated in float64 from explicit coordinate
differences (never the expanded ``|a|^2 + |b|^2 - 2ab`` form), so the
values are bit-identical to a naive per-row computation.  Block sizes
are fixed functions of the input shapes: the thread count only decides
*which* worker fills a block, never what the block contains, which
keeps every result byte-identical across worker counts.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

_ROW_BLOCK = 128
_SCRATCH_ELEMS = 1 << 22  # cap on the (rows x refs x dim) difference buffer


def _ref_block(d: int) -> int:
    return max(16, _SCRATCH_ELEMS // (_ROW_BLOCK * max(d, 1)))


def _for_each_block(n_rows: int, fill, threads: int) -> None:
    bounds = [(s, min(s + _ROW_BLOCK, n_rows)) for s in range(0, n_rows, _ROW_BLOCK)]
    if threads <= 1 or len(bounds) <= 1:
        for s, e in bounds:
            fill(s, e)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for future in [pool.submit(fill, s, e) for s, e in bounds]:
            future.result()


def _as_f64(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def _distance_rows(queries: np.ndarray, refs: np.ndarray, out: np.ndarray) -> None:
    """Fill ``out`` with squared distances from each query row to every ref."""
    n, d = refs.shape
    step = _ref_block(d)
    for j in range(0, n, step):
        block = refs[j : j + step]
        diff = queries[:, None, :] - block[None, :, :]
        np.square(diff, out=diff)
        out[:, j : j + block.shape[0]] = diff.sum(axis=2)


def pairwise_distances(queries: np.ndarray, refs: np.ndarray, threads: int = 1) -> np.ndarray:
    """Full m x n Euclidean distance matrix in float64."""
    q, r = _as_f64(queries), _as_f64(refs)
    out = np.empty((q.shape[0], r.shape[0]))

    def fill(s, e):
        _distance_rows(q[s:e], r, out[s:e])

    _for_each_block(q.shape[0], fill, threads)
    return np.sqrt(out, out=out)


def kth_distances(
    queries: np.ndarray,
    refs: np.ndarray,
    k: int,
    exclude_self: bool = False,
    threads: int = 1,
) -> np.ndarray:
    """Distance from each query row to its k-th nearest reference row.

    The k-th nearest is the k-th order statistic of the distances, so
    duplicated points count with multiplicity.  With ``exclude_self``
    the reference set must be row-aligned with the queries and row i
    skips reference i.
    """
    q, r = _as_f64(queries), _as_f64(refs)
    out = np.empty(q.shape[0])

    def fill(s, e):
        d2 = np.empty((e - s, r.shape[0]))
        _distance_rows(q[s:e], r, d2)
        if exclude_self:
            d2[np.arange(e - s), np.arange(s, e)] = np.inf
        out[s:e] = np.partition(d2, k - 1, axis=1)[:, k - 1]

    _for_each_block(q.shape[0], fill, threads)
    return np.sqrt(out, out=out)


def membership_stats(
    points: np.ndarray,
    centers: np.ndarray,
    radii: np.ndarray,
    threads: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Hypersphere membership between two point sets.

    Returns ``(counts, covered)`` where ``counts[j]`` is the number of
    centers whose ball (non-strict radius) contains point j, and
    ``covered[i]`` says whether center i's ball contains any point.
    Per-block partial results are merged after the parallel section, so
    the output is independent of scheduling.
    """
    p, c = _as_f64(points), _as_f64(centers)
    m, n = p.shape[0], c.shape[0]
    counts = np.empty(m, dtype=np.int64)
    n_blocks = (m + _ROW_BLOCK - 1) // _ROW_BLOCK
    covered_parts = np.zeros((max(n_blocks, 1), n), dtype=bool)
    r = np.asarray(radii, dtype=np.float64)

    def fill(s, e):
        d2 = np.empty((e - s, n))
        _distance_rows(p[s:e], c, d2)
        # compare in distance units, not squared units, so exact boundary
        # ties behave identically to a direct transcription of the metric
        inside = np.sqrt(d2, out=d2) <= r[None, :]
        counts[s:e] = inside.sum(axis=1)
        covered_parts[s // _ROW_BLOCK] = inside.any(axis=0)

    _for_each_block(m, fill, threads)
    return counts, covered_parts.any(axis=0)
