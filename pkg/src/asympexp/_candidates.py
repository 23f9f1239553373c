"""BFS-ordered prefix families used by the heuristic modes.

For a base point ``x0`` the points are ordered by ``(d(x0, .), index)``.
The prefix of length ``L`` is the set of the first ``L`` points and its
complement is the matching suffix.  Neighbourhood sizes of every prefix
come from two rank statistics per point ``y``:

* cover time ``min rank(z)`` over ``z`` related to ``y``: ``y`` joins the
  neighbourhood of the prefix once ``L`` exceeds it;
* full time ``max rank(z)`` over the same ``z``: ``y`` stays in the
  neighbourhood of the suffix while ``L`` does not exceed it.
"""

from __future__ import annotations

import numpy as np

CHUNK_ELEMS = 4_000_000


def bfs_ranks(dist: np.ndarray) -> np.ndarray:
    """``rank[x0, y]`` = position of ``y`` in the BFS order from ``x0``."""
    n = dist.shape[0]
    order = np.argsort(dist, axis=1, kind="stable")
    rank = np.empty_like(order)
    rows = np.arange(n)[:, None]
    rank[rows, order] = np.arange(n)[None, :]
    return rank


def cover_and_full_times(rank: np.ndarray, rel: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per base point, min and max rank over the related points of each ``y``.

    Points with no related point get cover time ``n`` and full time ``-1``.
    """
    n = rank.shape[0]
    cover = np.empty((n, n), dtype=np.int64)
    full = np.empty((n, n), dtype=np.int64)
    step = max(1, CHUNK_ELEMS // max(1, n * n))
    for s in range(0, n, step):
        r = rank[s : s + step][:, None, :]
        cover[s : s + step] = np.where(rel[None], r, n).min(axis=2)
        full[s : s + step] = np.where(rel[None], r, -1).max(axis=2)
    return cover, full


def prefix_neighborhood_sizes(cover: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """``out[x0, i]`` = number of ``y`` whose cover time is below ``lengths[i]``."""
    srt = np.sort(cover, axis=1)
    return np.stack([np.searchsorted(row, lengths, side="left") for row in srt])


def suffix_neighborhood_sizes(full: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """``out[x0, i]`` = number of ``y`` whose full time is at least ``lengths[i]``."""
    n = full.shape[1]
    srt = np.sort(full, axis=1)
    return np.stack([n - np.searchsorted(row, lengths, side="left") for row in srt])


def prefix_set(rank: np.ndarray, x0: int, length: int) -> np.ndarray:
    return np.flatnonzero(rank[x0] < length)


def suffix_set(rank: np.ndarray, x0: int, length: int) -> np.ndarray:
    """Complement of the prefix of the given length."""
    return np.flatnonzero(rank[x0] >= length)


def level_lengths(dist: np.ndarray, x0: int) -> np.ndarray:
    """Prefix lengths that end exactly at a BFS level (closed balls about ``x0``)."""
    row = np.sort(dist[x0])
    ends = np.flatnonzero(np.r_[row[1:] != row[:-1], True]) + 1
    return ends
