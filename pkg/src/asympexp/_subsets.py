"""Bitmask tables for exhaustive subset enumeration on small pieces.

A subset of an ``n``-point piece is an integer mask; tables are indexed by
mask, so ``table[A]`` is a property of the subset ``A``.  Canonical witness
order is "smallest mask first".
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .errors import ExactTooLarge

MAX_EXACT_DEFAULT = 18
MAX_EXACT_HARD_CAP = 24


def check_exact(n: int, max_exact: int = MAX_EXACT_DEFAULT) -> None:
    if max_exact > MAX_EXACT_HARD_CAP:
        raise ValueError(f"max_exact is capped at {MAX_EXACT_HARD_CAP}, got {max_exact}")
    if n > max_exact:
        raise ExactTooLarge(n, max_exact)


def masks_from_relation(rel: np.ndarray) -> np.ndarray:
    """Row masks of a boolean relation: bit y of entry x set iff rel[x, y]."""
    n = rel.shape[0]
    weights = np.left_shift(np.int64(1), np.arange(n, dtype=np.int64))
    return (rel.astype(np.int64) * weights[None, :]).sum(axis=1)


def union_table(row_masks: np.ndarray) -> np.ndarray:
    """``table[A] = OR of row_masks[x] for x in A`` for every subset mask A."""
    n = len(row_masks)
    t = np.zeros(1 << n, dtype=np.int64)
    for i in range(n):
        h = 1 << i
        t[h : 2 * h] = t[:h] | row_masks[i]
    return t


def any_pair_table(row_masks: np.ndarray) -> np.ndarray:
    """``table[A]`` true iff some pair x, y in A is related (relation symmetric)."""
    n = len(row_masks)
    t = np.zeros(1 << n, dtype=bool)
    for i in range(n):
        h = 1 << i
        low = np.arange(h, dtype=np.int64)
        t[h : 2 * h] = t[:h] | ((row_masks[i] & low) != 0)
    return t


def popcount(a: np.ndarray) -> np.ndarray:
    return np.bitwise_count(a).astype(np.int64)


def all_masks(n: int) -> np.ndarray:
    return np.arange(1 << n, dtype=np.int64)


def members(mask: int) -> list[int]:
    out, i = [], 0
    mask = int(mask)
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def to_mask(points) -> int:
    m = 0
    for p in points:
        m |= 1 << int(p)
    return m


def as_fraction(x) -> Fraction:
    """Exact rational for a threshold; floats are read by their decimal repr."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    f = Fraction(repr(float(x)))
    if f.denominator > 10**12:
        f = f.limit_denominator(10**12)
    return f


def scaled_less(lhs: np.ndarray, rhs_count: np.ndarray, c: Fraction) -> np.ndarray:
    """Elementwise ``lhs < c * rhs_count`` on integer arrays, exactly."""
    return lhs * c.denominator < rhs_count * c.numerator


def scaled_greater(lhs: np.ndarray, rhs_count: np.ndarray, c: Fraction) -> np.ndarray:
    return lhs * c.denominator > rhs_count * c.numerator


def ceil_fraction_times(alpha: Fraction, n: int) -> int:
    q = alpha * n
    return -((-q.numerator) // q.denominator)


def mask_bits(masks: np.ndarray, n: int) -> np.ndarray:
    """Boolean membership matrix, one row per mask."""
    return ((np.asarray(masks, dtype=np.int64)[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(bool)


def mask_indices(masks: np.ndarray, n: int, size: int) -> np.ndarray:
    """Sorted member indices of masks that all have exactly ``size`` members."""
    bits = mask_bits(masks, n)
    return np.nonzero(bits)[1].reshape(len(masks), size)
