"""Orthonormal DCT-II matrices and single-coefficient basis directions.

The 2-D transform of an H' x W' slice is A_H x A_W^T; its inverse is
A_H^T X A_W. A frequency index (t, c, i, j) picks one coefficient of one
frame/channel slice.
"""
from __future__ import annotations

from functools import lru_cache
from typing import NamedTuple

import numpy as np


class FrequencyIndex(NamedTuple):
    t: int
    c: int
    i: int
    j: int


@lru_cache(maxsize=64)
def _dct_matrix(d: int) -> np.ndarray:
    i = np.arange(d)[:, None]
    j = np.arange(d)[None, :]
    a = np.cos((j + 0.5) * np.pi / d * i)
    scale = np.full((d, 1), np.sqrt(2.0 / d))
    scale[0] = np.sqrt(1.0 / d)
    a = scale * a
    a.setflags(write=False)
    return a


def dct_matrix(d: int) -> np.ndarray:
    """A[i, j] = c(i) cos((j + 0.5) pi i / d); rows are orthonormal."""
    if int(d) != d or d < 1:
        raise ValueError(f"DCT order must be a positive integer, got {d}")
    return _dct_matrix(int(d))


def dct2(x: np.ndarray) -> np.ndarray:
    """Forward 2-D DCT over the first two axes of x."""
    ar = dct_matrix(x.shape[0])
    ac = dct_matrix(x.shape[1])
    return np.einsum("ai,ij...,bj->ab...", ar, x, ac)


def idct2(coef: np.ndarray) -> np.ndarray:
    ar = dct_matrix(coef.shape[0])
    ac = dct_matrix(coef.shape[1])
    return np.einsum("ai,ab...,bj->ij...", ar, coef, ac)


def basis_slice(i: int, j: int, rows: int, cols: int) -> np.ndarray:
    """Inverse 2-D DCT of a one-hot coefficient at (i, j): an outer product of two rows."""
    return np.outer(dct_matrix(rows)[i], dct_matrix(cols)[j])


def check_index(idx: FrequencyIndex, dims) -> None:
    T, R, Cc, C = dims
    for name, val, n in (("t", idx.t, T), ("c", idx.c, C), ("i", idx.i, R), ("j", idx.j, Cc)):
        if not 0 <= val < n:
            raise IndexError(f"frequency index {name}={val} outside [0, {n})")


def basis_direction(idx: FrequencyIndex, dims) -> np.ndarray:
    """Full (T, R, Cc, C) array that is zero except the inverse-DCT slice at (t, c).

    Unit l2 norm by construction.
    """
    idx = FrequencyIndex(*idx)
    check_index(idx, dims)
    out = np.zeros(dims, dtype=np.float64)
    out[idx.t, :, :, idx.c] = basis_slice(idx.i, idx.j, dims[1], dims[2])
    return out


def frequency_set(dims, ordering: str = "shuffle", seed: int | None = 0) -> np.ndarray:
    """All (t, c, i, j) indices of a (T, R, Cc, C) support as an (n, 4) int array.

    ordering: "low" sorts by i + j (ties by i, then t, then c); "shuffle" is a
    seeded uniform permutation.
    """
    T, R, Cc, C = dims
    t, c, i, j = np.meshgrid(np.arange(T), np.arange(C), np.arange(R), np.arange(Cc),
                             indexing="ij")
    idx = np.stack([t.ravel(), c.ravel(), i.ravel(), j.ravel()], axis=1)
    if ordering == "low":
        order = np.lexsort((idx[:, 1], idx[:, 0], idx[:, 2], idx[:, 2] + idx[:, 3]))
        return idx[order]
    if ordering == "shuffle":
        return idx[np.random.default_rng(seed).permutation(len(idx))]
    raise ValueError(f"unknown ordering {ordering!r}")
