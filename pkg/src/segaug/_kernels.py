"""Hot inner loops: im2col / col2im and sign-assignment enumeration.

Each kernel has a numba ``@njit`` implementation and a pure-numpy fallback.
The numba path is used when numba imports and ``SEGAUG_NUMBA`` is not ``"0"``.
Both paths produce identical results (the column layout and the summation
order of the reductions are the same).
"""

from __future__ import annotations

import os

import numpy as np

try:  # pragma: no cover - exercised implicitly
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

USE_NUMBA = _HAVE_NUMBA and os.environ.get("SEGAUG_NUMBA", "1") != "0"


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# im2col / col2im
#
# Column layout: cols[(c*kh + i)*kw + j, (n*Ho + y)*Wo + x] = xpad[n, c, y*s + i, x*s + j]
# ---------------------------------------------------------------------------


def _im2col_numpy(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    n, c = xp.shape[:2]
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
    # (N, C, Ho, Wo, kh, kw) -> (C, kh, kw, N, Ho, Wo)
    return np.ascontiguousarray(win.transpose(1, 4, 5, 0, 2, 3)).reshape(c * kh * kw, n * ho * wo)


def _col2im_numpy(cols: np.ndarray, shape: tuple, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    n, c, hp, wp = shape
    out = np.zeros(shape, dtype=cols.dtype)
    c6 = cols.reshape(c, kh, kw, n, ho, wo)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * (ho - 1) + 1 : stride, j : j + stride * (wo - 1) + 1 : stride] += c6[
                :, i, j
            ].transpose(1, 0, 2, 3)
    return out


if _HAVE_NUMBA:

    # Indexing goes through 4-D views rather than flat offsets: LLVM only
    # vectorizes the innermost loop when it can see the row structure.

    @njit(cache=True)
    def _im2col_nb(xp, kh, kw, stride, ho, wo):  # pragma: no cover - compiled
        n, c, hp, wp = xp.shape
        cols = np.empty((c * kh * kw, n, ho, wo), dtype=xp.dtype)
        for ci in range(c):
            for i in range(kh):
                for j in range(kw):
                    r = (ci * kh + i) * kw + j
                    for b in range(n):
                        for y in range(ho):
                            yy = y * stride + i
                            if stride == 1:
                                for x in range(wo):
                                    cols[r, b, y, x] = xp[b, ci, yy, j + x]
                            else:
                                for x in range(wo):
                                    cols[r, b, y, x] = xp[b, ci, yy, j + x * stride]
        return cols.reshape(c * kh * kw, n * ho * wo)

    @njit(cache=True)
    def _col2im_nb(cols2, n, c, hp, wp, kh, kw, stride, ho, wo):  # pragma: no cover - compiled
        cols = cols2.reshape(c * kh * kw, n, ho, wo)
        out = np.zeros((n, c, hp, wp), dtype=cols2.dtype)
        for b in range(n):
            for ci in range(c):
                for i in range(kh):
                    for j in range(kw):
                        r = (ci * kh + i) * kw + j
                        for y in range(ho):
                            yy = y * stride + i
                            if stride == 1:
                                for x in range(wo):
                                    out[b, ci, yy, j + x] += cols[r, b, y, x]
                            else:
                                for x in range(wo):
                                    out[b, ci, yy, j + x * stride] += cols[r, b, y, x]
        return out

    @njit(cache=True)
    def _count_le_nb(ranks2, threshold2):  # pragma: no cover - compiled
        # Gray-code walk: consecutive masks differ in one bit, so the positive
        # rank sum is updated in O(1) per assignment
        n = ranks2.shape[0]
        total = 0
        for r in ranks2:
            total += r
        s = 0
        count = 1 if min(0, total) <= threshold2 else 0
        for m in range(1, 1 << n):
            k = 0
            while not (m >> k) & 1:
                k += 1
            if ((m ^ (m >> 1)) >> k) & 1:
                s += ranks2[k]
            else:
                s -= ranks2[k]
            if min(s, total - s) <= threshold2:
                count += 1
        return count


def im2col(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """Unfold a padded NCHW array into a (C*kh*kw, N*Ho*Wo) column matrix."""
    if USE_NUMBA:
        return _im2col_nb(np.ascontiguousarray(xp), kh, kw, stride, ho, wo)
    return _im2col_numpy(xp, kh, kw, stride, ho, wo)


def col2im(cols: np.ndarray, shape: tuple, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add columns back into a padded NCHW array."""
    if USE_NUMBA:
        n, c, hp, wp = shape
        return _col2im_nb(np.ascontiguousarray(cols), n, c, hp, wp, kh, kw, stride, ho, wo)
    return _col2im_numpy(cols, shape, kh, kw, stride, ho, wo)


# ---------------------------------------------------------------------------
# Exact Wilcoxon null distribution by enumeration
# ---------------------------------------------------------------------------

_BLOCK_BITS = 14


def _count_le_numpy(ranks2: np.ndarray, threshold2: int) -> int:
    n = ranks2.shape[0]
    total = int(ranks2.sum())
    lo = min(n, _BLOCK_BITS)
    low_masks = np.arange(1 << lo, dtype=np.int64)
    low_bits = (low_masks[:, None] >> np.arange(lo)) & 1
    low_sums = low_bits @ ranks2[:lo]
    count = 0
    for high in range(1 << (n - lo)):
        hs = 0
        for k in range(n - lo):
            if (high >> k) & 1:
                hs += int(ranks2[lo + k])
        s = low_sums + hs
        count += int(np.count_nonzero(np.minimum(s, total - s) <= threshold2))
    return count


def count_sign_assignments(ranks2: np.ndarray, threshold2: int) -> int:
    """Count sign assignments whose min(W+, W-) is at most the threshold.

    Ranks and threshold are given doubled so tied (half-integer) average
    ranks stay integral.
    """
    ranks2 = np.ascontiguousarray(ranks2, dtype=np.int64)
    if USE_NUMBA:
        return int(_count_le_nb(ranks2, np.int64(threshold2)))
    return _count_le_numpy(ranks2, int(threshold2))
