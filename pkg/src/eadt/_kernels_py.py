"""Numpy lane of the pixel kernels.

Mirrors the signatures of the compiled ``eadt._kernels`` extension; the
active lane is chosen in ``eadt._backend``. Every function fills a
caller-allocated output buffer so both lanes behave identically, and all
probability comparisons and accumulations happen in float64 to match the
compiled lane bit for bit.

Buffer conventions: probability grids are C-contiguous float32 (C, H, W);
mask grids are uint8 0/1 of the same layout; count outputs are int64.
"""
from __future__ import annotations

import numpy as np


def binarize(p, threshold, out):
    """out[c,y,x] = p[c,y,x] > threshold (strict), compared in float64."""
    np.greater(p.astype(np.float64, copy=False), float(threshold),
               out=out.view(bool))


def count_above(p, threshold, out):
    """Per-class count of values strictly above threshold."""
    out[:] = (p.astype(np.float64, copy=False) > float(threshold)).sum(axis=(1, 2))


def positive_areas(m, out):
    """Per-class count of set pixels in a 0/1 uint8 grid."""
    out[:] = m.sum(axis=(1, 2), dtype=np.int64)


def triple_threshold(p, max_thresh, min_thresh, areas, out):
    """High-confidence area gate followed by per-class binarization.

    A class plane whose count of values above ``max_thresh`` is strictly
    below ``areas[c]`` comes out all zero; otherwise it is ``p > min_thresh``.
    """
    p64 = p.astype(np.float64, copy=False)
    for c in range(p.shape[0]):
        if int((p64[c] > float(max_thresh)).sum()) < int(areas[c]):
            out[c] = 0
        else:
            np.greater(p64[c], float(min_thresh), out=out[c].view(bool))


def pair_counts(a, b, out):
    """Per-class (intersection, sum_a, sum_b) for two 0/1 uint8 grids."""
    out[:, 0] = (a & b).sum(axis=(1, 2), dtype=np.int64)
    out[:, 1] = a.sum(axis=(1, 2), dtype=np.int64)
    out[:, 2] = b.sum(axis=(1, 2), dtype=np.int64)


def mean_stack(stack, out):
    """Mean over the leading axis of a (K, C, H, W) float32 stack.

    Accumulates per pixel in float64 in stack order, then rounds once to
    float32, so the result is bit-identical to the compiled lane.
    """
    acc = np.zeros(stack.shape[1:], dtype=np.float64)
    for k in range(stack.shape[0]):
        acc += stack[k]
    acc /= stack.shape[0]
    out[:] = acc.astype(np.float32)
