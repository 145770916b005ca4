"""Binary indexed tree over nonnegative float weights.

The tree is stored 1-based in an array of length ``size + 1`` where
``size`` is a power of two, so ``tree[size]`` is the grand total and
selection is a top-down descent.
"""

from __future__ import annotations

import numpy as np
from numba import njit


def tree_size(n_leaves: int) -> int:
    size = 1
    while size < n_leaves:
        size <<= 1
    return size


@njit(cache=True)
def fw_build(tree, leaves):
    tree[:] = 0.0
    size = tree.size - 1
    for i in range(leaves.size):
        tree[i + 1] = leaves[i]
    for i in range(1, size + 1):
        parent = i + (i & -i)
        if parent <= size:
            tree[parent] += tree[i]


@njit(cache=True)
def fw_add(tree, i, delta):
    size = tree.size - 1
    i += 1
    while i <= size:
        tree[i] += delta
        i += i & -i


@njit(cache=True)
def fw_total(tree):
    return tree[tree.size - 1]


@njit(cache=True)
def fw_prefix(tree, i):
    """Sum of leaves 0..i-1."""
    s = 0.0
    while i > 0:
        s += tree[i]
        i -= i & -i
    return s


@njit(cache=True)
def fw_find(tree, leaves, w):
    """Leaf ``i`` with prefix(i) <= w < prefix(i+1), and the residual ``w - prefix(i)``.

    Roundoff can push the descent past the last positive leaf; in that case
    the last positive leaf is returned with its full weight as residual bound.
    """
    size = tree.size - 1
    pos = 0
    step = size
    while step > 0:
        nxt = pos + step
        if nxt <= size and tree[nxt] <= w:
            pos = nxt
            w -= tree[nxt]
        step >>= 1
    if pos >= leaves.size or leaves[pos] <= 0.0:
        i = min(pos, leaves.size - 1)
        while i > 0 and leaves[i] <= 0.0:
            i -= 1
        return i, leaves[i] * 0.999999999999
    if w >= leaves[pos]:
        w = leaves[pos] * 0.999999999999
    return pos, w


def build(leaves: np.ndarray) -> np.ndarray:
    tree = np.zeros(tree_size(max(1, leaves.size)) + 1)
    fw_build(tree, np.asarray(leaves, dtype=float))
    return tree
