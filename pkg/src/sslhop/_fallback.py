"""Pure numpy versions of the compiled kernels in ``_core.pyx``."""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def extract_patches(maps, window, stride):
    n, _, _, c = maps.shape
    view = sliding_window_view(maps, (window, window), axis=(1, 2))[:, ::stride, ::stride]
    # view axes: (n, oh, ow, c, dy, dx) -> rows flattened as (dy, dx, c)
    view = view.transpose(0, 1, 2, 4, 5, 3)
    return np.ascontiguousarray(view).reshape(-1, window * window * c)


def max_pool(maps, pool):
    n, h, w, c = maps.shape
    oh, ow = h // pool, w // pool
    blocks = maps[:, : oh * pool, : ow * pool].reshape(n, oh, pool, ow, pool, c)
    return np.ascontiguousarray(blocks.max(axis=(2, 4)))


def lex_order(rows):
    if rows.shape[0] < 2 or rows.shape[1] == 0:
        return np.arange(rows.shape[0], dtype=np.intp)
    return np.lexsort(rows.T[::-1])
