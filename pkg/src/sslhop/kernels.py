"""Backend selection for the patch, pooling and row-ordering kernels.

The compiled extension is used when it imports; ``SSLHOP_BACKEND=python``
forces the numpy fallback. Patch and pooling kernels take float64 batches
shaped ``(images, height, width, channels)``.
"""
import os

import numpy as np

from . import _fallback

_compiled = None
if os.environ.get("SSLHOP_BACKEND", "").lower() != "python":
    try:
        from . import _core as _compiled
    except ImportError:
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _fallback


def _batch(maps):
    return np.ascontiguousarray(maps, dtype=np.float64)


def extract_patches_batch(maps, window, stride, backend=None):
    """Valid-mode sliding windows of every map, rows in (image, row, col) scan order."""
    impl = _select(backend)
    return impl.extract_patches(_batch(maps), int(window), int(stride))


def max_pool_batch(maps, pool, backend=None):
    impl = _select(backend)
    return impl.max_pool(_batch(maps), int(pool))


def lex_order(rows, backend=None):
    """Permutation sorting rows lexicographically; equal rows keep their input order."""
    impl = _select(backend)
    return impl.lex_order(np.ascontiguousarray(rows, dtype=np.float64))


def _select(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _fallback
    if backend == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled sslhop kernels are not built")
        return _compiled
    raise ValueError(f"unknown backend {backend!r}")
