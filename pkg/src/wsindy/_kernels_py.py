"""Pure-numpy versions of the compiled kernels, used when the extension is unavailable."""

import numpy as np

# cap on the number of gathered entries held in memory at once
_CHUNK_ENTRIES = 1 << 22


def accumulate(X, centers, offsets, W):
    """out[k, s, j] = sum_f W[s, f] * X[centers[k] + offsets[f], j]."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.int64)
    offsets = np.asarray(offsets, dtype=np.int64)
    W = np.ascontiguousarray(W, dtype=np.float64)
    K, F, J, S = len(centers), len(offsets), X.shape[1], W.shape[0]
    out = np.empty((K, S, J))
    step = max(1, _CHUNK_ENTRIES // max(1, F * J))
    for a in range(0, K, step):
        idx = centers[a : a + step, None] + offsets[None, :]
        out[a : a + step] = np.einsum("sf,kfj->ksj", W, X[idx], optimize=True)
    return out


def moving_sum_lastaxis(Y, width):
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    win = np.lib.stride_tricks.sliding_window_view(Y, width, axis=1)
    return win.sum(axis=-1)
