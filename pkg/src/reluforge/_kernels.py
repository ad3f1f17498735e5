"""Compiled forward pass over a packed CSR network."""

import numba
import numpy as np


@numba.njit(nogil=True, cache=True)
def forward(indptr, indices, data, bias, ptr_off, nz_off, rows, relu, X, buf_a, buf_b):
    """Evaluate all layers on a feature-major block ``X`` of shape (N_0, B).

    ``buf_a`` and ``buf_b`` are scratch buffers of shape (max width, B); the
    returned array is a fresh copy of the final activations, shape (N_L, B).
    """
    nb = X.shape[1]
    src = X
    n_layers = rows.shape[0]
    bias_off = 0
    for layer in range(n_layers):
        dst = buf_a if layer % 2 == 0 else buf_b
        p0 = ptr_off[layer]
        z0 = nz_off[layer]
        for i in range(rows[layer]):
            bi = bias[bias_off + i]
            for b in range(nb):
                dst[i, b] = bi
            for k in range(indptr[p0 + i], indptr[p0 + i + 1]):
                j = indices[z0 + k]
                w = data[z0 + k]
                for b in range(nb):
                    dst[i, b] += w * src[j, b]
            if relu[layer]:
                for b in range(nb):
                    if dst[i, b] < 0.0:
                        dst[i, b] = 0.0
        bias_off += rows[layer]
        src = dst
    out = np.empty((rows[n_layers - 1], nb))
    for i in range(rows[n_layers - 1]):
        for b in range(nb):
            out[i, b] = src[i, b]
    return out
