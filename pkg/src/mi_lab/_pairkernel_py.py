"""Pure numpy fallback with the same signatures as the compiled pair kernel."""

import numpy as np


def _act(z, act):
    return np.maximum(z, 0.0) if act == 0 else np.tanh(z)


def pair_forward(A, B, w, b, act):
    z = A[:, None, :] + B[None, :, :]
    return _act(z, act) @ w + b


def pair_backward(A, B, w, G, act):
    z = A[:, None, :] + B[None, :, :]
    if act == 0:
        h = np.maximum(z, 0.0)
        dz = (z > 0.0) * (G[:, :, None] * w)
    else:
        h = np.tanh(z)
        dz = (1.0 - h * h) * (G[:, :, None] * w)
    dw = np.einsum("ij,ijk->k", G, h)
    return dz.sum(axis=1), dz.sum(axis=0), dw
