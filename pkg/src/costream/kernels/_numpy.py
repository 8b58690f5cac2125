"""Numpy implementations of the hot kernels.

This is the fallback backend used when the compiled extension is
unavailable; costream.kernels picks between the two at import time.
"""

import numpy as np


def matmul(a: np.ndarray, b: np.ndarray, trans_a: bool = False, trans_b: bool = False) -> np.ndarray:
    if trans_a:
        a = a.T
    if trans_b:
        b = b.T
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul inner dims {a.shape[1]} and {b.shape[0]} differ")
    return a @ b


def row_softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def row_softmax_grad(y: np.ndarray, gy: np.ndarray) -> np.ndarray:
    dot = (y * gy).sum(axis=1, keepdims=True)
    return y * (gy - dot)


def pairwise_sqdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"pairwise_sqdist widths {a.shape[1]} and {b.shape[1]} differ")
    aa = np.einsum("ij,ij->i", a, a)[:, None]
    bb = np.einsum("ij,ij->i", b, b)[None, :]
    out = aa + bb - 2.0 * (a @ b.T)
    # expansion can go a hair negative from rounding; distances are >= 0
    np.maximum(out, 0.0, out=out)
    return out
