"""Tensor kernels for inference, in optimized and naive reference form.

Layout convention is channel-last: spatial tensors are (H, W, C), conv
weights are (kh, kw, C_in, C_out), dense weights (N_in, N_out). The naive
variants are deliberately plain loops; they exist as oracles for the
optimized ones and as the non-vectorized path of the benchmark harness.

Integer kernels accumulate in 32 bits. The optimized integer path runs the
accumulation through float64 matmul: every partial product and sum stays far
below 2^53, where float64 arithmetic on integers is exact, so the result is
bit-identical to true int32 accumulation while using the fast BLAS path.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch

BN_EPS = 1e-5


def _same_pad(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    ph, pw = kh // 2, kw // 2
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((ph, ph), (pw, pw), (0, 0)))


def _windows(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """All kh x kw windows of a padded (H, W, C) tensor -> (H, W, kh, kw, C)."""
    v = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(0, 1))
    return v.transpose(0, 1, 3, 4, 2)


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Same-padded stride-1 convolution via im2col + matmul."""
    kh, kw, cin, cout = w.shape
    if x.shape[-1] != cin:
        raise ShapeMismatch(f"conv input has {x.shape[-1]} channels, weight wants {cin}")
    h, wd = x.shape[:2]
    cols = _windows(_same_pad(x, kh, kw), kh, kw).reshape(h * wd, kh * kw * cin)
    out = cols @ w.reshape(kh * kw * cin, cout)
    out += b
    return out.reshape(h, wd, cout)


def conv2d_naive(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    kh, kw, cin, cout = w.shape
    h, wd = x.shape[:2]
    xp = _same_pad(x, kh, kw)
    wflat = w.reshape(kh * kw * cin, cout)
    out = np.empty((h, wd, cout), dtype=x.dtype)
    for i in range(h):
        for j in range(wd):
            window = xp[i : i + kh, j : j + kw].reshape(-1)
            for o in range(cout):
                out[i, j, o] = np.dot(window, wflat[:, o]) + b[o]
    return out


def upconv2(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Transposed convolution, kernel 2, stride 2: exactly doubles H and W."""
    kh, kw, cin, cout = w.shape
    if (kh, kw) != (2, 2):
        raise ShapeMismatch("up-convolution kernel must be 2x2")
    if x.shape[-1] != cin:
        raise ShapeMismatch(f"upconv input has {x.shape[-1]} channels, weight wants {cin}")
    h, wd = x.shape[:2]
    out = np.einsum("ijc,abco->iajbo", x, w, optimize=True)
    out = out.reshape(2 * h, 2 * wd, cout) + b
    return out


def upconv2_naive(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    h, wd, cin = x.shape
    cout = w.shape[-1]
    out = np.empty((2 * h, 2 * wd, cout), dtype=x.dtype)
    for i in range(h):
        for j in range(wd):
            for a in range(2):
                for bb in range(2):
                    for o in range(cout):
                        out[2 * i + a, 2 * j + bb, o] = (
                            np.dot(x[i, j], w[a, bb, :, o]) + b[o]
                        )
    return out


def maxpool2(x: np.ndarray) -> np.ndarray:
    h, wd, c = x.shape
    if h % 2 or wd % 2:
        raise ShapeMismatch(f"maxpool2 needs even spatial dims, got {(h, wd)}")
    return x.reshape(h // 2, 2, wd // 2, 2, c).max(axis=(1, 3))


def maxpool2_naive(x: np.ndarray) -> np.ndarray:
    h, wd, c = x.shape
    out = np.empty((h // 2, wd // 2, c), dtype=x.dtype)
    for i in range(h // 2):
        for j in range(wd // 2):
            for ch in range(c):
                block = x[2 * i : 2 * i + 2, 2 * j : 2 * j + 2, ch]
                out[i, j, ch] = block.max()
    return out


def dense(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Affine map over the last axis; leading axes are batch/spatial."""
    if x.shape[-1] != w.shape[0]:
        raise ShapeMismatch(f"dense input width {x.shape[-1]} != weight rows {w.shape[0]}")
    return x @ w + b


def dense_naive(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    flat = x.reshape(-1, x.shape[-1])
    out = np.empty((flat.shape[0], w.shape[1]), dtype=x.dtype)
    for n in range(flat.shape[0]):
        for o in range(w.shape[1]):
            out[n, o] = np.dot(flat[n], w[:, o]) + b[o]
    return out.reshape(*x.shape[:-1], w.shape[1])


def batchnorm_infer(x, scale, offset, mean, var, eps: float = BN_EPS):
    inv = scale / np.sqrt(var + eps)
    return (x - mean) * inv + offset


def relu(x):
    return np.maximum(x, 0)


def softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def band_norm(x: np.ndarray) -> np.ndarray:
    """Divide each spectral vector by its band sum; all-zero vectors stay zero."""
    s = x.sum(axis=-1, keepdims=True)
    out = np.divide(x, s, out=np.zeros_like(x), where=s > 0)
    return out


def zscore(x: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return (x - mean) / std


# ---------------------------------------------------------------------------
# integer kernels (int8 data, int32 accumulators)

_ACC_LIMIT = 2**31


def _check_acc_bound(n_terms: int, bias: np.ndarray | None):
    """Worst-case |sum| of n_terms int8*uint8-range products plus bias."""
    worst = n_terms * 255 * 127 + (int(np.abs(bias).max()) if bias is not None else 0)
    if worst >= _ACC_LIMIT:
        raise ShapeMismatch(
            f"int32 accumulator could overflow: worst case {worst} >= 2^31"
        )


def _exact_int_matmul(a: np.ndarray, bm: np.ndarray) -> np.ndarray:
    # float64 is exact for integer sums below 2^53; checked far stricter above
    return np.rint(a.astype(np.float64) @ bm.astype(np.float64)).astype(np.int64)


def conv2d_int(xq, x_zp: int, wq, bias_q) -> np.ndarray:
    """Integer convolution: sum((xq - x_zp) * wq) + bias, int32 accumulation."""
    kh, kw, cin, cout = wq.shape
    _check_acc_bound(kh * kw * cin, bias_q)
    xc = xq.astype(np.int32) - np.int32(x_zp)
    h, wd = xc.shape[:2]
    cols = _windows(_same_pad(xc, kh, kw), kh, kw).reshape(h * wd, kh * kw * cin)
    acc = _exact_int_matmul(cols, wq.reshape(kh * kw * cin, cout))
    acc += bias_q.astype(np.int64)
    return acc.reshape(h, wd, cout).astype(np.int32)


def conv2d_int_naive(xq, x_zp: int, wq, bias_q) -> np.ndarray:
    kh, kw, cin, cout = wq.shape
    xc = xq.astype(np.int64) - x_zp
    h, wd = xc.shape[:2]
    xp = _same_pad(xc, kh, kw)
    wflat = wq.reshape(kh * kw * cin, cout).astype(np.int64)
    out = np.empty((h, wd, cout), dtype=np.int32)
    for i in range(h):
        for j in range(wd):
            window = xp[i : i + kh, j : j + kw].reshape(-1)
            for o in range(cout):
                out[i, j, o] = np.dot(window, wflat[:, o]) + int(bias_q[o])
    return out


def upconv2_int(xq, x_zp: int, wq, bias_q) -> np.ndarray:
    kh, kw, cin, cout = wq.shape
    _check_acc_bound(cin, bias_q)
    xc = xq.astype(np.int32) - np.int32(x_zp)
    h, wd = xc.shape[:2]
    acc = np.einsum(
        "ijc,abco->iajbo", xc.astype(np.int64), wq.astype(np.int64), optimize=True
    ).reshape(2 * h, 2 * wd, cout)
    acc += bias_q.astype(np.int64)
    return acc.astype(np.int32)


def upconv2_int_naive(xq, x_zp: int, wq, bias_q) -> np.ndarray:
    h, wd, cin = xq.shape
    cout = wq.shape[-1]
    xc = xq.astype(np.int64) - x_zp
    out = np.empty((2 * h, 2 * wd, cout), dtype=np.int32)
    for i in range(h):
        for j in range(wd):
            for a in range(2):
                for bb in range(2):
                    for o in range(cout):
                        out[2 * i + a, 2 * j + bb, o] = np.dot(
                            xc[i, j], wq[a, bb, :, o].astype(np.int64)
                        ) + int(bias_q[o])
    return out


def dense_int(xq, x_zp: int, wq, bias_q) -> np.ndarray:
    _check_acc_bound(wq.shape[0], bias_q)
    xc = xq.astype(np.int32) - np.int32(x_zp)
    flat = xc.reshape(-1, xc.shape[-1])
    acc = _exact_int_matmul(flat, wq) + bias_q.astype(np.int64)
    return acc.reshape(*xq.shape[:-1], wq.shape[1]).astype(np.int32)


def dense_int_naive(xq, x_zp: int, wq, bias_q) -> np.ndarray:
    xc = xq.astype(np.int64) - x_zp
    flat = xc.reshape(-1, xc.shape[-1])
    out = np.empty((flat.shape[0], wq.shape[1]), dtype=np.int32)
    wl = wq.astype(np.int64)
    for n in range(flat.shape[0]):
        for o in range(wq.shape[1]):
            out[n, o] = np.dot(flat[n], wl[:, o]) + int(bias_q[o])
    return out.reshape(*xq.shape[:-1], wq.shape[1])


def relu_int(xq: np.ndarray, zp: int) -> np.ndarray:
    """ReLU in the quantized domain: real zero sits at the zero point."""
    return np.maximum(xq, np.int8(zp) if xq.dtype == np.int8 else zp)


FAST_KERNELS = {
    "conv2d": conv2d,
    "upconv2": upconv2,
    "maxpool2": maxpool2,
    "dense": dense,
}

NAIVE_KERNELS = {
    "conv2d": conv2d_naive,
    "upconv2": upconv2_naive,
    "maxpool2": maxpool2_naive,
    "dense": dense_naive,
}
