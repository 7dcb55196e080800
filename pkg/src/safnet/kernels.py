"""Dense CPU tensor kernels: conv2d, pooling, linear, batch-norm, each with backprop.

Tensors are plain numpy arrays. Image data is laid out (batch, channel,
height, width), row-major. Kernels are pure functions of their inputs:
backward passes recompute whatever they need instead of relying on hidden
caches, so they are safe to call concurrently on disjoint tensors. conv2d
runs as hand-written im2col plus a single matmul per batch.

With ``set_debug_finite(True)`` every kernel asserts its outputs are free
of NaN/Inf before returning.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

_DEBUG_FINITE = False


def set_debug_finite(enabled):
    """Toggle per-kernel NaN/Inf assertions (debug builds only)."""
    global _DEBUG_FINITE
    _DEBUG_FINITE = bool(enabled)


def _finite_guard(op, *arrays):
    if _DEBUG_FINITE:
        for a in arrays:
            if not np.all(np.isfinite(a)):
                raise FloatingPointError(f"{op}: non-finite values in output")


@dataclass
class LayerGrad:
    """Backward-pass result: gradient w.r.t. the layer input and its parameters.

    ``param_grads`` is ordered exactly like the layer's parameter list and
    every array mirrors the shape of the tensor it differentiates.
    """

    input_grad: np.ndarray
    param_grads: list = field(default_factory=list)


def _conv_out_size(extent, k, stride, pad):
    return (extent + 2 * pad - k) // stride + 1


def _im2col(xp, kh, kw, stride, oh, ow):
    # xp is the already-padded input (N, C, Hp, Wp)
    n, c = xp.shape[:2]
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=xp.dtype)
    for ki in range(kh):
        hi = ki + stride * oh
        for kj in range(kw):
            wj = kj + stride * ow
            cols[:, :, ki, kj] = xp[:, :, ki:hi:stride, kj:wj:stride]
    return cols.reshape(n, c * kh * kw, oh * ow)


def _col2im(dcols, padded_shape, kh, kw, stride, oh, ow):
    n, c, hp, wp = padded_shape
    dxp = np.zeros(padded_shape, dtype=dcols.dtype)
    dcols = dcols.reshape(n, c, kh, kw, oh, ow)
    for ki in range(kh):
        hi = ki + stride * oh
        for kj in range(kw):
            wj = kj + stride * ow
            # windows overlap when stride < kernel, so accumulate
            dxp[:, :, ki:hi:stride, kj:wj:stride] += dcols[:, :, ki, kj]
    return dxp


def _check_conv_shapes(x, w, b):
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-d input and weights, got input ndim={x.ndim}, weights ndim={w.ndim}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(
            f"conv2d: input channel axis 1 has {x.shape[1]} channels but weights expect in_ch={w.shape[1]}"
        )
    if b is not None and b.shape != (w.shape[0],):
        raise ShapeError(f"conv2d: bias shape {b.shape} does not match out_ch={w.shape[0]} (weights axis 0)")


def _pad2d(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def conv2d_forward(x, w, b, stride=1, pad=0):
    """Cross-correlation of (N,C,H,W) input with (O,C,KH,KW) weights plus bias."""
    _check_conv_shapes(x, w, b)
    n, _, h, ww = x.shape
    o, _, kh, kw = w.shape
    oh = _conv_out_size(h, kh, stride, pad)
    ow = _conv_out_size(ww, kw, stride, pad)
    if oh < 1 or ow < 1:
        raise ShapeError(
            f"conv2d: kernel ({kh},{kw}) with stride={stride} pad={pad} does not fit input spatial axes ({h},{ww})"
        )
    cols = _im2col(_pad2d(x, pad), kh, kw, stride, oh, ow)
    y = np.matmul(w.reshape(o, -1), cols)  # (N, O, OH*OW) via broadcast
    if b is not None:
        y += b[:, None]
    y = y.reshape(n, o, oh, ow)
    _finite_guard("conv2d_forward", y)
    return y


def conv2d_backward(x, w, dy, stride=1, pad=0):
    """Gradients of conv2d_forward w.r.t. input, weights and bias."""
    _check_conv_shapes(x, w, None)
    n, _, h, ww = x.shape
    o, _, kh, kw = w.shape
    oh = _conv_out_size(h, kh, stride, pad)
    ow = _conv_out_size(ww, kw, stride, pad)
    if dy.shape != (n, o, oh, ow):
        raise ShapeError(f"conv2d: upstream grad shape {dy.shape} does not match output shape {(n, o, oh, ow)}")
    xp = _pad2d(x, pad)
    cols = _im2col(xp, kh, kw, stride, oh, ow)
    dy2 = dy.reshape(n, o, oh * ow)
    db = dy2.sum(axis=(0, 2))
    dw = np.einsum("nop,nkp->ok", dy2, cols).reshape(w.shape)
    dcols = np.matmul(w.reshape(o, -1).T, dy2)
    dxp = _col2im(dcols, xp.shape, kh, kw, stride, oh, ow)
    dx = dxp if pad == 0 else dxp[:, :, pad:-pad, pad:-pad]
    _finite_guard("conv2d_backward", dx, dw, db)
    return LayerGrad(dx, [dw, db])


def _check_pool_shapes(x, window, stride):
    if x.ndim != 4:
        raise ShapeError(f"pool: expected 4-d input, got ndim={x.ndim}")
    h, w = x.shape[2:]
    if window > h or window > w:
        raise ShapeError(f"pool: window {window} exceeds spatial axes ({h},{w})")
    oh = (h - window) // stride + 1
    ow = (w - window) // stride + 1
    return oh, ow


def _pool_slices(x, window, stride, oh, ow):
    # yields (offset index, window slice) in scan order ki*window+kj
    for ki in range(window):
        hi = ki + stride * oh
        for kj in range(window):
            wj = kj + stride * ow
            yield ki * window + kj, x[:, :, ki:hi:stride, kj:wj:stride]


def _maxpool_argmax(x, window, stride, oh, ow):
    out = None
    arg = None
    for idx, sl in _pool_slices(x, window, stride, oh, ow):
        if out is None:
            out = sl.copy()
            arg = np.zeros(sl.shape, dtype=np.int8)
        else:
            better = sl > out  # strict: first-encountered index wins ties
            out[better] = sl[better]
            arg[better] = idx
    return out, arg


def maxpool_forward(x, window, stride=None):
    stride = window if stride is None else stride
    oh, ow = _check_pool_shapes(x, window, stride)
    out, _ = _maxpool_argmax(x, window, stride, oh, ow)
    _finite_guard("maxpool_forward", out)
    return out


def maxpool_backward(x, window, dy, stride=None):
    """Route upstream gradient to the argmax position of each window."""
    stride = window if stride is None else stride
    oh, ow = _check_pool_shapes(x, window, stride)
    if dy.shape != x.shape[:2] + (oh, ow):
        raise ShapeError(f"maxpool: upstream grad shape {dy.shape} does not match output shape {x.shape[:2] + (oh, ow)}")
    _, arg = _maxpool_argmax(x, window, stride, oh, ow)
    dx = np.zeros_like(x)
    for ki in range(window):
        hi = ki + stride * oh
        for kj in range(window):
            wj = kj + stride * ow
            dx[:, :, ki:hi:stride, kj:wj:stride] += dy * (arg == ki * window + kj)
    _finite_guard("maxpool_backward", dx)
    return LayerGrad(dx, [])


def avgpool_forward(x, window, stride=None):
    stride = window if stride is None else stride
    oh, ow = _check_pool_shapes(x, window, stride)
    out = None
    for _, sl in _pool_slices(x, window, stride, oh, ow):
        out = sl.copy() if out is None else out + sl
    out /= window * window
    _finite_guard("avgpool_forward", out)
    return out


def avgpool_backward(x, window, dy, stride=None):
    """Distribute upstream gradient uniformly over each window."""
    stride = window if stride is None else stride
    oh, ow = _check_pool_shapes(x, window, stride)
    if dy.shape != x.shape[:2] + (oh, ow):
        raise ShapeError(f"avgpool: upstream grad shape {dy.shape} does not match output shape {x.shape[:2] + (oh, ow)}")
    share = dy / (window * window)
    dx = np.zeros_like(x)
    for ki in range(window):
        hi = ki + stride * oh
        for kj in range(window):
            wj = kj + stride * ow
            dx[:, :, ki:hi:stride, kj:wj:stride] += share
    _finite_guard("avgpool_backward", dx)
    return LayerGrad(dx, [])


def _flatten_features(x):
    return x.reshape(x.shape[0], -1)


def linear_forward(x, w, b):
    """y = x W^T + b with x flattened to (N, features) and w of shape (out, in)."""
    x2 = _flatten_features(x)
    if x2.shape[1] != w.shape[1]:
        raise ShapeError(f"linear: input features axis has {x2.shape[1]} entries but weights expect in={w.shape[1]}")
    y = x2 @ w.T + b
    _finite_guard("linear_forward", y)
    return y


def linear_backward(x, w, dy):
    x2 = _flatten_features(x)
    if dy.shape != (x2.shape[0], w.shape[0]):
        raise ShapeError(f"linear: upstream grad shape {dy.shape} does not match output shape {(x2.shape[0], w.shape[0])}")
    dx = (dy @ w).reshape(x.shape)
    dw = dy.T @ x2
    db = dy.sum(axis=0)
    _finite_guard("linear_backward", dx, dw, db)
    return LayerGrad(dx, [dw, db])


BN_EPS = 1e-5
BN_MOMENTUM = 0.9


def _bn_axes(x):
    if x.ndim == 4:
        return (0, 2, 3), (1, -1, 1, 1)
    if x.ndim == 2:
        return (0,), (1, -1)
    raise ShapeError(f"batchnorm: expected 2-d or 4-d input, got ndim={x.ndim}")


def batchnorm_forward(x, gamma, beta, running_mean, running_var, train,
                      momentum=BN_MOMENTUM, eps=BN_EPS):
    """Normalize per channel; returns (y, new_running_mean, new_running_var).

    Train mode uses batch statistics (biased variance) and folds them into
    the running stats by exponential moving average; eval mode uses the
    running stats untouched.
    """
    axes, pshape = _bn_axes(x)
    if train:
        if x.shape[0] < 2:
            raise ShapeError("batchnorm: train mode needs batch size >= 2 (variance scale undefined for 1)")
        mu = x.mean(axis=axes)
        var = x.var(axis=axes)
        new_mean = momentum * running_mean + (1.0 - momentum) * mu
        new_var = momentum * running_var + (1.0 - momentum) * var
    else:
        mu, var = running_mean, running_var
        new_mean, new_var = running_mean, running_var
    xhat = (x - mu.reshape(pshape)) / np.sqrt(var.reshape(pshape) + eps)
    y = gamma.reshape(pshape) * xhat + beta.reshape(pshape)
    _finite_guard("batchnorm_forward", y)
    return y, new_mean, new_var


def batchnorm_backward(x, gamma, dy, train, running_mean=None, running_var=None, eps=BN_EPS):
    """Standard batch-norm gradient (batch statistics in train mode, running in eval)."""
    axes, pshape = _bn_axes(x)
    if dy.shape != x.shape:
        raise ShapeError(f"batchnorm: upstream grad shape {dy.shape} does not match input shape {x.shape}")
    if train:
        m = float(np.prod([x.shape[a] for a in axes]))
        mu = x.mean(axis=axes)
        var = x.var(axis=axes)
        xc = x - mu.reshape(pshape)
        ivar = 1.0 / np.sqrt(var + eps)
        xhat = xc * ivar.reshape(pshape)
        dxhat = dy * gamma.reshape(pshape)
        dvar = np.sum(dxhat * xc, axis=axes) * (-0.5) * ivar**3
        dmu = -np.sum(dxhat, axis=axes) * ivar + dvar * (-2.0 / m) * np.sum(xc, axis=axes)
        dx = (dxhat * ivar.reshape(pshape)
              + dvar.reshape(pshape) * 2.0 * xc / m
              + dmu.reshape(pshape) / m)
    else:
        ivar = 1.0 / np.sqrt(running_var + eps)
        xhat = (x - running_mean.reshape(pshape)) * ivar.reshape(pshape)
        dx = dy * (gamma * ivar).reshape(pshape)
    dgamma = np.sum(dy * xhat, axis=axes)
    dbeta = np.sum(dy, axis=axes)
    _finite_guard("batchnorm_backward", dx, dgamma, dbeta)
    return LayerGrad(dx, [dgamma, dbeta])
