"""Differentiable primitives: the operation set every higher module composes.

Shapes are validated strictly.  The only implicit broadcast is the single
declared channel pattern, in its two layouts: a one-channel map against a
feature block, ``(1,h,w) x (c,h,w)`` or ``(n,1) x (n,c)``.  Everything else
(scalar gating, per-channel bias, row expansion) is an explicit named op.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DimensionError, NumericsError
from .tensor import Tensor, counters, record, trace


def _check_same_dtype(a: Tensor, b: Tensor, name: str) -> None:
    if a.data.dtype != b.data.dtype:
        raise TypeError(f"{name}: mixed dtypes {a.data.dtype} vs {b.data.dtype}")


def _broadcast_axes(sa, sb, name):
    """Return (axis_a, axis_b): the axis each side broadcasts along, or None."""
    if sa == sb:
        return None, None
    if len(sa) == 3 and len(sb) == 3 and sa[1:] == sb[1:]:
        if sa[0] == 1 and sb[0] > 1:
            return 0, None
        if sb[0] == 1 and sa[0] > 1:
            return None, 0
    if len(sa) == 2 and len(sb) == 2 and sa[0] == sb[0]:
        if sa[1] == 1 and sb[1] > 1:
            return 1, None
        if sb[1] == 1 and sa[1] > 1:
            return None, 1
    raise DimensionError(f"{name}: shapes {sa} and {sb} are not equal and not the "
                         f"declared channel broadcast")


def _binary(a: Tensor, b: Tensor, name, fwd, grad_a, grad_b) -> Tensor:
    _check_same_dtype(a, b, name)
    ax_a, ax_b = _broadcast_axes(a.shape, b.shape, name)
    out = Tensor(fwd(a.data, b.data), requires_grad=a.requires_grad or b.requires_grad,
                 dtype=a.data.dtype)

    def back(g):
        if a.requires_grad:
            ga = grad_a(g)
            if ax_a is not None:
                ga = ga.sum(axis=ax_a, keepdims=True)
            a.accumulate(ga)
        if b.requires_grad:
            gb = grad_b(g)
            if ax_b is not None:
                gb = gb.sum(axis=ax_b, keepdims=True)
            b.accumulate(gb)

    record(out, back)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    return _binary(a, b, "add", np.add, lambda g: g, lambda g: g)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _binary(a, b, "sub", np.subtract, lambda g: g, lambda g: -g)


def mul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    return _binary(a, b, "mul", np.multiply, lambda g: g * bd, lambda g: g * ad)


def div(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise division; denominators below machine eps clamp quietly to +/-eps."""
    eps = np.finfo(b.data.dtype).eps
    clamped = np.abs(b.data) < eps
    n_clamped = int(clamped.sum())
    if n_clamped:
        counters.div_clamps += n_clamped
    trace.add("div", np.packbits(clamped.reshape(-1)))
    b_safe = np.where(clamped, np.where(b.data < 0, -eps, eps).astype(b.data.dtype), b.data)
    ad = a.data
    return _binary(a, b, "div",
                   lambda x, y: x / b_safe,
                   lambda g: g / b_safe,
                   lambda g: np.where(clamped, 0, -g * ad / (b_safe * b_safe)))


def _unary(x: Tensor, fwd_data, grad_fn) -> Tensor:
    out = Tensor(fwd_data, requires_grad=x.requires_grad, dtype=x.data.dtype)

    def back(g):
        x.accumulate(grad_fn(g))

    record(out, back)
    return out


def neg(x: Tensor) -> Tensor:
    return _unary(x, -x.data, lambda g: -g)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    trace.add("relu", np.packbits(mask.reshape(-1)))
    return _unary(x, np.where(mask, x.data, 0), lambda g: g * mask)


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _unary(x, out, lambda g: g * out * (1.0 - out))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _unary(x, out, lambda g: g * out)


def sqrt(x: Tensor) -> Tensor:
    if np.any(x.data < 0):
        raise NumericsError("sqrt of negative value")
    out = np.sqrt(x.data)
    safe = np.where(out == 0, 1, out)  # zero inputs get zero gradient, not inf
    return _unary(x, out, lambda g: np.where(out == 0, 0, g * 0.5 / safe))


def scale(x: Tensor, s) -> Tensor:
    """Multiply a tensor by a scalar (python number or size-1 tensor)."""
    if isinstance(s, Tensor):
        if s.data.size != 1:
            raise DimensionError(f"scale: scalar operand has shape {s.shape}")
        _check_same_dtype(x, s, "scale")
        sval = s.data.reshape(())
        out = Tensor(x.data * sval, requires_grad=x.requires_grad or s.requires_grad,
                     dtype=x.data.dtype)
        xd = x.data

        def back(g):
            if x.requires_grad:
                x.accumulate(g * sval)
            if s.requires_grad:
                s.accumulate(np.array(g * xd, dtype=xd.dtype).sum().reshape(s.data.shape))

        record(out, back)
        return out
    sval = x.data.dtype.type(s)
    return _unary(x, x.data * sval, lambda g: g * sval)


def bias_rows(x: Tensor, b: Tensor) -> Tensor:
    """Add a length-c bias to each row of an (n, c) matrix."""
    if x.ndim != 2 or b.ndim != 1 or x.shape[1] != b.shape[0]:
        raise DimensionError(f"bias_rows: {x.shape} with bias {b.shape}")
    _check_same_dtype(x, b, "bias_rows")
    out = Tensor(x.data + b.data, requires_grad=x.requires_grad or b.requires_grad,
                 dtype=x.data.dtype)

    def back(g):
        if x.requires_grad:
            x.accumulate(g)
        if b.requires_grad:
            b.accumulate(g.sum(axis=0))

    record(out, back)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: {a.shape} x {b.shape}")
    _check_same_dtype(a, b, "matmul")
    ad, bd = a.data, b.data
    out = Tensor(ad @ bd, requires_grad=a.requires_grad or b.requires_grad, dtype=ad.dtype)

    def back(g):
        if a.requires_grad:
            a.accumulate(g @ bd.T)
        if b.requires_grad:
            b.accumulate(ad.T @ g)

    record(out, back)
    return out


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, pad: int = 0,
           bias: Tensor | None = None) -> Tensor:
    """Cross-correlation of (c_in,h,w) with (c_out,c_in,kh,kw), zero padding."""
    if x.ndim != 3 or kernel.ndim != 4:
        raise DimensionError(f"conv2d: input {x.shape}, kernel {kernel.shape}")
    c_in, h, w = x.shape
    c_out, kc, kh, kw = kernel.shape
    if kc != c_in:
        raise DimensionError(f"conv2d: kernel expects {kc} channels, input has {c_in}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise DimensionError(f"conv2d: kernel dims must be odd, got {kh}x{kw}")
    if (h + 2 * pad - kh) % stride or (w + 2 * pad - kw) % stride:
        raise DimensionError(f"conv2d: non-integral output for input {h}x{w}, "
                             f"kernel {kh}x{kw}, stride {stride}, pad {pad}")
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise DimensionError(f"conv2d: empty output {ho}x{wo}")
    _check_same_dtype(x, kernel, "conv2d")

    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad))) if pad else x.data
    windows = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    cols = windows.transpose(0, 3, 4, 1, 2).reshape(c_in * kh * kw, ho * wo)
    kflat = kernel.data.reshape(c_out, -1)
    out_data = (kflat @ cols).reshape(c_out, ho, wo)
    if bias is not None:
        if bias.shape != (c_out,):
            raise DimensionError(f"conv2d: bias {bias.shape} for {c_out} output channels")
        out_data = out_data + bias.data[:, None, None]
    needs_grad = x.requires_grad or kernel.requires_grad or (bias is not None and bias.requires_grad)
    out = Tensor(out_data, requires_grad=needs_grad, dtype=x.data.dtype)

    def back(g):
        gflat = g.reshape(c_out, -1)
        if kernel.requires_grad:
            kernel.accumulate((gflat @ cols.T).reshape(kernel.shape))
        if bias is not None and bias.requires_grad:
            bias.accumulate(g.sum(axis=(1, 2)))
        if x.requires_grad:
            dcols = (kflat.T @ gflat).reshape(c_in, kh, kw, ho, wo)
            dxp = np.zeros((c_in, h + 2 * pad, w + 2 * pad), dtype=g.dtype)
            for iy in range(kh):
                for ix in range(kw):
                    dxp[:, iy:iy + stride * ho:stride, ix:ix + stride * wo:stride] += \
                        dcols[:, iy, ix]
            x.accumulate(dxp[:, pad:pad + h, pad:pad + w])

    record(out, back)
    return out


def softmax(x: Tensor, axis: int) -> Tensor:
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"softmax: axis {axis} out of range for shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(out_data, requires_grad=x.requires_grad, dtype=x.data.dtype)

    def back(g):
        inner = (g * out_data).sum(axis=axis, keepdims=True)
        x.accumulate(out_data * (g - inner))

    record(out, back)
    return out


def _check_axis(x: Tensor, axis):
    if axis is None:
        if x.size == 0:
            raise DimensionError("reduce over empty tensor")
        return None
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"reduce: axis {axis} out of range for shape {x.shape}")
    axis = axis % x.ndim
    if x.shape[axis] == 0:
        raise DimensionError(f"reduce over empty axis {axis} of shape {x.shape}")
    return axis


def reduce_sum(x: Tensor, axis: int | None = None) -> Tensor:
    axis = _check_axis(x, axis)
    out = Tensor(x.data.sum(axis=axis), requires_grad=x.requires_grad, dtype=x.data.dtype)
    shape = x.shape

    def back(g):
        if axis is None:
            x.accumulate(np.broadcast_to(g, shape).astype(g.dtype, copy=True))
        else:
            x.accumulate(np.broadcast_to(np.expand_dims(g, axis), shape).astype(g.dtype, copy=True))

    record(out, back)
    return out


def reduce_mean(x: Tensor, axis: int | None = None) -> Tensor:
    axis = _check_axis(x, axis)
    n = x.size if axis is None else x.shape[axis]
    out = Tensor(x.data.mean(axis=axis), requires_grad=x.requires_grad, dtype=x.data.dtype)
    shape = x.shape

    def back(g):
        gg = g / n
        if axis is None:
            x.accumulate(np.broadcast_to(gg, shape).astype(g.dtype, copy=True))
        else:
            x.accumulate(np.broadcast_to(np.expand_dims(gg, axis), shape).astype(g.dtype, copy=True))

    record(out, back)
    return out


def reduce_max(x: Tensor, axis: int | None = None) -> Tensor:
    """Max reduction; the gradient routes to the first argmax along the axis."""
    axis = _check_axis(x, axis)
    if axis is None:
        flat = x.data.reshape(-1)
        idx = int(np.argmax(flat))
        trace.add("max", np.asarray([idx], dtype=np.int64))
        if trace.enabled and flat.size > 1:
            top2 = np.partition(flat, -2)[-2:]
            trace.add("maxmargin", np.asarray([float(top2[1] - top2[0]) < 1e-12], dtype=np.uint8))
        out = Tensor(flat[idx].reshape(()), requires_grad=x.requires_grad, dtype=x.data.dtype)
        shape = x.shape

        def back(g):
            buf = np.zeros(flat.shape, dtype=g.dtype)
            buf[idx] = g
            x.accumulate(buf.reshape(shape))

        record(out, back)
        return out

    idx = np.argmax(x.data, axis=axis)
    trace.add("max", idx.astype(np.int64))
    out = Tensor(np.take_along_axis(x.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis),
                 requires_grad=x.requires_grad, dtype=x.data.dtype)
    shape = x.shape

    def back(g):
        buf = np.zeros(shape, dtype=g.dtype)
        np.put_along_axis(buf, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        x.accumulate(buf)

    record(out, back)
    return out


def concat(xs: list[Tensor], axis: int) -> Tensor:
    if not xs:
        raise DimensionError("concat of empty list")
    if len(xs) == 1:
        x = xs[0]
        return _unary(x, x.data.copy(), lambda g: g)
    nd = xs[0].ndim
    if not -nd <= axis < nd:
        raise DimensionError(f"concat: axis {axis} out of range for rank {nd}")
    axis = axis % nd
    base = list(xs[0].shape)
    for x in xs[1:]:
        other = list(x.shape)
        if len(other) != nd or other[:axis] != base[:axis] or other[axis + 1:] != base[axis + 1:]:
            raise DimensionError(f"concat: off-axis mismatch {xs[0].shape} vs {x.shape}")
        _check_same_dtype(xs[0], x, "concat")
    out = Tensor(np.concatenate([x.data for x in xs], axis=axis),
                 requires_grad=any(x.requires_grad for x in xs), dtype=xs[0].data.dtype)
    sizes = [x.shape[axis] for x in xs]

    def back(g):
        offset = 0
        sl = [slice(None)] * nd
        for x, s in zip(xs, sizes):
            if x.requires_grad:
                sl[axis] = slice(offset, offset + s)
                x.accumulate(g[tuple(sl)])
            offset += s

    record(out, back)
    return out


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"slice_axis: axis {axis} out of range for shape {x.shape}")
    axis = axis % x.ndim
    n = x.shape[axis]
    if not (0 <= start < stop <= n):
        raise DimensionError(f"slice_axis: [{start}:{stop}] out of range for axis size {n}")
    sl = [slice(None)] * x.ndim
    sl[axis] = slice(start, stop)
    sl = tuple(sl)
    out = Tensor(x.data[sl].copy(), requires_grad=x.requires_grad, dtype=x.data.dtype)
    shape = x.shape

    def back(g):
        buf = np.zeros(shape, dtype=g.dtype)
        buf[sl] = g
        x.accumulate(buf)

    record(out, back)
    return out


def reshape(x: Tensor, shape) -> Tensor:
    out_data = x.data.reshape(shape).copy()
    old = x.shape
    return _unary(x, out_data, lambda g: g.reshape(old))


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got shape {x.shape}")
    return _unary(x, np.ascontiguousarray(x.data.T), lambda g: g.T)


def gather_rows(x: Tensor, idx) -> Tensor:
    """Select rows by integer index; duplicate rows accumulate gradient."""
    if x.ndim < 1:
        raise DimensionError("gather_rows on a scalar")
    idx = np.asarray(idx)
    if idx.ndim != 1 or not np.issubdtype(idx.dtype, np.integer):
        raise DimensionError(f"gather_rows: index must be a 1-D integer array")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise DimensionError(f"gather_rows: index out of range for {x.shape[0]} rows")
    out = Tensor(x.data[idx].copy(), requires_grad=x.requires_grad, dtype=x.data.dtype)
    shape = x.shape

    def back(g):
        buf = np.zeros(shape, dtype=g.dtype)
        np.add.at(buf, idx, g)
        x.accumulate(buf)

    record(out, back)
    return out


def expand_rows(x: Tensor, n: int) -> Tensor:
    """Repeat a (1, c) row (or (c,) vector) into an (n, c) matrix."""
    if x.ndim == 1:
        row = x.data[None, :]
    elif x.ndim == 2 and x.shape[0] == 1:
        row = x.data
    else:
        raise DimensionError(f"expand_rows expects (1, c) or (c,), got {x.shape}")
    out = Tensor(np.repeat(row, n, axis=0), requires_grad=x.requires_grad, dtype=x.data.dtype)
    shape = x.shape

    def back(g):
        x.accumulate(g.sum(axis=0).reshape(shape))

    record(out, back)
    return out


def _resize_coords(n_in: int, n_out: int):
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    return i0, i1, frac


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear sampling (align_corners=False) of a (c,h,w) block."""
    if x.ndim != 3:
        raise DimensionError(f"bilinear_resize expects (c,h,w), got {x.shape}")
    if out_h < 1 or out_w < 1:
        raise DimensionError(f"bilinear_resize to empty size {out_h}x{out_w}")
    c, h, w = x.shape
    y0, y1, ty = _resize_coords(h, out_h)
    x0, x1, tx = _resize_coords(w, out_w)
    ty = ty[:, None].astype(x.data.dtype)
    tx = tx[None, :].astype(x.data.dtype)
    d = x.data
    a = d[:, y0[:, None], x0[None, :]]
    b = d[:, y0[:, None], x1[None, :]]
    cc = d[:, y1[:, None], x0[None, :]]
    dd = d[:, y1[:, None], x1[None, :]]
    w00 = (1 - ty) * (1 - tx)
    w01 = (1 - ty) * tx
    w10 = ty * (1 - tx)
    w11 = ty * tx
    out = Tensor(a * w00 + b * w01 + cc * w10 + dd * w11,
                 requires_grad=x.requires_grad, dtype=x.data.dtype)
    chan = np.arange(c)[:, None, None]

    def back(g):
        buf = np.zeros((c, h, w), dtype=g.dtype)
        np.add.at(buf, (chan, y0[:, None], x0[None, :]), g * w00)
        np.add.at(buf, (chan, y0[:, None], x1[None, :]), g * w01)
        np.add.at(buf, (chan, y1[:, None], x0[None, :]), g * w10)
        np.add.at(buf, (chan, y1[:, None], x1[None, :]), g * w11)
        x.accumulate(buf)

    record(out, back)
    return out


BCE_EPS = 1e-7


def bce_mean(p: Tensor, target) -> Tensor:
    """Mean binary cross-entropy of probabilities against {0,1} labels.

    Probabilities clamp to [1e-7, 1-1e-7]; a clamped pixel contributes zero
    gradient (the clamp is flat there).
    """
    t = np.asarray(target, dtype=p.data.dtype)
    if t.shape != p.shape:
        raise DimensionError(f"bce_mean: prediction {p.shape} vs target {t.shape}")
    if not np.all((t == 0) | (t == 1)):
        raise ValueError("bce_mean: labels must be binary")
    lo, hi = BCE_EPS, 1.0 - BCE_EPS
    inside = (p.data > lo) & (p.data < hi)
    trace.add("bce", np.packbits(inside.reshape(-1)))
    pc = np.clip(p.data.astype(np.float64), lo, hi)
    per_pixel = -(t * np.log(pc) + (1.0 - t) * np.log1p(-pc))
    n = p.size
    out = Tensor(np.asarray(per_pixel.mean(), dtype=p.data.dtype),
                 requires_grad=p.requires_grad, dtype=p.data.dtype)

    def back(g):
        dp = (pc - t) / (pc * (1.0 - pc)) / n
        p.accumulate((g * np.where(inside, dp, 0.0)).astype(p.data.dtype))

    record(out, back)
    return out


Tensor.__add__ = add
Tensor.__sub__ = sub
Tensor.__mul__ = mul
Tensor.__neg__ = neg
Tensor.__matmul__ = matmul
