"""Pure-numpy implementations of the hot array kernels.

Every function here has a numba twin in ``nb_backend`` with the same
signature and (up to float rounding) the same output. Convolution is
cross-correlation over NCHW tensors; output extents follow
``(H + 2p - d*(k-1) - 1) // s + 1``.
"""

import numpy as np


def _out_extent(size, k, stride, pad, dilation):
    return (size + 2 * pad - dilation * (k - 1) - 1) // stride + 1


def _col_view(x, kh, kw, stride, pad, dilation):
    """Strided (n, c, kh, kw, oh, ow) window view of the padded input."""
    n, c, h, w = x.shape
    oh = _out_extent(h, kh, stride, pad, dilation)
    ow = _out_extent(w, kw, stride, pad, dilation)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    s = x.strides
    view = np.lib.stride_tricks.as_strided(
        x,
        (n, c, kh, kw, oh, ow),
        (s[0], s[1], s[2] * dilation, s[3] * dilation, s[2] * stride, s[3] * stride),
        writeable=False,
    )
    return view, oh, ow


def conv2d_forward(x, w, stride, pad, dilation, groups):
    n, c, h, wd = x.shape
    k, cg, kh, kw = w.shape
    if groups == 1:
        view, oh, ow = _col_view(x, kh, kw, stride, pad, dilation)
        # (n, oh, ow, c*kh*kw) @ (c*kh*kw, k) keeps the single big copy GEMM-friendly
        cols = view.transpose(0, 4, 5, 1, 2, 3).reshape(n * oh * ow, c * kh * kw)
        out = cols @ w.reshape(k, -1).T
        return np.ascontiguousarray(
            out.reshape(n, oh, ow, k).transpose(0, 3, 1, 2))
    if groups == c and cg == 1:
        view, oh, ow = _col_view(x, kh, kw, stride, pad, dilation)
        return np.ascontiguousarray(
            np.einsum("ncklyx,ckl->ncyx", view, w[:, 0], optimize=True))
    outs = [
        conv2d_forward(x[:, g * cg:(g + 1) * cg], w[g * (k // groups):(g + 1) * (k // groups)],
                       stride, pad, dilation, 1)
        for g in range(groups)
    ]
    return np.concatenate(outs, axis=1)


def conv2d_backward_input(gy, w, h, wd, stride, pad, dilation, groups):
    n, k, oh, ow = gy.shape
    _, cg, kh, kw = w.shape
    c = cg * groups
    if groups == 1:
        gcols = gy.transpose(0, 2, 3, 1).reshape(n * oh * ow, k) @ w.reshape(k, -1)
        gcols = gcols.reshape(n, oh, ow, c, kh, kw)
        gx = np.zeros((n, c, h + 2 * pad, wd + 2 * pad), dtype=gy.dtype)
        for ky in range(kh):
            ye = ky * dilation + oh * stride
            for kx in range(kw):
                xe = kx * dilation + ow * stride
                gx[:, :, ky * dilation:ye:stride, kx * dilation:xe:stride] += \
                    gcols[:, :, :, :, ky, kx].transpose(0, 3, 1, 2)
        return np.ascontiguousarray(gx[:, :, pad:pad + h, pad:pad + wd])
    if groups == c and cg == 1:
        gx = np.zeros((n, c, h + 2 * pad, wd + 2 * pad), dtype=gy.dtype)
        for ky in range(kh):
            ye = ky * dilation + oh * stride
            for kx in range(kw):
                xe = kx * dilation + ow * stride
                gx[:, :, ky * dilation:ye:stride, kx * dilation:xe:stride] += \
                    gy * w[:, 0, ky, kx][None, :, None, None]
        return np.ascontiguousarray(gx[:, :, pad:pad + h, pad:pad + wd])
    parts = [
        conv2d_backward_input(gy[:, g * (k // groups):(g + 1) * (k // groups)],
                              w[g * (k // groups):(g + 1) * (k // groups)],
                              h, wd, stride, pad, dilation, 1)
        for g in range(groups)
    ]
    return np.concatenate(parts, axis=1)


def conv2d_backward_weight(gy, x, kh, kw, stride, pad, dilation, groups):
    n, k, oh, ow = gy.shape
    c = x.shape[1]
    cg = c // groups
    if groups == 1:
        view, _, _ = _col_view(x, kh, kw, stride, pad, dilation)
        return np.ascontiguousarray(
            np.einsum("nkyx,ncijyx->ncij", gy, view, optimize=True)
            .reshape(k, c, kh, kw))
    if groups == c and cg == 1:
        view, _, _ = _col_view(x, kh, kw, stride, pad, dilation)
        gw = np.einsum("ncyx,ncijyx->cij", gy, view, optimize=True)
        return np.ascontiguousarray(gw[:, None])
    parts = [
        conv2d_backward_weight(gy[:, g * (k // groups):(g + 1) * (k // groups)],
                               x[:, g * cg:(g + 1) * cg], kh, kw, stride, pad, dilation, 1)
        for g in range(groups)
    ]
    return np.concatenate(parts, axis=0)


def max_pool_forward(x, k, stride, pad):
    """Max pooling; returns values and flat (iy*W + ix) argmax into the input."""
    n, c, h, w = x.shape
    if pad:
        xp = np.full((n, c, h + 2 * pad, w + 2 * pad), -np.inf, dtype=x.dtype)
        xp[:, :, pad:pad + h, pad:pad + w] = x
    else:
        xp = x
    view, oh, ow = _col_view(xp, k, k, stride, 0, 1)
    flat = view.transpose(0, 1, 4, 5, 2, 3).reshape(n, c, oh, ow, k * k)
    a = np.argmax(flat, axis=-1)
    out = np.take_along_axis(flat, a[..., None], axis=-1)[..., 0]
    oy = np.arange(oh)[:, None]
    ox = np.arange(ow)[None, :]
    iy = oy * stride + a // k - pad
    ix = ox * stride + a % k - pad
    arg = (iy * w + ix).astype(np.int64)
    return np.ascontiguousarray(out), arg


def max_pool_backward(gy, arg, h, w):
    n, c = gy.shape[:2]
    gx = np.zeros((n, c, h * w), dtype=gy.dtype)
    np.add.at(gx.reshape(n * c, h * w),
              (np.repeat(np.arange(n * c), arg[0, 0].size), arg.reshape(n * c, -1).ravel()),
              gy.reshape(n * c, -1).ravel())
    return gx.reshape(n, c, h, w)


def _bilinear_coords(in_size, out_size):
    """Half-pixel-center source coordinates, clamped to the border."""
    scale = in_size / out_size
    src = (np.arange(out_size) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, in_size - 1.0)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, in_size - 1)
    frac = src - lo
    return lo, hi, frac


def bilinear_forward(x, oh, ow):
    n, c, h, w = x.shape
    y0, y1, fy = _bilinear_coords(h, oh)
    x0, x1, fx = _bilinear_coords(w, ow)
    fy = fy[:, None].astype(x.dtype)
    fx = fx[None, :].astype(x.dtype)
    top = x[:, :, y0][:, :, :, x0] * (1 - fx) + x[:, :, y0][:, :, :, x1] * fx
    bot = x[:, :, y1][:, :, :, x0] * (1 - fx) + x[:, :, y1][:, :, :, x1] * fx
    return np.ascontiguousarray(top * (1 - fy) + bot * fy)


def bilinear_backward(gy, h, w):
    n, c, oh, ow = gy.shape
    y0, y1, fy = _bilinear_coords(h, oh)
    x0, x1, fx = _bilinear_coords(w, ow)
    fy = fy[:, None]
    fx = fx[None, :]
    gx = np.zeros((n, c, h, w), dtype=gy.dtype)
    yy0 = np.broadcast_to(y0[:, None], (oh, ow))
    yy1 = np.broadcast_to(y1[:, None], (oh, ow))
    xx0 = np.broadcast_to(x0[None, :], (oh, ow))
    xx1 = np.broadcast_to(x1[None, :], (oh, ow))
    for ys, xs, wgt in ((yy0, xx0, (1 - fy) * (1 - fx)), (yy0, xx1, (1 - fy) * fx),
                        (yy1, xx0, fy * (1 - fx)), (yy1, xx1, fy * fx)):
        np.add.at(gx, (slice(None), slice(None), ys, xs), gy * wgt.astype(gy.dtype))
    return gx


def _deform_geometry(x, offsets, kh, kw, stride, pad):
    n, c, h, w = x.shape
    oh, ow = offsets.shape[2], offsets.shape[3]
    base_y = (np.arange(oh) * stride - pad)[None, None, :, None]
    base_x = (np.arange(ow) * stride - pad)[None, None, None, :]
    taps = np.arange(kh * kw)
    ky = (taps // kw)[None, :, None, None]
    kx = (taps % kw)[None, :, None, None]
    py = base_y + ky + offsets[:, 0::2]
    px = base_x + kx + offsets[:, 1::2]
    return py, px


def _corner_gather(x, py, px):
    """Bilinear corner samples with zero outside the input (plus d/dpos pieces)."""
    n, c, h, w = x.shape
    y0 = np.floor(py).astype(np.int64)
    x0 = np.floor(px).astype(np.int64)
    fy = (py - y0).astype(x.dtype)
    fx = (px - x0).astype(x.dtype)
    ni = np.arange(n)[:, None, None, None]
    vals = []
    for dy in (0, 1):
        for dx in (0, 1):
            yy = y0 + dy
            xx = x0 + dx
            ok = ((yy >= 0) & (yy < h) & (xx >= 0) & (xx < w))
            v = x[ni, :, np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
            # advanced indexing yields (n, kk, oh, ow, c); mask then move c forward
            v = v * ok[..., None].astype(x.dtype)
            vals.append(np.moveaxis(v, -1, 1))
    wy = (1 - fy, fy)
    wx = (1 - fx, fx)
    return vals, (y0, x0, fy, fx, wy, wx)


def deform_conv_forward(x, offsets, w, stride, pad):
    n, c, h, wd = x.shape
    k, _, kh, kw = w.shape
    py, px = _deform_geometry(x, offsets, kh, kw, stride, pad)
    vals, (_, _, _, _, wy, wx) = _corner_gather(x, py, px)
    samp = (vals[0] * (wy[0] * wx[0])[:, None] + vals[1] * (wy[0] * wx[1])[:, None] +
            vals[2] * (wy[1] * wx[0])[:, None] + vals[3] * (wy[1] * wx[1])[:, None])
    oh, ow = offsets.shape[2], offsets.shape[3]
    out = np.einsum("kq,nqp->nkp", w.reshape(k, c * kh * kw),
                    samp.transpose(0, 1, 2, 3, 4).reshape(n, c * kh * kw, oh * ow),
                    optimize=True)
    return np.ascontiguousarray(out.reshape(n, k, oh, ow))


def deform_conv_backward(gy, x, offsets, w, stride, pad):
    n, c, h, wd = x.shape
    k, _, kh, kw = w.shape
    oh, ow = offsets.shape[2], offsets.shape[3]
    py, px = _deform_geometry(x, offsets, kh, kw, stride, pad)
    vals, (y0, x0, fy, fx, wy, wx) = _corner_gather(x, py, px)
    samp = (vals[0] * (wy[0] * wx[0])[:, None] + vals[1] * (wy[0] * wx[1])[:, None] +
            vals[2] * (wy[1] * wx[0])[:, None] + vals[3] * (wy[1] * wx[1])[:, None])
    gw = np.einsum("nkp,nqp->kq", gy.reshape(n, k, oh * ow),
                   samp.reshape(n, c * kh * kw, oh * ow), optimize=True).reshape(w.shape)
    # gradient flowing into every (c, tap, position) sample
    gsamp = np.einsum("nkp,kq->nqp", gy.reshape(n, k, oh * ow),
                      w.reshape(k, c * kh * kw), optimize=True)
    gsamp = gsamp.reshape(n, c, kh * kw, oh, ow)
    gx = np.zeros((n, c, h, wd), dtype=x.dtype)
    ni = np.arange(n)[:, None, None, None]
    corner_w = ((wy[0] * wx[0]), (wy[0] * wx[1]), (wy[1] * wx[0]), (wy[1] * wx[1]))
    corner_d = ((y0, x0), (y0, x0 + 1), (y0 + 1, x0), (y0 + 1, x0 + 1))
    for (yy, xx), cw in zip(corner_d, corner_w):
        ok = ((yy >= 0) & (yy < h) & (xx >= 0) & (xx < wd))
        contrib = (gsamp * cw[:, None]) * ok[:, None].astype(x.dtype)
        np.add.at(gx, (ni[:, None], np.arange(c)[None, :, None, None, None],
                       np.clip(yy, 0, h - 1)[:, None], np.clip(xx, 0, wd - 1)[:, None]),
                  contrib)
    # d(sample)/d(py) and /d(px) from the bilinear weights
    dy_val = (-(vals[0] * wx[0][:, None] + vals[1] * wx[1][:, None]) +
              (vals[2] * wx[0][:, None] + vals[3] * wx[1][:, None]))
    dx_val = (-(vals[0] * wy[0][:, None] + vals[2] * wy[1][:, None]) +
              (vals[1] * wy[0][:, None] + vals[3] * wy[1][:, None]))
    goff = np.empty_like(offsets)
    goff[:, 0::2] = np.sum(gsamp * dy_val, axis=1)
    goff[:, 1::2] = np.sum(gsamp * dx_val, axis=1)
    return gx, goff, gw
