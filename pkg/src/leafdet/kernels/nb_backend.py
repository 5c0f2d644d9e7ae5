"""Numba-jitted twins of the numpy kernels.

Dense convolutions gather im2col columns in compiled code and hand the
contraction to BLAS via ``np.dot``; grouped/depthwise convolutions and the
sampling kernels use direct loops. Accumulation order is fixed (parallel
regions only ever write disjoint slices) so repeated calls are bit-stable.
"""

import numpy as np
from numba import njit, prange


@njit(cache=True, parallel=True)
def _conv_fwd_dense(x, w, stride, pad, dilation):
    n, c, h, wd = x.shape
    k, _, kh, kw = w.shape
    oh = (h + 2 * pad - dilation * (kh - 1) - 1) // stride + 1
    ow = (wd + 2 * pad - dilation * (kw - 1) - 1) // stride + 1
    wmat = np.ascontiguousarray(w.copy().reshape(k, c * kh * kw).T)
    out = np.empty((n, k, oh, ow), dtype=x.dtype)
    for ni in prange(n):
        cols = np.zeros((oh * ow, c * kh * kw), dtype=x.dtype)
        for oy in range(oh):
            for ox in range(ow):
                r = oy * ow + ox
                col = 0
                for ci in range(c):
                    for ky in range(kh):
                        iy = oy * stride + ky * dilation - pad
                        for kx in range(kw):
                            ix = ox * stride + kx * dilation - pad
                            if 0 <= iy < h and 0 <= ix < wd:
                                cols[r, col] = x[ni, ci, iy, ix]
                            col += 1
        res = np.dot(cols, wmat)
        for ko in range(k):
            for oy in range(oh):
                for ox in range(ow):
                    out[ni, ko, oy, ox] = res[oy * ow + ox, ko]
    return out


@njit(cache=True)
def _conv_fwd_grouped(x, w, stride, pad, dilation, groups):
    n, c, h, wd = x.shape
    k, cg, kh, kw = w.shape
    kg = k // groups
    oh = (h + 2 * pad - dilation * (kh - 1) - 1) // stride + 1
    ow = (wd + 2 * pad - dilation * (kw - 1) - 1) // stride + 1
    out = np.zeros((n, k, oh, ow), dtype=x.dtype)
    for ni in range(n):
        for ko in range(k):
            cbase = (ko // kg) * cg
            for oy in range(oh):
                for ox in range(ow):
                    acc = 0.0
                    for ci in range(cg):
                        for ky in range(kh):
                            iy = oy * stride + ky * dilation - pad
                            if iy < 0 or iy >= h:
                                continue
                            for kx in range(kw):
                                ix = ox * stride + kx * dilation - pad
                                if 0 <= ix < wd:
                                    acc += x[ni, cbase + ci, iy, ix] * w[ko, ci, ky, kx]
                    out[ni, ko, oy, ox] = acc
    return out


def conv2d_forward(x, w, stride, pad, dilation, groups):
    if groups == 1:
        return _conv_fwd_dense(x, w, stride, pad, dilation)
    return _conv_fwd_grouped(x, w, stride, pad, dilation, groups)


@njit(cache=True, parallel=True)
def _conv_bwd_input_dense(gy, w, h, wd, stride, pad, dilation):
    n, k, oh, ow = gy.shape
    _, c, kh, kw = w.shape
    wmat = np.ascontiguousarray(w.copy().reshape(k, c * kh * kw))
    gx = np.zeros((n, c, h, wd), dtype=gy.dtype)
    for ni in prange(n):
        gmat = np.empty((oh * ow, k), dtype=gy.dtype)
        for ko in range(k):
            for oy in range(oh):
                for ox in range(ow):
                    gmat[oy * ow + ox, ko] = gy[ni, ko, oy, ox]
        gcols = np.dot(gmat, wmat)
        for oy in range(oh):
            for ox in range(ow):
                r = oy * ow + ox
                col = 0
                for ci in range(c):
                    for ky in range(kh):
                        iy = oy * stride + ky * dilation - pad
                        for kx in range(kw):
                            ix = ox * stride + kx * dilation - pad
                            if 0 <= iy < h and 0 <= ix < wd:
                                gx[ni, ci, iy, ix] += gcols[r, col]
                            col += 1
    return gx


@njit(cache=True)
def _conv_bwd_input_grouped(gy, w, h, wd, stride, pad, dilation, groups):
    n, k, oh, ow = gy.shape
    _, cg, kh, kw = w.shape
    kg = k // groups
    gx = np.zeros((n, cg * groups, h, wd), dtype=gy.dtype)
    for ni in range(n):
        for ko in range(k):
            cbase = (ko // kg) * cg
            for oy in range(oh):
                for ox in range(ow):
                    g = gy[ni, ko, oy, ox]
                    for ci in range(cg):
                        for ky in range(kh):
                            iy = oy * stride + ky * dilation - pad
                            if iy < 0 or iy >= h:
                                continue
                            for kx in range(kw):
                                ix = ox * stride + kx * dilation - pad
                                if 0 <= ix < wd:
                                    gx[ni, cbase + ci, iy, ix] += g * w[ko, ci, ky, kx]
    return gx


def conv2d_backward_input(gy, w, h, wd, stride, pad, dilation, groups):
    if groups == 1:
        return _conv_bwd_input_dense(gy, w, h, wd, stride, pad, dilation)
    return _conv_bwd_input_grouped(gy, w, h, wd, stride, pad, dilation, groups)


@njit(cache=True)
def _conv_bwd_weight_dense(gy, x, kh, kw, stride, pad, dilation):
    n, k, oh, ow = gy.shape
    c = x.shape[1]
    h, wd = x.shape[2], x.shape[3]
    gw = np.zeros((k, c * kh * kw), dtype=gy.dtype)
    for ni in range(n):
        cols = np.zeros((oh * ow, c * kh * kw), dtype=x.dtype)
        for oy in range(oh):
            for ox in range(ow):
                r = oy * ow + ox
                col = 0
                for ci in range(c):
                    for ky in range(kh):
                        iy = oy * stride + ky * dilation - pad
                        for kx in range(kw):
                            ix = ox * stride + kx * dilation - pad
                            if 0 <= iy < h and 0 <= ix < wd:
                                cols[r, col] = x[ni, ci, iy, ix]
                            col += 1
        gmat = np.empty((k, oh * ow), dtype=gy.dtype)
        for ko in range(k):
            for oy in range(oh):
                for ox in range(ow):
                    gmat[ko, oy * ow + ox] = gy[ni, ko, oy, ox]
        gw += np.dot(gmat, cols)
    return gw.reshape(k, c, kh, kw)


@njit(cache=True)
def _conv_bwd_weight_grouped(gy, x, kh, kw, stride, pad, dilation, groups):
    n, k, oh, ow = gy.shape
    c = x.shape[1]
    h, wd = x.shape[2], x.shape[3]
    cg = c // groups
    kg = k // groups
    gw = np.zeros((k, cg, kh, kw), dtype=gy.dtype)
    for ni in range(n):
        for ko in range(k):
            cbase = (ko // kg) * cg
            for oy in range(oh):
                for ox in range(ow):
                    g = gy[ni, ko, oy, ox]
                    for ci in range(cg):
                        for ky in range(kh):
                            iy = oy * stride + ky * dilation - pad
                            if iy < 0 or iy >= h:
                                continue
                            for kx in range(kw):
                                ix = ox * stride + kx * dilation - pad
                                if 0 <= ix < wd:
                                    gw[ko, ci, ky, kx] += g * x[ni, cbase + ci, iy, ix]
    return gw


def conv2d_backward_weight(gy, x, kh, kw, stride, pad, dilation, groups):
    if groups == 1:
        return _conv_bwd_weight_dense(gy, x, kh, kw, stride, pad, dilation)
    return _conv_bwd_weight_grouped(gy, x, kh, kw, stride, pad, dilation, groups)


@njit(cache=True)
def max_pool_forward(x, k, stride, pad):
    n, c, h, w = x.shape
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    out = np.empty((n, c, oh, ow), dtype=x.dtype)
    arg = np.empty((n, c, oh, ow), dtype=np.int64)
    for ni in range(n):
        for ci in range(c):
            for oy in range(oh):
                for ox in range(ow):
                    best = -np.inf
                    bidx = -1
                    for ky in range(k):
                        iy = oy * stride + ky - pad
                        if iy < 0 or iy >= h:
                            continue
                        for kx in range(k):
                            ix = ox * stride + kx - pad
                            if 0 <= ix < w and x[ni, ci, iy, ix] > best:
                                best = x[ni, ci, iy, ix]
                                bidx = iy * w + ix
                    out[ni, ci, oy, ox] = best
                    arg[ni, ci, oy, ox] = bidx
    return out, arg


@njit(cache=True)
def max_pool_backward(gy, arg, h, w):
    n, c, oh, ow = gy.shape
    gx = np.zeros((n, c, h * w), dtype=gy.dtype)
    for ni in range(n):
        for ci in range(c):
            for oy in range(oh):
                for ox in range(ow):
                    gx[ni, ci, arg[ni, ci, oy, ox]] += gy[ni, ci, oy, ox]
    return gx.reshape(n, c, h, w)


@njit(cache=True)
def bilinear_forward(x, oh, ow):
    n, c, h, w = x.shape
    out = np.empty((n, c, oh, ow), dtype=x.dtype)
    sy = h / oh
    sx = w / ow
    for oy in range(oh):
        py = min(max((oy + 0.5) * sy - 0.5, 0.0), h - 1.0)
        y0 = int(np.floor(py))
        y1 = min(y0 + 1, h - 1)
        fy = py - y0
        for ox in range(ow):
            px = min(max((ox + 0.5) * sx - 0.5, 0.0), w - 1.0)
            x0 = int(np.floor(px))
            x1 = min(x0 + 1, w - 1)
            fx = px - x0
            for ni in range(n):
                for ci in range(c):
                    top = x[ni, ci, y0, x0] * (1 - fx) + x[ni, ci, y0, x1] * fx
                    bot = x[ni, ci, y1, x0] * (1 - fx) + x[ni, ci, y1, x1] * fx
                    out[ni, ci, oy, ox] = top * (1 - fy) + bot * fy
    return out


@njit(cache=True)
def bilinear_backward(gy, h, w):
    n, c, oh, ow = gy.shape
    gx = np.zeros((n, c, h, w), dtype=gy.dtype)
    sy = h / oh
    sx = w / ow
    for oy in range(oh):
        py = min(max((oy + 0.5) * sy - 0.5, 0.0), h - 1.0)
        y0 = int(np.floor(py))
        y1 = min(y0 + 1, h - 1)
        fy = py - y0
        for ox in range(ow):
            px = min(max((ox + 0.5) * sx - 0.5, 0.0), w - 1.0)
            x0 = int(np.floor(px))
            x1 = min(x0 + 1, w - 1)
            fx = px - x0
            for ni in range(n):
                for ci in range(c):
                    g = gy[ni, ci, oy, ox]
                    gx[ni, ci, y0, x0] += g * (1 - fy) * (1 - fx)
                    gx[ni, ci, y0, x1] += g * (1 - fy) * fx
                    gx[ni, ci, y1, x0] += g * fy * (1 - fx)
                    gx[ni, ci, y1, x1] += g * fy * fx
    return gx


@njit(cache=True, inline="always")
def _sample_zero_pad(x, ni, ci, py, px, h, w):
    y0 = int(np.floor(py))
    x0 = int(np.floor(px))
    fy = py - y0
    fx = px - x0
    v = 0.0
    for dy in range(2):
        yy = y0 + dy
        if yy < 0 or yy >= h:
            continue
        wy = fy if dy == 1 else 1 - fy
        for dx in range(2):
            xx = x0 + dx
            if xx < 0 or xx >= w:
                continue
            wx = fx if dx == 1 else 1 - fx
            v += x[ni, ci, yy, xx] * wy * wx
    return v


@njit(cache=True)
def deform_conv_forward(x, offsets, w, stride, pad):
    n, c, h, wd = x.shape
    k, _, kh, kw = w.shape
    oh, ow = offsets.shape[2], offsets.shape[3]
    out = np.zeros((n, k, oh, ow), dtype=x.dtype)
    for ni in range(n):
        for oy in range(oh):
            for ox in range(ow):
                for t in range(kh * kw):
                    ky = t // kw
                    kx = t % kw
                    py = oy * stride - pad + ky + offsets[ni, 2 * t, oy, ox]
                    px = ox * stride - pad + kx + offsets[ni, 2 * t + 1, oy, ox]
                    if py <= -1.0 or py >= h or px <= -1.0 or px >= wd:
                        continue
                    for ci in range(c):
                        v = _sample_zero_pad(x, ni, ci, py, px, h, wd)
                        if v != 0.0:
                            for ko in range(k):
                                out[ni, ko, oy, ox] += v * w[ko, ci, ky, kx]
    return out


@njit(cache=True)
def deform_conv_backward(gy, x, offsets, w, stride, pad):
    n, c, h, wd = x.shape
    k, _, kh, kw = w.shape
    oh, ow = offsets.shape[2], offsets.shape[3]
    gx = np.zeros((n, c, h, wd), dtype=gy.dtype)
    goff = np.zeros_like(offsets)
    gw = np.zeros_like(w)
    for ni in range(n):
        for oy in range(oh):
            for ox in range(ow):
                for t in range(kh * kw):
                    ky = t // kw
                    kx = t % kw
                    py = oy * stride - pad + ky + offsets[ni, 2 * t, oy, ox]
                    px = ox * stride - pad + kx + offsets[ni, 2 * t + 1, oy, ox]
                    y0 = int(np.floor(py))
                    x0 = int(np.floor(px))
                    fy = py - y0
                    fx = px - x0
                    for ci in range(c):
                        gs = 0.0
                        for ko in range(k):
                            gs += gy[ni, ko, oy, ox] * w[ko, ci, ky, kx]
                        val = 0.0
                        dvy = 0.0
                        dvx = 0.0
                        for dy in range(2):
                            yy = y0 + dy
                            if yy < 0 or yy >= h:
                                continue
                            wy = fy if dy == 1 else 1 - fy
                            sy = 1.0 if dy == 1 else -1.0
                            for dx in range(2):
                                xx = x0 + dx
                                if xx < 0 or xx >= wd:
                                    continue
                                wx = fx if dx == 1 else 1 - fx
                                sx = 1.0 if dx == 1 else -1.0
                                xv = x[ni, ci, yy, xx]
                                val += xv * wy * wx
                                dvy += xv * sy * wx
                                dvx += xv * wy * sx
                                gx[ni, ci, yy, xx] += gs * wy * wx
                        goff[ni, 2 * t, oy, ox] += gs * dvy
                        goff[ni, 2 * t + 1, oy, ox] += gs * dvx
                        for ko in range(k):
                            gw[ko, ci, ky, kx] += gy[ni, ko, oy, ox] * val
    return gx, goff, gw
