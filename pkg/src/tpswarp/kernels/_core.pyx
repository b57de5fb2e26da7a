# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled per-pixel kernels: bilinear/nearest sampling and separable
convolution.  Mirrors tpswarp.kernels.numpy_backend operation for operation."""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()

NAME = "compiled"


cdef inline double _clampd(double v, double lo, double hi) nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


def bilinear_forward(double[:, :, ::1] image, double[::1] xs, double[::1] ys):
    """Sample `image` (H, W, C) at coordinates (xs, ys), clamped to the border.

    Returns an (N, C) array of interpolated values.
    """
    cdef Py_ssize_t h = image.shape[0]
    cdef Py_ssize_t w = image.shape[1]
    cdef Py_ssize_t c = image.shape[2]
    cdef Py_ssize_t n = xs.shape[0]
    out_arr = np.empty((n, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, ch, x0, y0, x1, y1
    cdef double xc, yc, fx, fy, w00, w10, w01, w11
    cdef Py_ssize_t xmax = w - 2 if w >= 2 else 0
    cdef Py_ssize_t ymax = h - 2 if h >= 2 else 0
    with nogil:
        for i in range(n):
            xc = _clampd(xs[i], 0.0, w - 1.0)
            yc = _clampd(ys[i], 0.0, h - 1.0)
            x0 = <Py_ssize_t>floor(xc)
            y0 = <Py_ssize_t>floor(yc)
            if x0 > xmax:
                x0 = xmax
            if y0 > ymax:
                y0 = ymax
            x1 = x0 + 1 if x0 + 1 < w else w - 1
            y1 = y0 + 1 if y0 + 1 < h else h - 1
            fx = xc - x0
            fy = yc - y0
            w00 = (1.0 - fx) * (1.0 - fy)
            w10 = fx * (1.0 - fy)
            w01 = (1.0 - fx) * fy
            w11 = fx * fy
            for ch in range(c):
                out[i, ch] = (w00 * image[y0, x0, ch] + w10 * image[y0, x1, ch]
                              + w01 * image[y1, x0, ch] + w11 * image[y1, x1, ch])
    return out_arr


def bilinear_backward(double[:, :, ::1] image, double[::1] xs, double[::1] ys,
                      double[:, ::1] upstream):
    """Gradient of the bilinear sample w.r.t. the coordinates.

    `upstream` is (N, C); the result is (N, 2) holding d(loss)/dx and
    d(loss)/dy summed over channels.  Coordinates clamped at the border get
    zero gradient along the clamped axis (the clamp saturates there).
    """
    cdef Py_ssize_t h = image.shape[0]
    cdef Py_ssize_t w = image.shape[1]
    cdef Py_ssize_t c = image.shape[2]
    cdef Py_ssize_t n = xs.shape[0]
    out_arr = np.empty((n, 2), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, ch, x0, y0, x1, y1
    cdef double xc, yc, fx, fy, gx, gy, v00, v10, v01, v11, u
    cdef Py_ssize_t xmax = w - 2 if w >= 2 else 0
    cdef Py_ssize_t ymax = h - 2 if h >= 2 else 0
    with nogil:
        for i in range(n):
            xc = _clampd(xs[i], 0.0, w - 1.0)
            yc = _clampd(ys[i], 0.0, h - 1.0)
            x0 = <Py_ssize_t>floor(xc)
            y0 = <Py_ssize_t>floor(yc)
            if x0 > xmax:
                x0 = xmax
            if y0 > ymax:
                y0 = ymax
            x1 = x0 + 1 if x0 + 1 < w else w - 1
            y1 = y0 + 1 if y0 + 1 < h else h - 1
            fx = xc - x0
            fy = yc - y0
            gx = 0.0
            gy = 0.0
            for ch in range(c):
                v00 = image[y0, x0, ch]
                v10 = image[y0, x1, ch]
                v01 = image[y1, x0, ch]
                v11 = image[y1, x1, ch]
                u = upstream[i, ch]
                gx += u * ((1.0 - fy) * (v10 - v00) + fy * (v11 - v01))
                gy += u * ((1.0 - fx) * (v01 - v00) + fx * (v11 - v10))
            if not (0.0 < xs[i] < w - 1.0):
                gx = 0.0
            if not (0.0 < ys[i] < h - 1.0):
                gy = 0.0
            out[i, 0] = gx
            out[i, 1] = gy
    return out_arr


def nearest_forward(cnp.int32_t[:, ::1] labels, double[::1] xs, double[::1] ys):
    """Nearest-neighbour lookup into `labels` (H, W) int32, round half up."""
    cdef Py_ssize_t h = labels.shape[0]
    cdef Py_ssize_t w = labels.shape[1]
    cdef Py_ssize_t n = xs.shape[0]
    out_arr = np.empty(n, dtype=np.int32)
    cdef cnp.int32_t[::1] out = out_arr
    cdef Py_ssize_t i, ix, iy
    cdef double rx, ry
    with nogil:
        for i in range(n):
            rx = floor(xs[i] + 0.5)
            ry = floor(ys[i] + 0.5)
            ix = <Py_ssize_t>_clampd(rx, 0.0, w - 1.0)
            iy = <Py_ssize_t>_clampd(ry, 0.0, h - 1.0)
            out[i] = labels[iy, ix]
    return out_arr


def sepconv2_valid(double[:, :, ::1] stack, double[::1] taps):
    """Separable 2-D correlation of `stack` (H, W, C) with 1-D `taps`.

    'valid' extent: output is (H-K+1, W-K+1, C).
    """
    cdef Py_ssize_t h = stack.shape[0]
    cdef Py_ssize_t w = stack.shape[1]
    cdef Py_ssize_t c = stack.shape[2]
    cdef Py_ssize_t k = taps.shape[0]
    cdef Py_ssize_t oh = h - k + 1
    cdef Py_ssize_t ow = w - k + 1
    tmp_arr = np.zeros((oh, w, c), dtype=np.float64)
    out_arr = np.zeros((oh, ow, c), dtype=np.float64)
    cdef double[:, :, ::1] tmp = tmp_arr
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, j, ch, t
    cdef double tap
    with nogil:
        for t in range(k):
            tap = taps[t]
            for i in range(oh):
                for j in range(w):
                    for ch in range(c):
                        tmp[i, j, ch] += tap * stack[i + t, j, ch]
        for t in range(k):
            tap = taps[t]
            for i in range(oh):
                for j in range(ow):
                    for ch in range(c):
                        out[i, j, ch] += tap * tmp[i, j + t, ch]
    return out_arr
