"""Pure-numpy implementations of the hot per-pixel kernels.

Used when the compiled extension (`tpswarp.kernels._core`) is not built.
Both backends implement the same signatures and the same arithmetic
(identical operation order for the sampling kernels, so results agree to
the last few ulps).
"""

import numpy as np

NAME = "numpy"


def _neighbourhood(image, xs, ys):
    """Clamped corner indices and fractional offsets for bilinear lookup."""
    h, w = image.shape[:2]
    xc = np.clip(xs, 0.0, w - 1.0)
    yc = np.clip(ys, 0.0, h - 1.0)
    x0 = np.clip(np.floor(xc), 0, max(w - 2, 0)).astype(np.intp)
    y0 = np.clip(np.floor(yc), 0, max(h - 2, 0)).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xc - x0
    fy = yc - y0
    return x0, y0, x1, y1, fx, fy


def bilinear_forward(image, xs, ys):
    """Sample `image` (H, W, C) at coordinates (xs, ys), clamped to the border.

    Returns an (N, C) array of interpolated values.
    """
    x0, y0, x1, y1, fx, fy = _neighbourhood(image, xs, ys)
    v00 = image[y0, x0]
    v10 = image[y0, x1]
    v01 = image[y1, x0]
    v11 = image[y1, x1]
    fx = fx[:, None]
    fy = fy[:, None]
    w00 = (1.0 - fx) * (1.0 - fy)
    w10 = fx * (1.0 - fy)
    w01 = (1.0 - fx) * fy
    w11 = fx * fy
    return w00 * v00 + w10 * v10 + w01 * v01 + w11 * v11


def bilinear_backward(image, xs, ys, upstream):
    """Gradient of the bilinear sample w.r.t. the coordinates.

    `upstream` is (N, C); the result is (N, 2) holding d(loss)/dx and
    d(loss)/dy summed over channels.  Coordinates clamped at the border get
    zero gradient along the clamped axis (the clamp saturates there).
    """
    h, w = image.shape[:2]
    x0, y0, x1, y1, fx, fy = _neighbourhood(image, xs, ys)
    v00 = image[y0, x0]
    v10 = image[y0, x1]
    v01 = image[y1, x0]
    v11 = image[y1, x1]
    fx = fx[:, None]
    fy = fy[:, None]
    ddx = (1.0 - fy) * (v10 - v00) + fy * (v11 - v01)
    ddy = (1.0 - fx) * (v01 - v00) + fx * (v11 - v10)
    gx = np.sum(upstream * ddx, axis=1)
    gy = np.sum(upstream * ddy, axis=1)
    gx *= (xs > 0.0) & (xs < w - 1.0)
    gy *= (ys > 0.0) & (ys < h - 1.0)
    return np.stack([gx, gy], axis=1)


def nearest_forward(labels, xs, ys):
    """Nearest-neighbour lookup into `labels` (H, W) int32, round half up."""
    h, w = labels.shape
    ix = np.clip(np.floor(xs + 0.5), 0, w - 1).astype(np.intp)
    iy = np.clip(np.floor(ys + 0.5), 0, h - 1).astype(np.intp)
    return labels[iy, ix]


def sepconv2_valid(stack, taps):
    """Separable 2-D correlation of `stack` (H, W, C) with 1-D `taps`.

    'valid' extent: output is (H-K+1, W-K+1, C).
    """
    k = taps.size
    h, w = stack.shape[:2]
    oh, ow = h - k + 1, w - k + 1
    tmp = taps[0] * stack[:oh]
    for i in range(1, k):
        tmp += taps[i] * stack[i : oh + i]
    out = taps[0] * tmp[:, :ow]
    for i in range(1, k):
        out += taps[i] * tmp[:, i : ow + i]
    return out
