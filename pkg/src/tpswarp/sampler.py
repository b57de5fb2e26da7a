"""Differentiable grid sampling.

Backward warping: each output pixel fetches from the input at the grid
coordinate.  Images use bilinear interpolation, label maps nearest
neighbour (round half up).  Coordinates outside the image are clamped to
the border (replicate) before interpolation; zero-filling would inject
dark regions that dominate similarity losses and bias a solver toward
shrinking warps.

`bilinear_sample_backward` provides the sampler's analytic gradient with
respect to the grid coordinates, which is what makes end-to-end gradient
descent over warp parameters possible.
"""

from __future__ import annotations

import numpy as np

from tpswarp import kernels
from tpswarp.images import ImageBuffer, LabelMap
from tpswarp.tps import SamplingGrid


def bilinear_sample(image: ImageBuffer, grid: SamplingGrid) -> ImageBuffer:
    """Warp `image` by bilinear interpolation at the grid coordinates.

    Output dimensions follow the grid.  Values are clipped to [0, 1] to
    shed the ulp-level overshoot of the interpolation weights.
    """
    xs, ys = grid.flat_xy
    out = kernels.bilinear_forward(image.data, xs, ys)
    np.clip(out, 0.0, 1.0, out=out)
    return ImageBuffer(out.reshape(grid.height, grid.width, image.channels))


def bilinear_sample_backward(
    image: ImageBuffer, grid: SamplingGrid, upstream: np.ndarray
) -> np.ndarray:
    """Gradient of a loss w.r.t. the grid coordinates, shape (H, W, 2).

    `upstream` is d(loss)/d(sampled output), shape (H, W, C) matching the
    grid dimensions and image channel count.  The interpolation derivative
    is summed over channels; at border-clamped coordinates the component
    normal to the border is zero.
    """
    up = np.asarray(upstream, dtype=np.float64)
    expected = (grid.height, grid.width, image.channels)
    if up.shape != expected:
        raise ValueError(f"upstream must have shape {expected}, got {up.shape}")
    xs, ys = grid.flat_xy
    grad = kernels.bilinear_backward(
        image.data, xs, ys, np.ascontiguousarray(up.reshape(-1, image.channels))
    )
    return grad.reshape(grid.height, grid.width, 2)


def nearest_sample(labels: LabelMap, grid: SamplingGrid) -> LabelMap:
    """Warp a label map by nearest-neighbour lookup (round half up)."""
    xs, ys = grid.flat_xy
    out = kernels.nearest_forward(labels.data, xs, ys)
    return LabelMap(out.reshape(grid.height, grid.width))


def onehot_encode(labels: LabelMap, num_classes: int) -> ImageBuffer:
    """One-hot class indicators as a float image, (H, W, num_classes)."""
    if num_classes < int(labels.data.max()) + 1:
        raise ValueError("num_classes must cover every label present")
    flat = np.zeros((labels.data.size, num_classes))
    flat[np.arange(labels.data.size), labels.data.ravel()] = 1.0
    return ImageBuffer(flat.reshape(labels.height, labels.width, num_classes))


def onehot_sample(labels: LabelMap, grid: SamplingGrid, num_classes: int) -> ImageBuffer:
    """Differentiable label warp: bilinear interpolation of one-hot channels.

    Per output pixel the channels are a convex combination of the four
    neighbouring one-hot vectors, so they sum to 1.
    """
    onehot = onehot_encode(labels, num_classes)
    xs, ys = grid.flat_xy
    out = kernels.bilinear_forward(onehot.data, xs, ys)
    return ImageBuffer(out.reshape(grid.height, grid.width, num_classes))
