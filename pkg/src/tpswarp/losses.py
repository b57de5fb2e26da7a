"""Loss suite and the pixel-residual evaluation metric.

Reconstruction quality is scored with MS-SSIM: single-scale structural
similarity (luminance, contrast, structure under an 11x11 Gaussian window)
evaluated over a dyadic pyramid.  Per scale the mean contrast/structure
term is raised to that scale's weight; the luminance comparison enters
only at the coarsest scale, folded into the full similarity map there.
Multi-channel images are scored per channel and the channel scores
averaged.

All losses the solver consumes come with analytic gradients:

* ``reconstruction_loss``  -(MS-SSIM + 1)/2, gradient w.r.t. the second
  image (the warped estimate),
* ``grid_loss``            mean squared coordinate error in px^2,
* ``semantic_ce_loss``     mean pixel-wise cross-entropy against a label
  map, gradient w.r.t. the predicted class probabilities.

``residual_stats`` implements the evaluation metric: the per-pixel
Euclidean distance between estimated and true sampling grids, pooled over
all pixels of all images (population statistics, not mean-of-means).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from tpswarp import kernels
from tpswarp.images import ImageBuffer, LabelMap
from tpswarp.tps import SamplingGrid

# De-facto standard five-scale weights, normalized to sum exactly to 1
# (the canonical constants sum to 1.0001).
_RAW_SCALE_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
DEFAULT_SCALE_WEIGHTS = tuple(w / sum(_RAW_SCALE_WEIGHTS) for w in _RAW_SCALE_WEIGHTS)

DEFAULT_GRID_WEIGHT = 100.0
DEFAULT_SEMANTIC_WEIGHT = 0.25

CE_EPSILON = 1e-7

_TERM_FLOOR = 1e-12


@dataclass(frozen=True)
class MsSsimConfig:
    """MS-SSIM parameters.

    Scales beyond what the image supports (each pyramid level must still
    fit the window) are dropped automatically, with the remaining scale
    weights renormalized.
    """

    scales: int = 5
    scale_weights: tuple[float, ...] = DEFAULT_SCALE_WEIGHTS
    window_size: int = 11
    window_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0

    def __post_init__(self):
        if self.scales < 1:
            raise ValueError("need at least one scale")
        if len(self.scale_weights) != self.scales:
            raise ValueError("one weight per scale required")
        if abs(sum(self.scale_weights) - 1.0) > 1e-9:
            raise ValueError("scale weights must sum to 1")
        if self.window_size < 3 or self.window_size % 2 == 0:
            raise ValueError("window side must be odd and >= 3")
        if self.window_sigma <= 0:
            raise ValueError("window sigma must be positive")


def _gaussian_taps(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    taps = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def _effective_levels(cfg: MsSsimConfig, height: int, width: int) -> int:
    levels = 0
    h, w = height, width
    while levels < cfg.scales and min(h, w) >= cfg.window_size:
        levels += 1
        h //= 2
        w //= 2
    if levels == 0:
        raise ValueError(
            f"image {width}x{height} is smaller than the {cfg.window_size}px window"
        )
    return levels


def _downsample2(img: np.ndarray) -> np.ndarray:
    h2, w2 = img.shape[0] // 2, img.shape[1] // 2
    crop = img[: 2 * h2, : 2 * w2]
    return crop.reshape(h2, 2, w2, 2, -1).mean(axis=(1, 3))


def _downsample2_adjoint(up: np.ndarray, height: int, width: int) -> np.ndarray:
    h2, w2 = up.shape[:2]
    out = np.zeros((height, width, up.shape[2]))
    out[: 2 * h2, : 2 * w2] = np.repeat(np.repeat(up, 2, axis=0), 2, axis=1) / 4.0
    return out


def _blur_valid(stack: np.ndarray, taps: np.ndarray) -> np.ndarray:
    return kernels.sepconv2_valid(np.ascontiguousarray(stack), taps)


def _blur_adjoint(up: np.ndarray, taps: np.ndarray) -> np.ndarray:
    k = taps.size
    padded = np.pad(up, ((k - 1, k - 1), (k - 1, k - 1), (0, 0)))
    return kernels.sepconv2_valid(padded, np.ascontiguousarray(taps[::-1]))


def _msssim_core(a: ImageBuffer, b: ImageBuffer, cfg: MsSsimConfig, want_grad: bool):
    if a.data.shape != b.data.shape:
        raise ValueError(
            f"image shapes differ: {a.data.shape} vs {b.data.shape}"
        )
    height, width, nchan = a.data.shape
    levels = _effective_levels(cfg, height, width)
    weights = np.asarray(cfg.scale_weights[:levels])
    weights = weights / weights.sum()
    taps = _gaussian_taps(cfg.window_size, cfg.window_sigma)
    c1 = (cfg.k1 * cfg.dynamic_range) ** 2
    c2 = (cfg.k2 * cfg.dynamic_range) ** 2

    terms = np.empty((levels, nchan))
    saved = []
    cur_a, cur_b = a.data, b.data
    for level in range(levels):
        is_last = level == levels - 1
        stack = np.concatenate(
            [cur_a, cur_b, cur_a * cur_a, cur_b * cur_b, cur_a * cur_b], axis=2
        )
        mu_a, mu_b, raw_aa, raw_bb, raw_ab = np.split(_blur_valid(stack, taps), 5, axis=2)
        num = 2.0 * (raw_ab - mu_a * mu_b) + c2
        den = (raw_aa - mu_a * mu_a) + (raw_bb - mu_b * mu_b) + c2
        cs_map = num / den
        if is_last:
            num_l = 2.0 * mu_a * mu_b + c1
            den_l = mu_a * mu_a + mu_b * mu_b + c1
            lum_map = num_l / den_l
            sim_map = lum_map * cs_map
        else:
            lum_map = num_l = den_l = None
            sim_map = cs_map
        pos = sim_map > 0.0
        terms[level] = np.where(pos, sim_map, 0.0).mean(axis=(0, 1))
        if want_grad:
            saved.append(
                (cur_a, cur_b, mu_a, mu_b, num, den, cs_map, num_l, den_l, lum_map, pos)
            )
        if not is_last:
            cur_a = _downsample2(cur_a)
            cur_b = _downsample2(cur_b)

    floored = np.maximum(terms, _TERM_FLOOR)
    per_channel = np.prod(floored ** weights[:, None], axis=0)
    value = float(per_channel.mean())
    if not want_grad:
        return value, None

    # d(value)/d(term[level, channel]); zero through floored-out terms.
    dterm = per_channel[None, :] * weights[:, None] / floored / nchan
    dterm[terms < _TERM_FLOOR] = 0.0

    grad = None
    for level in range(levels - 1, -1, -1):
        cur_a, cur_b, mu_a, mu_b, num, den, cs_map, num_l, den_l, lum_map, pos = saved[level]
        npix = cs_map.shape[0] * cs_map.shape[1]
        up = np.where(pos, dterm[level][None, None, :] / npix, 0.0)
        if lum_map is None:
            up_cs = up
            g_mu_b = up_cs * 2.0 * (mu_b * num / (den * den) - mu_a / den)
        else:
            up_cs = up * lum_map
            g_mu_b = up_cs * 2.0 * (mu_b * num / (den * den) - mu_a / den)
            g_mu_b += (
                up
                * cs_map
                * 2.0
                * (mu_a / den_l - mu_b * num_l / (den_l * den_l))
            )
        g_raw_ab = up_cs * (2.0 / den)
        g_raw_bb = -up_cs * num / (den * den)
        adj = _blur_adjoint(np.concatenate([g_mu_b, g_raw_bb, g_raw_ab], axis=2), taps)
        a_mu, a_bb, a_ab = np.split(adj, 3, axis=2)
        g_level = a_mu + 2.0 * cur_b * a_bb + cur_a * a_ab
        if grad is None:
            grad = g_level
        else:
            grad = g_level + _downsample2_adjoint(grad, cur_b.shape[0], cur_b.shape[1])
    return value, grad


def ms_ssim(a: ImageBuffer, b: ImageBuffer, cfg: MsSsimConfig | None = None) -> float:
    """MS-SSIM index of two images; 1.0 iff the images are identical."""
    value, _ = _msssim_core(a, b, cfg or MsSsimConfig(), want_grad=False)
    return value


def ms_ssim_grad(
    a: ImageBuffer, b: ImageBuffer, cfg: MsSsimConfig | None = None
) -> tuple[float, np.ndarray]:
    """MS-SSIM index plus its gradient with respect to image `b`."""
    return _msssim_core(a, b, cfg or MsSsimConfig(), want_grad=True)


def reconstruction_loss(
    a: ImageBuffer, b: ImageBuffer, cfg: MsSsimConfig | None = None
) -> tuple[float, np.ndarray]:
    """-(MS-SSIM(a, b) + 1) / 2 and its gradient w.r.t. `b`.

    Lies in [-1, 0); equals -1 iff the images are identical.
    """
    value, grad = ms_ssim_grad(a, b, cfg)
    return -(value + 1.0) / 2.0, -0.5 * grad


def grid_loss(estimated: SamplingGrid, truth: SamplingGrid) -> tuple[float, np.ndarray]:
    """Mean squared coordinate error between two grids, px^2.

    Returns the loss and its gradient w.r.t. the estimated grid,
    2 * (estimated - truth) / N per pixel.
    """
    if estimated.coords.shape != truth.coords.shape:
        raise ValueError(
            f"grid shapes differ: {estimated.coords.shape} vs {truth.coords.shape}"
        )
    npix = estimated.height * estimated.width
    diff = estimated.coords - truth.coords
    loss = float((diff * diff).sum() / npix)
    return loss, 2.0 * diff / npix


def semantic_ce_loss(
    predicted_probs: ImageBuffer, truth: LabelMap
) -> tuple[float, np.ndarray]:
    """Mean pixel-wise cross-entropy of class probabilities vs true labels.

    Per pixel: -ln(max(p_true_class, eps)), eps = 1e-7.  Returns the loss
    and its gradient w.r.t. the predicted probabilities (nonzero only on
    each pixel's true-class channel; zero where the clamp is active).
    """
    probs = predicted_probs.data
    if probs.shape[:2] != truth.data.shape:
        raise ValueError(
            f"probability/label shapes differ: {probs.shape[:2]} vs {truth.data.shape}"
        )
    nclass = probs.shape[2]
    if int(truth.data.max()) >= nclass:
        raise ValueError("label id exceeds probability channels")
    sums = probs.sum(axis=2)
    if np.abs(sums - 1.0).max() > 1e-4:
        raise ValueError("probabilities must sum to 1 per pixel")
    npix = truth.data.size
    idx = truth.data[:, :, None].astype(np.intp)
    p_true = np.take_along_axis(probs, idx, axis=2)[:, :, 0]
    clamped = np.maximum(p_true, CE_EPSILON)
    loss = float(np.mean(-np.log(clamped)))
    grad = np.zeros_like(probs)
    slope = np.where(p_true > CE_EPSILON, -1.0 / (clamped * npix), 0.0)
    np.put_along_axis(grad, idx, slope[:, :, None], axis=2)
    return loss, grad


def joint_loss(
    reconstruction: float | None,
    grid: float | None = None,
    semantic: float | None = None,
    grid_weight: float = DEFAULT_GRID_WEIGHT,
    semantic_weight: float = DEFAULT_SEMANTIC_WEIGHT,
) -> float:
    """Weighted sum of the enabled loss components; absent ones contribute 0."""
    if reconstruction is None and grid is None and semantic is None:
        raise ValueError("at least one loss component is required")
    total = 0.0
    if reconstruction is not None:
        total += reconstruction
    if grid is not None:
        total += grid_weight * grid
    if semantic is not None:
        total += semantic_weight * semantic
    return total


@dataclass(frozen=True)
class ImageResidual:
    """Residual-norm statistics of a single image."""

    mean_px: float
    std_px: float
    pixels: int
    stem: str | None = None

    def to_dict(self) -> dict:
        row = {"mean_px": self.mean_px, "std_px": self.std_px, "pixels": self.pixels}
        if self.stem is not None:
            row["stem"] = self.stem
        return row


@dataclass(frozen=True)
class ResidualReport:
    """Pixel-residual norms pooled over a set of images."""

    images: int
    pixels: int
    mean_px: float
    std_px: float
    per_image: tuple[ImageResidual, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "images": self.images,
            "pixels": self.pixels,
            "mean_px": self.mean_px,
            "std_px": self.std_px,
            "per_image": [row.to_dict() for row in self.per_image],
        }


def residual_stats(
    estimated: list[SamplingGrid],
    truth: list[SamplingGrid],
    stems: list[str] | None = None,
) -> ResidualReport:
    """Per-pixel distances between paired grids, pooled across all images.

    The aggregate mean/std are population statistics over the concatenated
    pixel norms of every image (not a mean of per-image means).
    """
    if len(estimated) != len(truth):
        raise ValueError(f"paired lists required: {len(estimated)} vs {len(truth)}")
    if not estimated:
        raise ValueError("at least one grid pair is required")
    if stems is not None and len(stems) != len(estimated):
        raise ValueError("one stem per grid pair required")
    total = 0.0
    total_sq = 0.0
    count = 0
    rows = []
    for i, (est, ref) in enumerate(zip(estimated, truth)):
        if est.coords.shape != ref.coords.shape:
            raise ValueError(f"grid pair {i} has mismatched dims")
        diff = est.coords - ref.coords
        norms = np.sqrt((diff * diff).sum(axis=2))
        total += norms.sum()
        total_sq += (norms * norms).sum()
        count += norms.size
        rows.append(
            ImageResidual(
                mean_px=float(norms.mean()),
                std_px=float(norms.std()),
                pixels=norms.size,
                stem=None if stems is None else stems[i],
            )
        )
    mean = total / count
    var = max(total_sq / count - mean * mean, 0.0)
    return ResidualReport(
        images=len(rows),
        pixels=count,
        mean_px=float(mean),
        std_px=float(np.sqrt(var)),
        per_image=tuple(rows),
    )
