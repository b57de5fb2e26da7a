"""Thin-plate-spline warp model.

A 2D->2D thin plate spline is an affine map plus radial-basis terms
phi(r) = r^2 ln(r) anchored at n fixed target control points.  Solving the
augmented interpolation system

    [ K   1   T ] [ w ]   [ s ]
    [ 1^T 0   0 ] [ a ] = [ 0 ]
    [ T^T 0   0 ]

(one right-hand side per output coordinate, T the n x 2 target matrix,
K the pairwise kernel among targets, s the source coordinates) yields warp
weights w with zero sum and zero target moments, so the spline has minimal
bending energy and reproduces affine maps exactly.

The warp is used for backward image warping: targets live on a fixed 4x4
grid in the output (undistorted) frame and the solved spline sends every
output pixel to the coordinate in the input frame it should sample from.
Because the augmented system is linear in the source coordinates, the
whole pixel grid is a linear function of the sources; that linear map is
exposed as `grid_source_jacobian` and drives the gradient-descent solver.

Coordinates are pixel units: origin at the top-left pixel centre, x to the
right, y downward.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

MIN_CONTROL_POINTS = 4

# Reject target configurations whose augmented system is this ill-conditioned.
MAX_CONDITION = 1e12


class DegenerateTargetsError(ValueError):
    """Target control points admit no stable spline (e.g. collinear)."""


def _as_points(points) -> np.ndarray:
    pts = np.ascontiguousarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"control points must be (n, 2), got {pts.shape}")
    return pts


@dataclass(frozen=True, eq=False)
class ControlPointSet:
    """Ordered 2D control points (x, y) in pixel units, shape (n, 2)."""

    points: np.ndarray

    def __post_init__(self):
        pts = _as_points(self.points)
        if pts.shape[0] < MIN_CONTROL_POINTS:
            raise ValueError(
                f"need at least {MIN_CONTROL_POINTS} control points, got {pts.shape[0]}"
            )
        if not np.isfinite(pts).all():
            raise ValueError("control points must be finite")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def translated(self, dx: float, dy: float) -> "ControlPointSet":
        return ControlPointSet(self.points + np.array([dx, dy]))


def make_target_grid(width: int, height: int, rows: int = 4, cols: int = 4) -> ControlPointSet:
    """Evenly spaced target control points spanning the full image.

    Row-major tensor grid of x in {k/(cols-1)}*(width-1), y in
    {k/(rows-1)}*(height-1); the default 4x4 grid places points at
    {0, 1/3, 2/3, 1} of each image dimension, borders included.
    """
    if width < 1 or height < 1:
        raise ValueError("image dimensions must be positive")
    if rows < 2 or cols < 2:
        raise ValueError("grid must be at least 2x2")
    xs = np.arange(cols) * float(width - 1) / (cols - 1)
    ys = np.arange(rows) * float(height - 1) / (rows - 1)
    gx, gy = np.meshgrid(xs, ys)
    return ControlPointSet(np.column_stack([gx.ravel(), gy.ravel()]))


def tps_rbf(r):
    """Thin-plate radial basis phi(r) = r^2 ln(r), extended with phi(0) = 0.

    Accepts a scalar or array of nonnegative radii.
    """
    arr = np.asarray(r, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise ValueError("radius must be finite")
    if (arr < 0).any():
        raise ValueError("radius must be nonnegative")
    safe = np.maximum(arr, np.finfo(np.float64).tiny)
    out = arr * arr * np.log(safe)
    if np.ndim(r) == 0:
        return float(out)
    return out


def _phi_sq(d2: np.ndarray) -> np.ndarray:
    # phi from squared distances: r^2 ln r = d2 * ln(d2) / 2, phi(0) = 0.
    safe = np.maximum(d2, np.finfo(np.float64).tiny)
    return 0.5 * d2 * np.log(safe)


def control_kernel(targets: ControlPointSet) -> np.ndarray:
    """Pairwise radial-basis kernel among targets: (n, n), zero diagonal."""
    pts = targets.points
    diff = pts[:, None, :] - pts[None, :, :]
    return _phi_sq(np.einsum("ijk,ijk->ij", diff, diff))


def tps_system_matrix(targets: ControlPointSet) -> np.ndarray:
    """Augmented spline system: kernel block bordered by 1s and the targets.

    Shape (n+3, n+3), symmetric, with a zero lower-right 3x3 block.  Raises
    DegenerateTargetsError when the condition estimate exceeds MAX_CONDITION
    (collinear or coincident targets).
    """
    n = targets.n
    sys = np.zeros((n + 3, n + 3))
    sys[:n, :n] = control_kernel(targets)
    sys[:n, n] = 1.0
    sys[n, :n] = 1.0
    sys[:n, n + 1 :] = targets.points
    sys[n + 1 :, :n] = targets.points.T
    if np.linalg.cond(sys) > MAX_CONDITION:
        raise DegenerateTargetsError(
            "target control points are degenerate (collinear or coincident)"
        )
    return sys


@functools.lru_cache(maxsize=32)
def _factorization(key: bytes, n: int):
    targets = ControlPointSet(np.frombuffer(key, dtype=np.float64).reshape(n, 2))
    return lu_factor(tps_system_matrix(targets))


def _solve_augmented(targets: ControlPointSet, rhs: np.ndarray) -> np.ndarray:
    # LU of the system matrix depends only on the targets; cache it.
    lu_piv = _factorization(targets.points.tobytes(), targets.n)
    return lu_solve(lu_piv, rhs)


@dataclass(frozen=True, eq=False)
class TpsTransform:
    """Solved spline parameters: (n+3, 2) with warp weights first, affine last.

    Column 0 parameterizes the output x coordinate, column 1 the y
    coordinate.  The three affine rows are ordered (constant, x, y)
    to match the augmented system's border columns.
    """

    params: np.ndarray
    targets: ControlPointSet

    def __post_init__(self):
        params = np.ascontiguousarray(self.params, dtype=np.float64)
        if params.shape != (self.targets.n + 3, 2):
            raise ValueError(
                f"params must be ({self.targets.n + 3}, 2), got {params.shape}"
            )
        params.flags.writeable = False
        object.__setattr__(self, "params", params)

    @property
    def n(self) -> int:
        return self.targets.n

    @property
    def warp_weights(self) -> np.ndarray:
        """Non-affine coefficients, (n, 2); zero for purely affine warps."""
        return self.params[: self.n]

    @property
    def affine(self) -> np.ndarray:
        """Affine part as a 2x3 matrix acting on (x, y, 1)."""
        n = self.n
        return np.column_stack([self.params[n + 1], self.params[n + 2], self.params[n]])


def solve_tps(sources: ControlPointSet, targets: ControlPointSet) -> TpsTransform:
    """Fit the spline that maps each target point to its source point.

    The solved transform interpolates: evaluating it at target k returns
    source k.  Identity sources give zero warp weights and an identity
    affine part.
    """
    if sources.n != targets.n:
        raise ValueError(
            f"source/target count mismatch: {sources.n} != {targets.n}"
        )
    rhs = np.zeros((targets.n + 3, 2))
    rhs[: targets.n] = sources.points
    return TpsTransform(_solve_augmented(targets, rhs), targets)


@dataclass(frozen=True, eq=False)
class SamplingGrid:
    """Per-pixel sample coordinates (x, y), shape (H, W, 2), pixel units.

    Coordinates may lie outside the image; the sampler's border rule
    resolves them.
    """

    coords: np.ndarray

    def __post_init__(self):
        coords = np.ascontiguousarray(self.coords, dtype=np.float64)
        if coords.ndim != 3 or coords.shape[2] != 2:
            raise ValueError(f"grid coords must be (H, W, 2), got {coords.shape}")
        if not np.isfinite(coords).all():
            raise ValueError("grid coordinates must be finite")
        coords.flags.writeable = False
        object.__setattr__(self, "coords", coords)

    @property
    def width(self) -> int:
        return self.coords.shape[1]

    @property
    def height(self) -> int:
        return self.coords.shape[0]

    @property
    def flat_xy(self) -> tuple[np.ndarray, np.ndarray]:
        flat = self.coords.reshape(-1, 2)
        return np.ascontiguousarray(flat[:, 0]), np.ascontiguousarray(flat[:, 1])


def reference_grid(width: int, height: int) -> SamplingGrid:
    """The identity grid: pixel (i, j) holds coordinate (j, i)."""
    gx, gy = np.meshgrid(np.arange(width, dtype=np.float64),
                         np.arange(height, dtype=np.float64))
    return SamplingGrid(np.stack([gx, gy], axis=-1))


def _flat_reference(width: int, height: int) -> np.ndarray:
    return reference_grid(width, height).coords.reshape(-1, 2)


def grid_kernel(grid_dims: tuple[int, int], targets: ControlPointSet) -> np.ndarray:
    """Radial-basis kernel between every pixel and every target: (W*H, n).

    Rows follow row-major pixel order; an entry is 0 where a pixel
    coincides with a target control point.
    """
    width, height = grid_dims
    if width < 1 or height < 1:
        raise ValueError("grid dimensions must be positive")
    pix = _flat_reference(width, height)
    d2 = (
        (pix**2).sum(axis=1)[:, None]
        - 2.0 * pix @ targets.points.T
        + (targets.points**2).sum(axis=1)[None, :]
    )
    # Cancellation can push tiny true-zero distances negative.
    np.maximum(d2, 0.0, out=d2)
    return _phi_sq(d2)


def _augmented_grid_basis(grid_dims: tuple[int, int], targets: ControlPointSet) -> np.ndarray:
    """[kernel | 1 | pixel coords]: the (W*H, n+3) row basis of the warp."""
    width, height = grid_dims
    n = targets.n
    basis = np.empty((width * height, n + 3))
    basis[:, :n] = grid_kernel(grid_dims, targets)
    basis[:, n] = 1.0
    basis[:, n + 1 :] = _flat_reference(width, height)
    return basis


def transform_grid(transform: TpsTransform, grid_dims: tuple[int, int]) -> SamplingGrid:
    """Evaluate the warp at every pixel of a width x height image."""
    width, height = grid_dims
    basis = _augmented_grid_basis(grid_dims, transform.targets)
    coords = basis @ transform.params
    return SamplingGrid(coords.reshape(height, width, 2))


def transform_points(transform: TpsTransform, points) -> np.ndarray:
    """Evaluate the warp at arbitrary (m, 2) points."""
    pts = _as_points(points)
    diff = pts[:, None, :] - transform.targets.points[None, :, :]
    kern = _phi_sq(np.einsum("ijk,ijk->ij", diff, diff))
    basis = np.hstack([kern, np.ones((pts.shape[0], 1)), pts])
    return basis @ transform.params


def grid_source_jacobian(targets: ControlPointSet, grid_dims: tuple[int, int]) -> np.ndarray:
    """Linear map from source control points to the sampling grid: (W*H, n).

    Row i gives d(grid_i.x)/d(source_k.x) = d(grid_i.y)/d(source_k.y);
    cross-axis partials are zero.  Each row sums to 1 (translating all
    sources translates the grid), and `jacobian @ sources` reproduces
    `transform_grid(solve_tps(sources, targets))` exactly — the solver
    and the distortion calibration both lean on this.
    """
    width, height = grid_dims
    n = targets.n
    rhs = np.zeros((n + 3, n))
    rhs[:n, :n] = np.eye(n)
    columns = _solve_augmented(targets, rhs)
    return _augmented_grid_basis(grid_dims, targets) @ columns
