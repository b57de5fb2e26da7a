"""Image and label-map containers.

Images are H x W x C float64 arrays with values in [0, 1].  Picture files
carry 1 to 4 channels (enforced at the I/O layer); wider buffers appear
internally as per-class probability stacks.  Label maps are H x W int32
arrays over the fixed 13-class street-scene vocabulary below.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CLASS_NAMES = (
    "none",
    "buildings",
    "fences",
    "other",
    "pedestrians",
    "poles",
    "road_lines",
    "roads",
    "sidewalks",
    "vegetation",
    "vehicles",
    "walls",
    "traffic_signs",
)
NUM_CLASSES = len(CLASS_NAMES)

# Display palette for indexed-PNG label files.  The colors are an arbitrary
# fixed choice with no semantics; only the indices matter.
LABEL_PALETTE = (
    (0, 0, 0),
    (70, 70, 70),
    (190, 153, 153),
    (250, 170, 160),
    (220, 20, 60),
    (153, 153, 153),
    (157, 234, 50),
    (128, 64, 128),
    (244, 35, 232),
    (107, 142, 35),
    (0, 0, 142),
    (102, 102, 156),
    (220, 220, 0),
)

_VALUE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """H x W x C image, float64 values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3:
            raise ValueError(f"image data must be (H, W, C), got {data.shape}")
        if data.shape[2] < 1:
            raise ValueError("image needs at least one channel")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("image must be nonempty")
        if not np.isfinite(data).all():
            raise ValueError("image values must be finite")
        if data.min() < -_VALUE_TOL or data.max() > 1.0 + _VALUE_TOL:
            raise ValueError("image values must lie in [0, 1]")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True, eq=False)
class LabelMap:
    """H x W int32 class-id map over the 13-class vocabulary."""

    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.int32)
        if data.ndim != 2:
            raise ValueError(f"label data must be (H, W), got {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("label map must be nonempty")
        if data.size and (data.min() < 0 or data.max() >= NUM_CLASSES):
            raise ValueError(f"labels must be class ids in [0, {NUM_CLASSES - 1}]")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]
