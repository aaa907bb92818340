"""Ground-truth density maps from head annotations.

Each head contributes a truncated 2-D Gaussian, evaluated at integer pixel
coordinates and renormalized over its truncated (and, near borders, clipped)
support so that every head adds exactly 1 to the map integral.  The
bandwidth is ``sigma0`` scaled by the annotation's perspective profile at
the head's row.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import BoundsError, ParameterError
from .tensor_io import HeadAnnotations

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GaussianSpec:
    """Base bandwidth (pixels) and truncation radius (multiples of sigma)."""

    sigma0: float = 3.0
    truncation_radius: float = 4.0

    def __post_init__(self):
        if not (self.sigma0 > 0):
            raise ParameterError(f"sigma0 must be positive, got {self.sigma0}")
        if not (self.truncation_radius >= 3):
            raise ParameterError(
                f"truncation_radius must be >= 3 sigma, got {self.truncation_radius}"
            )


def build_density_map(annotations: HeadAnnotations, spec: GaussianSpec) -> np.ndarray:
    """Render one unit-mass kernel per head; integral equals the head count.

    Heads are rendered in annotation order so the float summation order, and
    therefore the output, is reproducible bit-for-bit.
    """
    height, width = annotations.height, annotations.width
    density = np.zeros((height, width), dtype=np.float64)
    clipped = 0
    for x, y in annotations.points:
        sigma = spec.sigma0 * float(annotations.scale_at(y))
        radius = spec.truncation_radius * sigma
        col_lo, col_hi = math.ceil(x - radius), math.floor(x + radius)
        row_lo, row_hi = math.ceil(y - radius), math.floor(y + radius)
        if col_lo < 0 or row_lo < 0 or col_hi > width - 1 or row_hi > height - 1:
            clipped += 1
        col_lo, col_hi = max(col_lo, 0), min(col_hi, width - 1)
        row_lo, row_hi = max(row_lo, 0), min(row_hi, height - 1)
        rows = np.arange(row_lo, row_hi + 1, dtype=np.float64)
        cols = np.arange(col_lo, col_hi + 1, dtype=np.float64)
        kernel = np.exp(
            -(np.add.outer((rows - y) ** 2, (cols - x) ** 2)) / (2.0 * sigma * sigma)
        )
        kernel /= kernel.sum()
        density[row_lo : row_hi + 1, col_lo : col_hi + 1] += kernel
    if clipped:
        logger.info(
            "%d of %d kernels clipped at the image border and renormalized",
            clipped,
            len(annotations.points),
        )
    return density


def region_count(density, region) -> float:
    """Sum of the density map over a rectangular region (x, y, w, h)."""
    density = np.asarray(density, dtype=np.float64)
    x, y, w, h = (int(v) for v in region)
    height, width = density.shape
    if w < 1 or h < 1 or x < 0 or y < 0 or x + w > width or y + h > height:
        raise BoundsError(
            f"region {(x, y, w, h)} outside {width}x{height} image or degenerate"
        )
    return float(density[y : y + h, x : x + w].sum())
