"""Multiscale evaluation of count bounds over a square pyramid.

Scale 1 holds the largest squares that fit the image (side = min(H, W));
each further scale divides the side by ``delta`` (floored to pixels,
duplicate sides skipped) until ``min_side`` or ``max_scales`` is reached.
Squares are placed on a regular grid with stride ``side * stride_fraction``
plus flush-to-edge rows/columns, so the image borders stay covered.

Per region the ground-truth count g is compared against the interval
[w * sum(Bel), w * sum(Pl)].  Two indicators summarize a scale:

* PEP  -- fraction of regions whose g falls OUTSIDE the closed interval
  (the error-rate reading; ``as_printed=True`` gives the complementary
  set-membership fraction instead).
* RI   -- mean over regions of interval width / g; regions with g = 0 are
  excluded (and counted) since the ratio is undefined there.

All rectangle sums run on summed-area tables, one per layer, so a full
sweep touches every square in O(1) per square.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import BoundsError, CalibrationError, ParameterError, ShapeError
from .evidential import FusionResult

logger = logging.getLogger(__name__)


class Region(NamedTuple):
    x: int
    y: int
    w: int
    h: int


#: Region sums below this are treated as exactly zero when applying the
#: "g = 0" exclusion rules.  Summed-area-table cancellation leaves residues
#: of order 1e-12 on truly empty regions; genuine truncated-Gaussian tails
#: are orders of magnitude above this.
ZERO_COUNT_EPS = 1e-9


@dataclass(frozen=True)
class ScaleSpec:
    """Pyramid geometry: shrink factor, grid stride, stopping rules."""

    delta: float = 1.1
    stride_fraction: float = 0.25
    min_side: int = 16
    max_scales: int | None = None

    def __post_init__(self):
        if not (self.delta > 1.0):
            raise ParameterError(f"delta must exceed 1, got {self.delta}")
        if not (0.0 < self.stride_fraction <= 1.0):
            raise ParameterError(
                f"stride_fraction must lie in (0, 1], got {self.stride_fraction}"
            )
        if self.min_side < 1:
            raise ParameterError(f"min_side must be >= 1, got {self.min_side}")
        if self.max_scales is not None and self.max_scales < 1:
            raise ParameterError(f"max_scales must be >= 1, got {self.max_scales}")


@dataclass(frozen=True)
class RegionStats:
    """Count bounds for one square: g and w-scaled Bel/BetP/Pl sums."""

    origin: tuple[int, int]
    side: int
    g: float
    s_lower: float
    s_mid: float
    s_upper: float


@dataclass(frozen=True)
class EvalRecord:
    alpha: float
    scale_index: int
    side: int
    n_squares: int
    pep: float
    ri: float


@dataclass(frozen=True)
class EvalCurve:
    records: list[EvalRecord]


def scale_sides(height: int, width: int, spec: ScaleSpec) -> list[int]:
    """Strictly decreasing square sides of the pyramid, largest first."""
    base = min(height, width)
    if base < spec.min_side:
        raise ParameterError(
            f"image min dimension {base} is below min_side {spec.min_side}"
        )
    sides: list[int] = []
    index = 1
    while spec.max_scales is None or len(sides) < spec.max_scales:
        side = math.floor(base / spec.delta ** (index - 1))
        if side < spec.min_side:
            break
        if not sides or side != sides[-1]:
            sides.append(side)
        index += 1
    return sides


def _grid_positions(limit: int, side: int, stride_fraction: float) -> np.ndarray:
    """Origins along one axis: regular grid plus a flush-to-edge placement."""
    stride = max(1, math.floor(side * stride_fraction))
    positions = np.arange(0, limit - side + 1, stride, dtype=np.intp)
    flush = limit - side
    if positions[-1] != flush:
        positions = np.append(positions, flush)
    return positions


def enumerate_scales(height: int, width: int, spec: ScaleSpec) -> list[list[Region]]:
    """All squares of every scale, as Region lists (largest scale first)."""
    scales = []
    for side in scale_sides(height, width, spec):
        xs = _grid_positions(width, side, spec.stride_fraction)
        ys = _grid_positions(height, side, spec.stride_fraction)
        scales.append(
            [Region(int(x), int(y), side, side) for y in ys for x in xs]
        )
    return scales


def integral_image(values) -> np.ndarray:
    """Summed-area table with a zero border: table[i+1, j+1] = sum over [:i+1, :j+1]."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ShapeError(f"expected a 2-D map, got shape {values.shape}")
    table = np.zeros((values.shape[0] + 1, values.shape[1] + 1), dtype=np.float64)
    np.cumsum(values, axis=0, out=table[1:, 1:])
    np.cumsum(table[1:, 1:], axis=1, out=table[1:, 1:])
    return table


def region_sum(table: np.ndarray, region) -> float:
    """O(1) rectangle sum from a summed-area table."""
    x, y, w, h = (int(v) for v in region)
    height, width = table.shape[0] - 1, table.shape[1] - 1
    if w < 1 or h < 1 or x < 0 or y < 0 or x + w > width or y + h > height:
        raise BoundsError(
            f"region {(x, y, w, h)} outside {width}x{height} image or degenerate"
        )
    return float(table[y + h, x + w] - table[y, x + w] - table[y + h, x] + table[y, x])


def _region_sums(table: np.ndarray, xs, ys, ws, hs) -> np.ndarray:
    return table[ys + hs, xs + ws] - table[ys, xs + ws] - table[ys + hs, xs] + table[ys, xs]


def _regions_to_arrays(regions: Sequence[Region], height: int, width: int):
    xs = np.fromiter((r[0] for r in regions), dtype=np.intp, count=len(regions))
    ys = np.fromiter((r[1] for r in regions), dtype=np.intp, count=len(regions))
    ws = np.fromiter((r[2] for r in regions), dtype=np.intp, count=len(regions))
    hs = np.fromiter((r[3] for r in regions), dtype=np.intp, count=len(regions))
    bad = (ws < 1) | (hs < 1) | (xs < 0) | (ys < 0) | (xs + ws > width) | (ys + hs > height)
    if bad.any():
        index = int(np.argmax(bad))
        raise BoundsError(
            f"region {tuple(regions[index])} outside {width}x{height} image or degenerate"
        )
    return xs, ys, ws, hs


def compute_bounds(
    fusion: FusionResult,
    regions: Sequence[Region],
    w: float,
    gt=None,
) -> list[RegionStats]:
    """Count bounds per region: s_lower/s_mid/s_upper = w * sum(Bel/BetP/Pl).

    When ``gt`` is given, each region's ground-truth count is filled in;
    otherwise g is NaN (enough for bound-only uses).
    """
    if not (w > 0):
        raise ParameterError(f"w must be positive, got {w}")
    height, width = fusion.shape
    xs, ys, ws_arr, hs = _regions_to_arrays(regions, height, width)
    # Layers are non-negative, so true sums are too; clamp away the tiny
    # negative residues the table subtraction can leave on empty regions.
    lower = w * np.maximum(_region_sums(integral_image(fusion.bel), xs, ys, ws_arr, hs), 0.0)
    mid = w * np.maximum(_region_sums(integral_image(fusion.betp), xs, ys, ws_arr, hs), 0.0)
    upper = w * np.maximum(_region_sums(integral_image(fusion.pl), xs, ys, ws_arr, hs), 0.0)
    if gt is not None:
        gt = np.asarray(gt, dtype=np.float64)
        if gt.shape != fusion.shape:
            raise ShapeError(f"gt shape {gt.shape} differs from fusion {fusion.shape}")
        g = np.maximum(_region_sums(integral_image(gt), xs, ys, ws_arr, hs), 0.0)
    else:
        g = np.full(len(regions), np.nan)
    return [
        RegionStats(
            origin=(int(xs[i]), int(ys[i])),
            side=int(ws_arr[i]),
            g=float(g[i]),
            s_lower=float(lower[i]),
            s_mid=float(mid[i]),
            s_upper=float(upper[i]),
        )
        for i in range(len(regions))
    ]


def calibrate_w(betp_maps, gt_maps, regions) -> float:
    """Least-squares scalar relating predicted region sums to true counts.

    Minimizes sum((w * p_i - g_i)^2) over all regions of all map pairs:
    w* = sum(p_i * g_i) / sum(p_i^2).  ``regions`` is either one Region list
    shared by every pair or one list per pair.
    """
    if len(betp_maps) != len(gt_maps) or len(betp_maps) == 0:
        raise ParameterError("need equally many (nonzero) prediction and gt maps")
    if len(regions) > 0 and isinstance(regions[0], tuple):
        region_lists = [regions] * len(betp_maps)
    else:
        region_lists = list(regions)
        if len(region_lists) != len(betp_maps):
            raise ParameterError("need one region list per map pair")
    cross = square = 0.0
    for betp, gt, pair_regions in zip(betp_maps, gt_maps, region_lists):
        betp = np.asarray(betp, dtype=np.float64)
        gt = np.asarray(gt, dtype=np.float64)
        if betp.shape != gt.shape:
            raise ShapeError(f"map shapes differ: {betp.shape} vs {gt.shape}")
        xs, ys, ws, hs = _regions_to_arrays(pair_regions, *betp.shape)
        p = _region_sums(integral_image(betp), xs, ys, ws, hs)
        g = _region_sums(integral_image(gt), xs, ys, ws, hs)
        cross += float(p @ g)
        square += float(p @ p)
    if square <= 0.0:
        raise CalibrationError("all region predictions are zero; w is undetermined")
    return cross / square


def _pep_from_arrays(g, lower, upper, as_printed: bool) -> float:
    include = ~((g <= ZERO_COUNT_EPS) & (upper <= ZERO_COUNT_EPS))
    if not include.any():
        raise ParameterError("no usable regions for PEP (all empty and predicted empty)")
    skipped = int(include.size - np.count_nonzero(include))
    if skipped:
        logger.debug("PEP: skipped %d trivially-empty regions", skipped)
    inside = (g[include] >= lower[include]) & (g[include] <= upper[include])
    fraction_inside = float(np.count_nonzero(inside)) / float(inside.size)
    return fraction_inside if as_printed else 1.0 - fraction_inside


def _ri_from_arrays(g, lower, upper) -> float:
    usable = g > ZERO_COUNT_EPS
    excluded = int(usable.size - np.count_nonzero(usable))
    if excluded:
        logger.warning("RI: excluded %d regions with zero ground-truth count", excluded)
    if not usable.any():
        raise ParameterError("no regions with nonzero ground-truth count for RI")
    widths = np.maximum(upper[usable] - lower[usable], 0.0)
    return float(np.mean(widths / g[usable]))


def _stats_arrays(stats: Sequence[RegionStats]):
    g = np.fromiter((s.g for s in stats), dtype=np.float64, count=len(stats))
    lower = np.fromiter((s.s_lower for s in stats), dtype=np.float64, count=len(stats))
    upper = np.fromiter((s.s_upper for s in stats), dtype=np.float64, count=len(stats))
    return g, lower, upper


def pep(stats: Sequence[RegionStats], as_printed: bool = False) -> float:
    """Fraction of regions whose g lies outside the closed [s_lower, s_upper].

    ``as_printed=True`` returns the complementary inside-fraction instead.
    """
    if len(stats) == 0:
        raise ParameterError("PEP needs at least one region")
    return _pep_from_arrays(*_stats_arrays(stats), as_printed=as_printed)


def ri(stats: Sequence[RegionStats]) -> float:
    """Mean relative interval width (s_upper - s_lower) / g over the regions."""
    if len(stats) == 0:
        raise ParameterError("RI needs at least one region")
    return _ri_from_arrays(*_stats_arrays(stats))


def evaluate(
    fusion: FusionResult,
    gt,
    spec: ScaleSpec,
    w: float = 1.0,
    alpha_label: float = 0.8,
    as_printed: bool = False,
    threads: int = 1,
) -> EvalCurve:
    """PEP and RI per scale of the pyramid, one record per scale.

    Scales are independent, so they may be evaluated on ``threads`` workers;
    records are assembled in scale order, making the output identical for
    any thread count.
    """
    if not (w > 0):
        raise ParameterError(f"w must be positive, got {w}")
    if threads < 1:
        raise ParameterError(f"threads must be >= 1, got {threads}")
    gt = np.asarray(gt, dtype=np.float64)
    if gt.shape != fusion.shape:
        raise ShapeError(f"gt shape {gt.shape} differs from fusion {fusion.shape}")
    height, width = fusion.shape
    sides = scale_sides(height, width, spec)
    tables = {
        "bel": integral_image(fusion.bel),
        "pl": integral_image(fusion.pl),
        "gt": integral_image(gt),
    }

    def evaluate_scale(entry: tuple[int, int]) -> EvalRecord:
        index, side = entry
        xs = _grid_positions(width, side, spec.stride_fraction)
        ys = _grid_positions(height, side, spec.stride_fraction)
        grid_x, grid_y = np.meshgrid(xs, ys)
        grid_x, grid_y = grid_x.ravel(), grid_y.ravel()
        sums = {
            name: np.maximum(_region_sums(table, grid_x, grid_y, side, side), 0.0)
            for name, table in tables.items()
        }
        lower, upper = w * sums["bel"], w * sums["pl"]
        return EvalRecord(
            alpha=alpha_label,
            scale_index=index,
            side=side,
            n_squares=int(grid_x.size),
            pep=_pep_from_arrays(sums["gt"], lower, upper, as_printed),
            ri=_ri_from_arrays(sums["gt"], lower, upper),
        )

    entries = list(enumerate(sides, start=1))
    if threads == 1:
        records = [evaluate_scale(entry) for entry in entries]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(evaluate_scale, entries))
    return EvalCurve(records=records)
