"""Deterministic synthetic scenes and noisy realization stacks.

Randomness comes from counter-based Philox streams keyed by
``(seed, purpose, index)``, so every consumer draws from its own stream and
outputs are bit-identical regardless of generation order or thread count.

Realizations mimic an imperfect estimator ensemble:
``clamp(blur(gt) * (1 + bias) + noise, 0, 1)`` per honest source, while the
trailing ``outlier_sources`` sources are replaced by structured corruptions
(inverted or circularly shifted maps) to exercise median-based discounting.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import PackingError, ParameterError, ShapeError
from .tensor_io import HeadAnnotations


@dataclass(frozen=True)
class NoiseModel:
    """Perturbations applied when simulating an estimator ensemble."""

    gaussian_sigma: float = 0.05
    blur_sigma: float = 0.0
    bias: float = 0.0
    outlier_sources: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.gaussian_sigma < 0 or self.blur_sigma < 0:
            raise ParameterError("noise and blur sigmas must be non-negative")
        if self.outlier_sources < 0:
            raise ParameterError("outlier_sources must be non-negative")


def stream(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    """Independent Philox stream addressed by (seed, purpose, index)."""
    digest = hashlib.blake2b(
        f"{seed}:{purpose}:{index}".encode(), digest_size=16
    ).digest()
    return np.random.Generator(np.random.Philox(key=int.from_bytes(digest, "little")))


def generate_scene(
    width: int, height: int, n_heads: int, min_spacing: float, seed: int
) -> HeadAnnotations:
    """Scatter ``n_heads`` points with pairwise distance >= ``min_spacing``.

    Rejection sampling with a bounded attempt budget; an infeasible packing
    raises instead of looping forever.
    """
    if width < 1 or height < 1:
        raise ParameterError("scene dimensions must be positive")
    if n_heads < 0:
        raise ParameterError("n_heads must be non-negative")
    if min_spacing < 0:
        raise ParameterError("min_spacing must be non-negative")
    rng = stream(seed, "scene")
    points = np.zeros((n_heads, 2), dtype=np.float64)
    accepted = 0
    attempts_left = 1000 + 500 * n_heads
    while accepted < n_heads:
        if attempts_left == 0:
            raise PackingError(
                f"could not place {n_heads} points with spacing {min_spacing} "
                f"in {width}x{height} (placed {accepted})"
            )
        attempts_left -= 1
        candidate = rng.random(2) * (width, height)
        if accepted:
            gaps = points[:accepted] - candidate
            if (np.einsum("ij,ij->i", gaps, gaps) < min_spacing**2).any():
                continue
        points[accepted] = candidate
        accepted += 1
    return HeadAnnotations(width=width, height=height, points=points)


def generate_realizations(gt, sources: int, noise: NoiseModel) -> np.ndarray:
    """Simulate a ``(T, H, W)`` stack of likelihood maps in [0, 1]."""
    gt = np.asarray(gt, dtype=np.float64)
    if gt.ndim != 2:
        raise ShapeError(f"ground truth must be 2-D, got shape {gt.shape}")
    if sources < 1:
        raise ParameterError(f"need at least one source, got {sources}")
    if noise.outlier_sources >= sources:
        raise ParameterError(
            f"outlier_sources {noise.outlier_sources} must stay below T={sources}"
        )
    base = gaussian_filter(gt, noise.blur_sigma) if noise.blur_sigma > 0 else gt
    base = base * (1.0 + noise.bias)
    clean = np.clip(base, 0.0, 1.0)
    honest = sources - noise.outlier_sources
    stack_out = np.empty((sources, *gt.shape), dtype=np.float64)
    for t in range(sources):
        if t < honest:
            perturbed = base
            if noise.gaussian_sigma > 0:
                perturbed = base + stream(noise.seed, "noise", t).normal(
                    0.0, noise.gaussian_sigma, size=gt.shape
                )
            stack_out[t] = np.clip(perturbed, 0.0, 1.0)
        elif (t - honest) % 2 == 0:
            stack_out[t] = 1.0 - clean
        else:
            stack_out[t] = np.roll(clean, (gt.shape[0] // 4, gt.shape[1] // 4), (0, 1))
    return stack_out
