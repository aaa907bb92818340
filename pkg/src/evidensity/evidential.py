"""Per-pixel belief-function fusion of a realization stack.

The frame of discernment is {head, not-head}; every pixel carries a mass
function over its powerset, stored as a 4-layer map indexed by
``LAYER_EMPTY`` .. ``LAYER_THETA``.  The pipeline is:

1. ``allocate_bayesian``  -- likelihood v becomes masses (H: v, not-H: 1-v).
2. ``compute_discount_maps`` -- per-pixel reliability
   gamma = alpha * (1 - |v - median across sources|); sources far from the
   cross-source median (outlier candidates) are trusted less.
3. ``discount`` -- singleton masses are scaled by gamma, the remainder moves
   to the ignorance layer.
4. ``combine_conjunctive`` -- unnormalized conjunctive rule, evaluated in
   closed form: m(A) = prod_t(m_t(A) + m_t(theta)) - prod_t m_t(theta) for
   each singleton A, m(theta) = prod_t m_t(theta), the residual lands on the
   empty set (conflict).
5. ``pignistic`` / ``belief_plausibility`` -- decision probability and
   lower/upper probabilities, each renormalized by 1 - m(empty).

Combination is kept open-world (conflict is preserved as its own layer);
normalization happens only inside BetP/Bel/Pl.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ParameterError, ShapeError, TotalConflictError, ValidationError

LAYER_EMPTY = 0
LAYER_HEAD = 1
LAYER_NOT_HEAD = 2
LAYER_THETA = 3

#: Per-pixel masses must sum to 1 within this tolerance.
MASS_ATOL = 1e-9

#: Below this, 1 - m(empty) is treated as singular (total conflict).
TOTAL_CONFLICT_EPS = 1e-12

#: Tolerance for "this layer is exactly zero" preconditions.
_ZERO_ATOL = 1e-12


def _as_map(values, name: str = "map") -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {values.shape}")
    return values


def _as_stack(values) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 3:
        raise ShapeError(f"realization stack must be 3-D, got shape {values.shape}")
    if values.shape[0] < 1:
        raise ShapeError("realization stack needs at least one source")
    if not np.isfinite(values).all():
        raise ValidationError("realization stack contains non-finite values")
    if (values < 0.0).any() or (values > 1.0).any():
        raise ValidationError("realization stack values must lie in [0, 1]")
    return values


@dataclass(frozen=True)
class BbaMap:
    """Four-layer mass map over {empty, head, not-head, theta}."""

    masses: np.ndarray  # (4, H, W) float64

    def __post_init__(self):
        masses = np.asarray(self.masses, dtype=np.float64)
        if masses.ndim != 3 or masses.shape[0] != 4:
            raise ShapeError(f"masses must have shape (4, H, W), got {masses.shape}")
        if not np.isfinite(masses).all():
            raise ValidationError("masses contain non-finite values")
        if (masses < -MASS_ATOL).any() or (masses > 1.0 + MASS_ATOL).any():
            raise ValidationError("masses must lie in [0, 1]")
        total = masses.sum(axis=0)
        if (np.abs(total - 1.0) > MASS_ATOL).any():
            worst = float(np.abs(total - 1.0).max())
            raise ValidationError(f"per-pixel masses must sum to 1 (worst deviation {worst:g})")
        object.__setattr__(self, "masses", masses)

    @classmethod
    def from_layers(cls, head, not_head, theta=None, empty=None) -> "BbaMap":
        head = _as_map(head, "head layer")
        not_head = _as_map(not_head, "not-head layer")
        theta = np.zeros_like(head) if theta is None else _as_map(theta, "theta layer")
        empty = np.zeros_like(head) if empty is None else _as_map(empty, "empty layer")
        return cls(np.stack([empty, head, not_head, theta]))

    @property
    def empty(self) -> np.ndarray:
        return self.masses[LAYER_EMPTY]

    @property
    def head(self) -> np.ndarray:
        return self.masses[LAYER_HEAD]

    @property
    def not_head(self) -> np.ndarray:
        return self.masses[LAYER_NOT_HEAD]

    @property
    def theta(self) -> np.ndarray:
        return self.masses[LAYER_THETA]

    @property
    def shape(self) -> tuple[int, int]:
        return self.masses.shape[1], self.masses.shape[2]


@dataclass(frozen=True)
class DiscountMap:
    """Per-pixel reliability coefficients for one source, plus the alpha used."""

    coefficients: np.ndarray  # (H, W) float64 in [0, 1]
    alpha: float

    def __post_init__(self):
        coeffs = _as_map(self.coefficients, "discount coefficients")
        if (coeffs < 0.0).any() or (coeffs > 1.0).any():
            raise ValidationError("discount coefficients must lie in [0, 1]")
        object.__setattr__(self, "coefficients", coeffs)


@dataclass(frozen=True)
class FusionResult:
    """Fused evidential output: decision map, probability bounds, diagnostics.

    ``combined``, ``ignorance`` and ``conflict`` are absent when a result is
    rebuilt from exported layer files (only BetP/Bel/Pl are stored there).
    """

    betp: np.ndarray
    bel: np.ndarray
    pl: np.ndarray
    combined: BbaMap | None = None
    ignorance: np.ndarray | None = field(default=None, repr=False)
    conflict: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        betp = _as_map(self.betp, "betp")
        bel = _as_map(self.bel, "bel")
        pl = _as_map(self.pl, "pl")
        if not (betp.shape == bel.shape == pl.shape):
            raise ShapeError(
                f"layer shapes differ: betp {betp.shape}, bel {bel.shape}, pl {pl.shape}"
            )
        for name, layer in (("betp", betp), ("bel", bel), ("pl", pl)):
            if not np.isfinite(layer).all():
                raise ValidationError(f"{name} contains non-finite values")
            if (layer < -MASS_ATOL).any() or (layer > 1.0 + MASS_ATOL).any():
                raise ValidationError(f"{name} values must lie in [0, 1]")
        if (bel > betp + MASS_ATOL).any() or (betp > pl + MASS_ATOL).any():
            raise ValidationError("bound ordering bel <= betp <= pl violated")
        object.__setattr__(self, "betp", betp)
        object.__setattr__(self, "bel", bel)
        object.__setattr__(self, "pl", pl)

    @classmethod
    def from_bound_maps(cls, betp, bel, pl) -> "FusionResult":
        """Rebuild a result from exported betp/bel/pl layers (no mass maps)."""
        return cls(betp=betp, bel=bel, pl=pl)

    @property
    def shape(self) -> tuple[int, int]:
        return self.betp.shape


def allocate_bayesian(stack) -> list[BbaMap]:
    """Turn likelihood maps into Bayesian mass maps (all mass on singletons)."""
    stack = _as_stack(stack)
    zeros = np.zeros(stack.shape[1:], dtype=np.float64)
    return [BbaMap(np.stack([zeros, source, 1.0 - source, zeros])) for source in stack]


def compute_discount_maps(stack, alpha: float) -> list[DiscountMap]:
    """Reliability gamma = alpha * (1 - |source - pixelwise median across sources|).

    The median over an even number of sources is the mean of the two middle
    order statistics.
    """
    stack = _as_stack(stack)
    if not (0.0 <= alpha <= 1.0):
        raise ParameterError(f"alpha must lie in [0, 1], got {alpha}")
    median = np.median(stack, axis=0)
    coefficients = alpha * (1.0 - np.abs(stack - median))
    return [DiscountMap(coefficients[t], alpha) for t in range(stack.shape[0])]


def discount(bba: BbaMap, gamma: DiscountMap) -> BbaMap:
    """Scale singleton masses by gamma; the removed mass becomes ignorance."""
    if bba.shape != gamma.coefficients.shape:
        raise ShapeError(
            f"mass map {bba.shape} and discount map {gamma.coefficients.shape} differ"
        )
    if (np.abs(bba.theta) > _ZERO_ATOL).any() or (np.abs(bba.empty) > _ZERO_ATOL).any():
        raise ParameterError("discount expects a Bayesian input (no theta/empty mass)")
    head = gamma.coefficients * bba.head
    not_head = gamma.coefficients * bba.not_head
    theta = np.maximum(1.0 - head - not_head, 0.0)
    return BbaMap(np.stack([np.zeros_like(head), head, not_head, theta]))


def combine_conjunctive(bbas: Sequence[BbaMap]) -> BbaMap:
    """Conjunctive combination of conflict-free sources, closed form.

    Equivalent to summing products over all source-tuples whose intersection
    yields each hypothesis, but O(T) per pixel instead of O(2^T); residual
    mass lands on the empty set and measures conflict.  The result does not
    depend on source order.
    """
    if len(bbas) == 0:
        raise ParameterError("need at least one mass map to combine")
    shape = bbas[0].shape
    for i, bba in enumerate(bbas):
        if bba.shape != shape:
            raise ShapeError(f"source {i} has shape {bba.shape}, expected {shape}")
        if (np.abs(bba.empty) > _ZERO_ATOL).any():
            raise ParameterError(f"source {i} carries empty-set mass; combine expects none")
    prod_head = np.ones(shape, dtype=np.float64)
    prod_not = np.ones(shape, dtype=np.float64)
    prod_theta = np.ones(shape, dtype=np.float64)
    for bba in bbas:
        prod_head *= bba.head + bba.theta
        prod_not *= bba.not_head + bba.theta
        prod_theta *= bba.theta
    head = np.maximum(prod_head - prod_theta, 0.0)
    not_head = np.maximum(prod_not - prod_theta, 0.0)
    empty = np.maximum(1.0 - head - not_head - prod_theta, 0.0)
    return BbaMap(np.stack([empty, head, not_head, prod_theta]))


def _normalizer(bba: BbaMap) -> np.ndarray:
    denominator = 1.0 - bba.empty
    singular = denominator < TOTAL_CONFLICT_EPS
    if singular.any():
        i, j = np.unravel_index(int(np.argmax(singular)), singular.shape)
        raise TotalConflictError(f"total conflict at pixel ({i}, {j}); cannot normalize")
    return denominator


def pignistic(bba: BbaMap) -> np.ndarray:
    """BetP(head) = (m(head) + m(theta)/2) / (1 - m(empty))."""
    denominator = _normalizer(bba)
    return np.clip((bba.head + 0.5 * bba.theta) / denominator, 0.0, 1.0)


def belief_plausibility(bba: BbaMap) -> tuple[np.ndarray, np.ndarray]:
    """Lower/upper probability of "head" after conflict renormalization.

    Bel = m(head) / (1 - m(empty)), Pl = (m(head) + m(theta)) / (1 - m(empty)).
    """
    denominator = _normalizer(bba)
    bel = np.clip(bba.head / denominator, 0.0, 1.0)
    pl = np.clip((bba.head + bba.theta) / denominator, 0.0, 1.0)
    return bel, pl


def fuse_ensemble(stack, alpha: float) -> FusionResult:
    """Run the whole pipeline: allocate, discount, combine, derive bounds."""
    stack = _as_stack(stack)
    bayesian = allocate_bayesian(stack)
    gammas = compute_discount_maps(stack, alpha)
    discounted = [discount(bba, gamma) for bba, gamma in zip(bayesian, gammas)]
    combined = combine_conjunctive(discounted)
    betp = pignistic(combined)
    bel, pl = belief_plausibility(combined)
    return FusionResult(
        betp=betp,
        bel=bel,
        pl=pl,
        combined=combined,
        ignorance=combined.theta.copy(),
        conflict=combined.empty.copy(),
    )
