"""Piecewise-linear quantization: a dense center plus two sparse tails.

Weights of trained conv nets are bell-shaped, so a uniform quantizer wastes
most of its levels on rarely-seen magnitudes. Here the range [-m, m] with
m = max|r| is split at a breakpoint p into

* center [-p, p]: k-bit full-range symmetric quantization,
* negative tail [-m, -p): (k-1)-bit affine quantization on [-m, -p],
* positive tail (p, m]: (k-1)-bit affine quantization on [p, m].

Values with |r| == p belong to the center. Each element therefore carries a
region flag besides its integer code; ``fold_regions`` compresses the
three-way region plus tail sign into one k-bit code and a single tail bit
for storage.

The breakpoint comes either from a closed-form estimate (``breakpoint_approx``)
or from a grid search minimizing reconstruction MSE (``breakpoint_bruteforce``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    AllZeroSlice,
    BitsTooSmall,
    BreakpointOutOfRange,
    CodeOutOfDomain,
    EmptySlice,
    InvalidInput,
    InvalidValue,
    NonPositiveM,
)
from .uniform import (
    ClipRange,
    UniformParams,
    affine_params,
    symmetric_params,
    uniform_dequantize,
    uniform_quantize,
)

PWLQ = "pwlq"

CENTER = 0
NEG_TAIL = 1
POS_TAIL = 2

MIN_PWLQ_BITS = 3

# Bounds on p/m keeping both regions non-empty even where the closed-form
# estimate leaves (0, 1).
RATIO_MIN = 0.05
RATIO_MAX = 0.95

DEFAULT_GRID_POINTS = 64


@dataclass(frozen=True)
class PwlqParams:
    """Breakpoint plus the three embedded uniform parameter sets."""

    bits: int
    m: float
    p: float
    center: UniformParams
    neg_tail: UniformParams
    pos_tail: UniformParams


@dataclass
class PwlqCodes:
    """Per-element region labels (CENTER / NEG_TAIL / POS_TAIL) and codes.

    Center elements carry a k-bit symmetric code; tail elements carry the
    (k-1)-bit affine code of their tail.
    """

    regions: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)


def _clamped_ratio(m: float) -> float:
    ratio = math.log(0.8614 * m + 0.6079) / m
    return min(max(ratio, RATIO_MIN), RATIO_MAX)


def breakpoint_approx(m: float) -> float:
    """Closed-form breakpoint estimate for bell-shaped data with max-magnitude m.

    The estimate ln(0.8614 * m + 0.6079) is non-positive for m below ~0.455,
    so the implied ratio p/m is clamped to [0.05, 0.95] to keep both regions
    alive for any input scale.
    """
    if not m > 0:
        raise NonPositiveM(f"m must be positive, got {m}")
    return m * _clamped_ratio(m)


def pwlq_params(m: float, p: float, bits: int) -> PwlqParams:
    """Build center/tail parameter sets for max magnitude m and breakpoint p."""
    if bits < MIN_PWLQ_BITS:
        raise BitsTooSmall(f"piecewise quantization needs >= {MIN_PWLQ_BITS} bits")
    m = float(m)
    if not 0 < p < m:
        raise BreakpointOutOfRange(f"need 0 < p < m, got p={p}, m={m}")
    return PwlqParams(
        bits=bits,
        m=m,
        p=float(p),
        center=symmetric_params(p, bits, "full"),
        neg_tail=affine_params(ClipRange(-m, -p), bits - 1),
        pos_tail=affine_params(ClipRange(p, m), bits - 1),
    )


def pwlq_quantize(values, bits: int, p: float) -> tuple[PwlqParams, PwlqCodes]:
    """Route each value to its region and encode it with the region's quantizer."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise EmptySlice("cannot quantize an empty slice")
    if not np.all(np.isfinite(values)):
        raise InvalidValue("slice contains NaN or infinity")
    m = float(np.abs(values).max())
    if m == 0:
        raise AllZeroSlice("all values are zero; nothing to split at a breakpoint")
    params = pwlq_params(m, p, bits)

    regions = np.full(values.shape, CENTER, dtype=np.uint8)
    regions[values < -params.p] = NEG_TAIL
    regions[values > params.p] = POS_TAIL

    codes = np.empty(values.shape, dtype=np.int64)
    center_mask = regions == CENTER
    codes[center_mask] = uniform_quantize(values[center_mask], params.center)
    neg_mask = regions == NEG_TAIL
    codes[neg_mask] = uniform_quantize(values[neg_mask], params.neg_tail)
    pos_mask = regions == POS_TAIL
    codes[pos_mask] = uniform_quantize(values[pos_mask], params.pos_tail)
    return params, PwlqCodes(regions, codes)


def pwlq_dequantize(codes: PwlqCodes, params: PwlqParams) -> np.ndarray:
    """Decode region-tagged codes back to reals."""
    regions = np.asarray(codes.regions)
    values = np.asarray(codes.values, dtype=np.int64)
    if regions.shape != values.shape:
        raise InvalidInput("regions and values must have matching shapes")
    out = np.empty(values.shape, dtype=np.float64)
    for region, rparams in ((CENTER, params.center),
                            (NEG_TAIL, params.neg_tail),
                            (POS_TAIL, params.pos_tail)):
        mask = regions == region
        if mask.any():
            out[mask] = uniform_dequantize(values[mask], rparams)
    return out


def breakpoint_bruteforce(values, bits: int,
                          grid_points: int = DEFAULT_GRID_POINTS) -> float:
    """Grid-search the breakpoint minimizing mean squared reconstruction error.

    Candidate ratios are ``grid_points`` uniformly spaced interior points of
    (0, 1) plus the closed-form estimate, so the result is never worse than
    ``breakpoint_approx``. Ties go to the smaller breakpoint.
    """
    if grid_points < 3:
        raise InvalidInput(f"grid_points must be >= 3, got {grid_points}")
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise EmptySlice("cannot search an empty slice")
    m = float(np.abs(values).max())
    if m == 0:
        raise AllZeroSlice("all values are zero; nothing to split at a breakpoint")

    grid = np.arange(1, grid_points + 1, dtype=np.float64) / (grid_points + 1)
    ratios = np.unique(np.append(grid, _clamped_ratio(m)))
    errors = np.empty(ratios.shape, dtype=np.float64)
    for i, ratio in enumerate(ratios):
        params, codes = pwlq_quantize(values, bits, ratio * m)
        reconstructed = pwlq_dequantize(codes, params)
        errors[i] = float(np.mean((values - reconstructed) ** 2))
    return float(ratios[int(np.argmin(errors))] * m)


def fold_regions(codes: PwlqCodes, bits: int) -> tuple[np.ndarray, np.ndarray]:
    """Flatten three-way regions into (tail bitmap, combined k-bit codes).

    A tail element's k-bit field is [sign bit | biased (k-1)-bit code], with
    sign 1 for the negative tail; the field is then re-biased to the signed
    k-bit range so combined codes share the center codes' domain.
    """
    half = 1 << (bits - 1)
    quarter = 1 << (bits - 2)
    regions = np.asarray(codes.regions)
    values = np.asarray(codes.values, dtype=np.int64)
    tail_bits = (regions != CENTER).astype(np.uint8)
    sign_bits = (regions == NEG_TAIL).astype(np.int64)
    tail_field = (sign_bits << (bits - 1)) | (values + quarter)
    combined = np.where(tail_bits.astype(bool), tail_field - half, values)
    return tail_bits, combined.astype(np.int64)


def unfold_regions(tail_bits, combined, bits: int) -> PwlqCodes:
    """Inverse of fold_regions."""
    half = 1 << (bits - 1)
    quarter = 1 << (bits - 2)
    tail = np.asarray(tail_bits).astype(bool)
    combined = np.asarray(combined, dtype=np.int64)
    if combined.size and (combined.min() < -half or combined.max() > half - 1):
        raise CodeOutOfDomain(f"combined code outside signed {bits}-bit range")
    field = combined + half
    negative = (field >> (bits - 1)).astype(bool) & tail
    tail_code = (field & (half - 1)) - quarter
    regions = np.where(tail, np.where(negative, NEG_TAIL, POS_TAIL), CENTER)
    values = np.where(tail, tail_code, combined)
    return PwlqCodes(regions.astype(np.uint8), values.astype(np.int64))
