"""Uniform quantization: affine and symmetric schemes.

A k-bit uniform quantizer maps reals in a clip range [beta, alpha] onto
integer codes via ``code = clip(round(r / s + z), lo, hi)`` and back via
``r ~ (code - z) * s``. Three schemes differ only in how the range, the
scale s and the code domain are chosen:

* ``affine``: range [min(r), max(r)], s = (alpha - beta) / (2^k - 1),
  z = -round(beta / s) - 2^(k-1), codes in [-2^(k-1), 2^(k-1) - 1].
* ``symmetric-restricted``: range [-alpha, alpha], s = alpha / (2^(k-1) - 1),
  z = 0, codes in [-2^(k-1) + 1, 2^(k-1) - 1] (the most negative code is
  never used, keeping the domain symmetric).
* ``symmetric-full``: range [-alpha, alpha], s = 2 * alpha / (2^k - 1),
  z = 0, codes using the full domain [-2^(k-1), 2^(k-1) - 1].

Rounding is half-away-from-zero everywhere so results are reproducible
across platforms. All arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    CodeOutOfDomain,
    DegenerateRange,
    EmptySlice,
    IncompatibleBits,
    InvalidBounds,
    InvalidValue,
)

AFFINE = "affine"
SYMMETRIC_RESTRICTED = "symmetric-restricted"
SYMMETRIC_FULL = "symmetric-full"
UNIFORM_SCHEMES = (AFFINE, SYMMETRIC_RESTRICTED, SYMMETRIC_FULL)

MIN_BITS = 2
MAX_BITS = 8


def round_half_away(x):
    """Round to nearest integer, ties away from zero. Works on scalars and arrays."""
    x = np.asarray(x, dtype=np.float64)
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def clip(r, lo: float, hi: float):
    """Saturate r (scalar or array) to [lo, hi]."""
    if lo > hi:
        raise InvalidBounds(f"clip bounds inverted: lo={lo} > hi={hi}")
    return np.minimum(np.maximum(r, lo), hi)


def code_domain(scheme: str, bits: int) -> tuple[int, int]:
    """Inclusive [lo, hi] integer code domain for a scheme at a bit width."""
    half = 1 << (bits - 1)
    if scheme == SYMMETRIC_RESTRICTED:
        return -half + 1, half - 1
    return -half, half - 1


def _check_bits(bits: int) -> None:
    if not MIN_BITS <= bits <= MAX_BITS:
        raise IncompatibleBits(f"bit width {bits} outside [{MIN_BITS}, {MAX_BITS}]")


@dataclass(frozen=True)
class ClipRange:
    """Permissible input interval; values outside saturate to the nearer bound."""

    beta: float
    alpha: float

    def __post_init__(self):
        if self.beta > self.alpha:
            raise InvalidBounds(f"beta={self.beta} > alpha={self.alpha}")

    @property
    def width(self) -> float:
        return self.alpha - self.beta


@dataclass(frozen=True)
class UniformParams:
    """Everything needed to encode or decode one group of values."""

    scheme: str
    bits: int
    scale: float
    zero_point: int
    clip: ClipRange

    def __post_init__(self):
        if self.scheme not in UNIFORM_SCHEMES:
            raise InvalidValue(f"unknown scheme {self.scheme!r}")
        _check_bits(self.bits)
        if not self.scale > 0:
            raise DegenerateRange(f"scale must be positive, got {self.scale}")
        if self.scheme != AFFINE and self.zero_point != 0:
            raise InvalidValue("symmetric schemes require zero_point == 0")

    def code_domain(self) -> tuple[int, int]:
        return code_domain(self.scheme, self.bits)


def affine_params(clip_range: ClipRange, bits: int) -> UniformParams:
    """Derive affine scale and zero-point for a strict range beta < alpha."""
    _check_bits(bits)
    beta, alpha = clip_range.beta, clip_range.alpha
    if beta == alpha:
        raise DegenerateRange(f"affine range is a point: [{beta}, {alpha}]")
    scale = (alpha - beta) / ((1 << bits) - 1)
    zero_point = int(-round_half_away(beta / scale)) - (1 << (bits - 1))
    return UniformParams(AFFINE, bits, scale, zero_point, clip_range)


def symmetric_params(alpha: float, bits: int, variant: str) -> UniformParams:
    """Derive symmetric-scheme parameters for the range [-alpha, alpha].

    ``variant`` is "restricted" (discard the most negative code) or "full"
    (use the whole code domain).
    """
    _check_bits(bits)
    if alpha < 0:
        raise InvalidBounds(f"alpha must be non-negative, got {alpha}")
    if alpha == 0:
        raise DegenerateRange("alpha = 0 admits no scale")
    if variant == "restricted":
        scheme = SYMMETRIC_RESTRICTED
        scale = alpha / ((1 << (bits - 1)) - 1)
    elif variant == "full":
        scheme = SYMMETRIC_FULL
        scale = 2.0 * alpha / ((1 << bits) - 1)
    else:
        raise InvalidValue(f"unknown symmetric variant {variant!r}")
    return UniformParams(scheme, bits, scale, 0, ClipRange(-alpha, alpha))


def degenerate_params(value: float, bits: int) -> UniformParams:
    """Parameters for a group whose values are all equal.

    The normal scale formula divides by zero, so the group is stored as an
    affine quantizer with s = |value| (or 1 when the value is 0), z = 0 and
    the single code sign(value), which reconstructs the value exactly.
    """
    _check_bits(bits)
    scale = abs(value) if value != 0 else 1.0
    return UniformParams(AFFINE, bits, scale, 0, ClipRange(value, value))


def is_degenerate(params: UniformParams) -> bool:
    return params.clip.beta == params.clip.alpha


def uniform_quantize(r, params: UniformParams):
    """Encode reals to integer codes; out-of-range inputs saturate."""
    lo, hi = params.code_domain()
    codes = clip(round_half_away(np.asarray(r, dtype=np.float64) / params.scale
                                 + params.zero_point), lo, hi)
    codes = codes.astype(np.int64)
    return int(codes) if np.isscalar(r) else codes


def uniform_dequantize(code, params: UniformParams):
    """Decode integer codes back to reals: (code - z) * s."""
    codes = np.asarray(code, dtype=np.int64)
    lo, hi = params.code_domain()
    if codes.size and (codes.min() < lo or codes.max() > hi):
        raise CodeOutOfDomain(
            f"code outside [{lo}, {hi}] for {params.scheme} at {params.bits} bits")
    out = (codes - params.zero_point) * np.float64(params.scale)
    return float(out) if np.isscalar(code) else out


def quantize_slice(values, scheme: str, bits: int) -> tuple[UniformParams, np.ndarray]:
    """Quantize one group, deriving the clip range from the data.

    Affine uses [min, max]; symmetric schemes use [-max|r|, max|r|]. A slice
    of identical values takes the degenerate path and reconstructs exactly.
    """
    if scheme not in UNIFORM_SCHEMES:
        raise InvalidValue(f"unknown scheme {scheme!r}")
    _check_bits(bits)
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise EmptySlice("cannot quantize an empty slice")
    if not np.all(np.isfinite(values)):
        raise InvalidValue("slice contains NaN or infinity")

    vmin = float(values.min())
    vmax = float(values.max())
    if vmin == vmax:
        params = degenerate_params(vmin, bits)
        codes = np.full(values.shape, int(np.sign(vmin)), dtype=np.int64)
        return params, codes

    if scheme == AFFINE:
        params = affine_params(ClipRange(vmin, vmax), bits)
    else:
        alpha = max(abs(vmin), abs(vmax))
        variant = "restricted" if scheme == SYMMETRIC_RESTRICTED else "full"
        params = symmetric_params(alpha, bits, variant)
    return params, uniform_quantize(values, params)


def dequantize_slice(codes, params: UniformParams) -> np.ndarray:
    """Decode one group; degenerate groups reconstruct their constant exactly
    because sign(v) * |v| == v."""
    return uniform_dequantize(codes, params)
