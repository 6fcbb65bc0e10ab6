"""Grouping granularities and group-wise tensor quantization.

A granularity decides which weights share one set of quantization
parameters. For a tensor of shape (N filters, C channels, H, W):

* ``layer-wise``:   one group for the whole tensor.
* ``filter-wise``:  one group per filter, N groups.
* ``channel-wise``: one group per (filter, channel), N*C groups.
* ``f-shape-wise``: one group per (channel, h, w) position, spanning all
  filters; C*H*W groups.
* ``c-shape-wise``: one group per (filter, h, w) position, spanning that
  filter's channels; N*H*W groups.

Channel-wise groups of a 1x1 kernel hold a single weight each, which cannot
be meaningfully quantized; such tensors are passed through at source
precision instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import pwlq as _pwlq
from .errors import CodeOutOfDomain, CorruptCodes, IncompatibleBits, InvalidInput
from .pwlq import PWLQ, PwlqParams, breakpoint_approx, breakpoint_bruteforce
from .tensor_store import TensorShape, WeightTensor, element_index
from .uniform import (
    AFFINE,
    MAX_BITS,
    MIN_BITS,
    UNIFORM_SCHEMES,
    dequantize_slice,
    quantize_slice,
)

LAYER_WISE = "layer-wise"
FILTER_WISE = "filter-wise"
CHANNEL_WISE = "channel-wise"
F_SHAPE_WISE = "f-shape-wise"
C_SHAPE_WISE = "c-shape-wise"
GRANULARITIES = (LAYER_WISE, FILTER_WISE, CHANNEL_WISE, F_SHAPE_WISE, C_SHAPE_WISE)

METHODS = UNIFORM_SCHEMES + (PWLQ,)

BREAKPOINT_MODES = ("approx", "bruteforce")


def _group_count(shape: TensorShape, scheme: str) -> int:
    n, c, h, w = shape.dims
    return {
        LAYER_WISE: 1,
        FILTER_WISE: n,
        CHANNEL_WISE: n * c,
        F_SHAPE_WISE: c * h * w,
        C_SHAPE_WISE: n * h * w,
    }[scheme]


@dataclass(frozen=True)
class GroupPartition:
    """Total, disjoint mapping from coordinates to group ids for one scheme."""

    scheme: str
    shape: TensorShape
    group_count: int

    @property
    def group_size(self) -> int:
        return self.shape.element_count // self.group_count

    def group_of(self, n: int, c: int, h: int, w: int) -> int:
        _, C, H, W = self.shape.dims
        element_index(self.shape, n, c, h, w)  # bounds check
        if self.scheme == LAYER_WISE:
            return 0
        if self.scheme == FILTER_WISE:
            return n
        if self.scheme == CHANNEL_WISE:
            return n * C + c
        if self.scheme == F_SHAPE_WISE:
            return (c * H + h) * W + w
        return (n * H + h) * W + w

    def group_ids(self) -> np.ndarray:
        """Group id of every element in row-major order."""
        n, c, h, w = self.shape.dims
        flat = np.arange(self.shape.element_count, dtype=np.int64)
        chw = c * h * w
        hw = h * w
        if self.scheme == LAYER_WISE:
            return np.zeros_like(flat)
        if self.scheme == FILTER_WISE:
            return flat // chw
        if self.scheme == CHANNEL_WISE:
            return flat // hw
        if self.scheme == F_SHAPE_WISE:
            return flat % chw
        return (flat // chw) * hw + flat % hw


def partition(shape: TensorShape, scheme: str) -> GroupPartition:
    if scheme not in GRANULARITIES:
        raise InvalidInput(f"unknown granularity {scheme!r}")
    return GroupPartition(scheme, shape, _group_count(shape, scheme))


def _as_group_matrix(flat: np.ndarray, shape: TensorShape, scheme: str) -> np.ndarray:
    """Reshape a flat row-major array to (group_count, group_size).

    Row g holds group g's elements in ascending flat-index order, so min/max
    and code assignment are reproducible.
    """
    n, c, h, w = shape.dims
    if scheme == LAYER_WISE:
        return flat.reshape(1, -1)
    if scheme == FILTER_WISE:
        return flat.reshape(n, c * h * w)
    if scheme == CHANNEL_WISE:
        return flat.reshape(n * c, h * w)
    if scheme == F_SHAPE_WISE:
        return flat.reshape(n, c * h * w).T
    return flat.reshape(n, c, h * w).transpose(0, 2, 1).reshape(n * h * w, c)


def _from_group_matrix(mat: np.ndarray, shape: TensorShape, scheme: str) -> np.ndarray:
    """Inverse of _as_group_matrix; returns a flat row-major array."""
    n, c, h, w = shape.dims
    if scheme in (LAYER_WISE, FILTER_WISE, CHANNEL_WISE):
        return np.ascontiguousarray(mat).reshape(-1)
    if scheme == F_SHAPE_WISE:
        return np.ascontiguousarray(mat.T).reshape(-1)
    return np.ascontiguousarray(
        mat.reshape(n, h * w, c).transpose(0, 2, 1)).reshape(-1)


@dataclass
class QuantizedTensor:
    """One tensor after group-wise quantization (or passthrough).

    ``codes`` holds one signed k-bit integer per element in row-major order;
    for the pwlq method ``region_bits`` marks tail elements and the codes are
    the folded representation from :func:`convquant.pwlq.fold_regions`.
    Passthrough tensors keep their original ``values`` instead.
    """

    name: str
    shape: TensorShape
    method: str
    bits: int
    scheme: str
    group_params: list = field(default_factory=list)
    codes: np.ndarray | None = None
    region_bits: np.ndarray | None = None
    passthrough: bool = False
    values: np.ndarray | None = None
    source_bits: int = 16

    @property
    def group_count(self) -> int:
        return len(self.group_params)

    @property
    def element_count(self) -> int:
        return self.shape.element_count


def make_passthrough(t: WeightTensor, scheme: str, method: str, bits: int) -> QuantizedTensor:
    """Wrap a tensor that stays at source precision."""
    return QuantizedTensor(
        name=t.name, shape=t.shape, method=method, bits=bits, scheme=scheme,
        passthrough=True, values=t.values.copy(),
        source_bits=t.source_precision_bits)


def _validate_method_bits(method: str, bits: int) -> None:
    if method not in METHODS:
        raise InvalidInput(f"unknown method {method!r}")
    if not MIN_BITS <= bits <= MAX_BITS:
        raise IncompatibleBits(f"bit width {bits} outside [{MIN_BITS}, {MAX_BITS}]")
    if method == PWLQ and bits < _pwlq.MIN_PWLQ_BITS:
        raise IncompatibleBits(
            f"pwlq needs at least {_pwlq.MIN_PWLQ_BITS} bits, got {bits}")


def quantize_tensor(t: WeightTensor, scheme: str, method: str, bits: int,
                    breakpoint_mode: str = "approx",
                    grid_points: int = _pwlq.DEFAULT_GRID_POINTS) -> QuantizedTensor:
    """Quantize one tensor group-by-group under a granularity.

    Channel-wise on a 1x1 kernel returns a passthrough tensor: each group
    would hold a single weight and the layer cannot be usefully quantized at
    this granularity.
    """
    _validate_method_bits(method, bits)
    if scheme not in GRANULARITIES:
        raise InvalidInput(f"unknown granularity {scheme!r}")
    if breakpoint_mode not in BREAKPOINT_MODES:
        raise InvalidInput(f"unknown breakpoint mode {breakpoint_mode!r}")

    if scheme == CHANNEL_WISE and t.shape.h * t.shape.w == 1:
        return make_passthrough(t, scheme, method, bits)

    mat = _as_group_matrix(t.values, t.shape, scheme)
    group_params = []
    code_mat = np.empty(mat.shape, dtype=np.int64)
    region_mat = np.zeros(mat.shape, dtype=np.uint8) if method == PWLQ else None

    for g in range(mat.shape[0]):
        vals = mat[g]
        if method != PWLQ:
            params, codes = quantize_slice(vals, method, bits)
            code_mat[g] = codes
        elif not np.any(vals):
            # All-zero group: nothing to split, store a degenerate uniform group.
            params, codes = quantize_slice(vals, AFFINE, bits)
            code_mat[g] = codes
        else:
            m = float(np.abs(vals).max())
            if breakpoint_mode == "approx":
                p = breakpoint_approx(m)
            else:
                p = breakpoint_bruteforce(vals, bits, grid_points)
            params, codes = _pwlq.pwlq_quantize(vals, bits, p)
            region_mat[g], code_mat[g] = _pwlq.fold_regions(codes, bits)
        group_params.append(params)

    return QuantizedTensor(
        name=t.name, shape=t.shape, method=method, bits=bits, scheme=scheme,
        group_params=group_params,
        codes=_from_group_matrix(code_mat, t.shape, scheme),
        region_bits=(_from_group_matrix(region_mat, t.shape, scheme)
                     if region_mat is not None else None),
        source_bits=t.source_precision_bits)


def dequantize_tensor(q: QuantizedTensor) -> WeightTensor:
    """Reconstruct a real-valued tensor; passthrough returns values verbatim."""
    if q.passthrough:
        return WeightTensor(q.name, q.shape, q.values.copy(), q.source_bits)
    if q.codes is None or len(q.codes) != q.element_count:
        raise CorruptCodes(f"{q.name}: code array missing or wrong length")
    expected_groups = _group_count(q.shape, q.scheme)
    if q.group_count != expected_groups:
        raise CorruptCodes(
            f"{q.name}: {q.group_count} parameter sets for {expected_groups} groups")

    code_mat = _as_group_matrix(q.codes, q.shape, q.scheme)
    region_mat = None
    if q.method == PWLQ:
        if q.region_bits is None or len(q.region_bits) != q.element_count:
            raise CorruptCodes(f"{q.name}: region bitmap missing or wrong length")
        region_mat = _as_group_matrix(q.region_bits, q.shape, q.scheme)

    out = np.empty(code_mat.shape, dtype=np.float64)
    try:
        for g, params in enumerate(q.group_params):
            if isinstance(params, PwlqParams):
                if region_mat is None:
                    raise CorruptCodes(f"{q.name}: piecewise group without region bitmap")
                codes = _pwlq.unfold_regions(region_mat[g], code_mat[g], params.bits)
                out[g] = _pwlq.pwlq_dequantize(codes, params)
            else:
                out[g] = dequantize_slice(code_mat[g], params)
    except CodeOutOfDomain as exc:
        raise CorruptCodes(f"{q.name}: {exc}") from exc

    return WeightTensor(q.name, q.shape,
                        _from_group_matrix(out, q.shape, q.scheme), q.source_bits)
