"""Self-describing on-disk container for quantized models. Format "qnt/1".

Layout::

    b"qnt/1 <header-bytes>\\n"   prelude, ASCII
    <header>                     JSON, UTF-8
    <payload>                    binary sections, offsets relative to payload

The header lists the memory-model parameters and one record per tensor
(name, shape, method, scheme, bits, group count, section offsets). Payload
sections per tensor:

* ``params``: one record per group. A uniform record is 10 bytes
  ``<kind u8, bits u8, scale f16, zero_point i16, beta f16, alpha f16>``
  with kind 0=affine, 1=symmetric-restricted, 2=symmetric-full. A
  piecewise record is kind 3: ``<kind u8, bits u8, m f16, p f16>`` followed
  by three embedded uniform records (center, negative tail, positive tail).
* ``codes``: the packed k-bit code stream (see packing module), exactly
  ceil(E * k / 8) bytes.
* ``regions``: piecewise only; one bit per element, little-endian bit order.
* ``raw``: passthrough only; original values at source precision.

Scales, breakpoints and clip bounds are serialized as IEEE binary16 and
zero-points as 16-bit signed integers, so round-trip equality is defined
after that rounding. Values outside those ranges are a hard error rather
than silent clamping.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .errors import (
    CorruptHeader,
    InvalidInput,
    OffsetOutOfBounds,
    VersionMismatch,
)
from .granularity import GRANULARITIES, METHODS, QuantizedTensor
from .metrics import MemoryModel
from .packing import PackedCodes, pack_codes, unpack_codes
from .pwlq import PWLQ, PwlqParams
from .tensor_store import TensorShape
from .uniform import (
    AFFINE,
    SYMMETRIC_FULL,
    SYMMETRIC_RESTRICTED,
    ClipRange,
    UniformParams,
)

FORMAT_VERSION = "qnt/1"

_UNIFORM_RECORD = struct.Struct("<BBehee")
_PWLQ_HEAD = struct.Struct("<BBee")

_KIND_BY_SCHEME = {AFFINE: 0, SYMMETRIC_RESTRICTED: 1, SYMMETRIC_FULL: 2}
_SCHEME_BY_KIND = {v: k for k, v in _KIND_BY_SCHEME.items()}
_PWLQ_KIND = 3

_MM_FIELDS = ("baseline_bits_per_element", "param_bytes_affine",
              "param_bytes_symmetric", "param_bytes_pwlq", "charge_region_bits")


def _pack_uniform(p: UniformParams) -> bytes:
    try:
        return _UNIFORM_RECORD.pack(_KIND_BY_SCHEME[p.scheme], p.bits, p.scale,
                                    p.zero_point, p.clip.beta, p.clip.alpha)
    except (struct.error, OverflowError) as exc:
        raise InvalidInput(f"parameters not representable in 16-bit fields: {exc}") from exc


def _pack_params(params) -> bytes:
    chunks = []
    for p in params:
        if isinstance(p, PwlqParams):
            try:
                chunks.append(_PWLQ_HEAD.pack(_PWLQ_KIND, p.bits, p.m, p.p))
            except (struct.error, OverflowError) as exc:
                raise InvalidInput(
                    f"breakpoint not representable in 16-bit fields: {exc}") from exc
            chunks.append(_pack_uniform(p.center))
            chunks.append(_pack_uniform(p.neg_tail))
            chunks.append(_pack_uniform(p.pos_tail))
        else:
            chunks.append(_pack_uniform(p))
    return b"".join(chunks)


def _unpack_uniform(buf: bytes, offset: int) -> tuple[UniformParams, int]:
    if offset + _UNIFORM_RECORD.size > len(buf):
        raise CorruptHeader("parameter record truncated")
    kind, bits, scale, zero, beta, alpha = _UNIFORM_RECORD.unpack_from(buf, offset)
    if kind not in _SCHEME_BY_KIND:
        raise CorruptHeader(f"unknown parameter record kind {kind}")
    params = UniformParams(_SCHEME_BY_KIND[kind], bits, scale, zero,
                           ClipRange(beta, alpha))
    return params, offset + _UNIFORM_RECORD.size


def _unpack_params(buf: bytes, group_count: int) -> list:
    params = []
    offset = 0
    for _ in range(group_count):
        if offset >= len(buf):
            raise CorruptHeader("fewer parameter records than groups")
        kind = buf[offset]
        if kind == _PWLQ_KIND:
            if offset + _PWLQ_HEAD.size > len(buf):
                raise CorruptHeader("parameter record truncated")
            _, bits, m, p = _PWLQ_HEAD.unpack_from(buf, offset)
            offset += _PWLQ_HEAD.size
            center, offset = _unpack_uniform(buf, offset)
            neg_tail, offset = _unpack_uniform(buf, offset)
            pos_tail, offset = _unpack_uniform(buf, offset)
            params.append(PwlqParams(bits, m, p, center, neg_tail, pos_tail))
        else:
            uniform, offset = _unpack_uniform(buf, offset)
            params.append(uniform)
    if offset != len(buf):
        raise CorruptHeader("trailing bytes after parameter records")
    return params


def write_container(tensors, memory_model: MemoryModel, path) -> None:
    """Serialize quantized tensors; identical inputs give identical bytes."""
    payload = bytearray()
    records = []

    def add_section(data: bytes) -> list[int]:
        start = len(payload)
        payload.extend(data)
        return [start, len(data)]

    for q in tensors:
        record = {
            "name": q.name,
            "shape": list(q.shape.dims),
            "method": q.method,
            "scheme": q.scheme,
            "bits": q.bits,
            "group_count": q.group_count,
            "passthrough": q.passthrough,
            "source_bits": q.source_bits,
            "sections": {},
        }
        if q.passthrough:
            dtype = np.dtype("<f2") if q.source_bits == 16 else np.dtype("<f4")
            record["sections"]["raw"] = add_section(
                np.asarray(q.values, dtype=np.float64).astype(dtype).tobytes())
        else:
            record["sections"]["params"] = add_section(_pack_params(q.group_params))
            record["sections"]["codes"] = add_section(pack_codes(q.codes, q.bits).data)
            if q.method == PWLQ:
                region = np.asarray(q.region_bits, dtype=np.uint8)
                record["sections"]["regions"] = add_section(
                    np.packbits(region, bitorder="little").tobytes())
        records.append(record)

    header = {
        "format": FORMAT_VERSION,
        "memory_model": {name: getattr(memory_model, name) for name in _MM_FIELDS},
        "payload_size": len(payload),
        "tensors": records,
    }
    header_bytes = json.dumps(header, indent=1, sort_keys=True).encode("utf-8")
    prelude = f"{FORMAT_VERSION} {len(header_bytes)}\n".encode("ascii")

    out = Path(path)
    tmp = out.with_name(out.name + ".tmp")
    try:
        with open(tmp, "wb") as fh:
            fh.write(prelude)
            fh.write(header_bytes)
            fh.write(payload)
        os.replace(tmp, out)
    finally:
        tmp.unlink(missing_ok=True)


def _section(header_sections: dict, name: str, payload_size: int,
             claimed: list) -> tuple[int, int]:
    entry = header_sections.get(name)
    if (not isinstance(entry, list) or len(entry) != 2
            or not all(isinstance(v, int) and v >= 0 for v in entry)):
        raise CorruptHeader(f"malformed section entry {name!r}: {entry!r}")
    off, length = entry
    if off + length > payload_size:
        raise OffsetOutOfBounds(
            f"section {name!r} [{off}, {off + length}) past payload end {payload_size}")
    claimed.append((off, off + length, name))
    return off, length


def read_container(path) -> tuple[list[QuantizedTensor], MemoryModel]:
    """Parse a container back into quantized tensors and its memory model."""
    blob = Path(path).read_bytes()
    newline = blob.find(b"\n", 0, 64)
    if newline < 0:
        raise CorruptHeader("missing prelude line")
    try:
        version, header_len_text = blob[:newline].decode("ascii").split(" ")
        header_len = int(header_len_text)
    except (UnicodeDecodeError, ValueError) as exc:
        raise CorruptHeader(f"malformed prelude: {blob[:newline]!r}") from exc
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"container version {version!r}, expected {FORMAT_VERSION!r}")

    header_start = newline + 1
    if header_start + header_len > len(blob):
        raise CorruptHeader("declared header length past end of file")
    try:
        header = json.loads(blob[header_start:header_start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptHeader(f"header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict) or header.get("format") != FORMAT_VERSION:
        raise CorruptHeader("header format field missing or wrong")

    payload = blob[header_start + header_len:]
    if header.get("payload_size") != len(payload):
        raise CorruptHeader(
            f"payload is {len(payload)} bytes, header declares {header.get('payload_size')}")

    mm_raw = header.get("memory_model")
    if not isinstance(mm_raw, dict) or set(mm_raw) != set(_MM_FIELDS):
        raise CorruptHeader(f"memory_model must carry exactly {_MM_FIELDS}")
    try:
        memory_model = MemoryModel(**mm_raw)
    except (TypeError, InvalidInput) as exc:
        raise CorruptHeader(f"bad memory model: {exc}") from exc

    raw_records = header.get("tensors")
    if not isinstance(raw_records, list):
        raise CorruptHeader("header 'tensors' must be a list")

    claimed: list[tuple[int, int, str]] = []
    tensors = []
    for record in raw_records:
        tensors.append(_read_record(record, payload, claimed))

    claimed.sort()
    for (_, prev_end, prev_name), (start, _, name) in zip(claimed, claimed[1:]):
        if start < prev_end:
            raise OffsetOutOfBounds(f"sections {prev_name!r} and {name!r} overlap")
    return tensors, memory_model


def _read_record(record, payload: bytes, claimed: list) -> QuantizedTensor:
    if not isinstance(record, dict):
        raise CorruptHeader(f"tensor record must be an object, got {record!r}")
    try:
        name = record["name"]
        shape_raw = record["shape"]
        method = record["method"]
        scheme = record["scheme"]
        bits = record["bits"]
        group_count = record["group_count"]
        passthrough = record["passthrough"]
        source_bits = record["source_bits"]
        sections = record["sections"]
    except KeyError as exc:
        raise CorruptHeader(f"tensor record missing key {exc}") from exc
    if method not in METHODS or scheme not in GRANULARITIES:
        raise CorruptHeader(f"{name}: unknown method/scheme {method!r}/{scheme!r}")
    if (not isinstance(shape_raw, list) or len(shape_raw) != 4
            or not all(isinstance(d, int) and d >= 1 for d in shape_raw)):
        raise CorruptHeader(f"{name}: malformed shape {shape_raw!r}")
    if not isinstance(bits, int) or not 2 <= bits <= 8:
        raise CorruptHeader(f"{name}: bad bit width {bits!r}")
    if not isinstance(group_count, int) or group_count < 0:
        raise CorruptHeader(f"{name}: bad group count {group_count!r}")
    if source_bits not in (16, 32):
        raise CorruptHeader(f"{name}: bad source precision {source_bits!r}")
    if not isinstance(sections, dict):
        raise CorruptHeader(f"{name}: sections must be an object")
    shape = TensorShape(*shape_raw)
    count = shape.element_count

    if passthrough:
        off, length = _section(sections, "raw", len(payload), claimed)
        width = 2 if source_bits == 16 else 4
        if length != count * width:
            raise CorruptHeader(f"{name}: raw section is {length} bytes for "
                                f"{count} x {source_bits}-bit values")
        dtype = np.dtype("<f2") if source_bits == 16 else np.dtype("<f4")
        values = np.frombuffer(payload[off:off + length], dtype=dtype).astype(np.float64)
        return QuantizedTensor(name=name, shape=shape, method=method, bits=bits,
                               scheme=scheme, passthrough=True, values=values,
                               source_bits=source_bits)

    off, length = _section(sections, "params", len(payload), claimed)
    group_params = _unpack_params(payload[off:off + length], group_count)

    off, length = _section(sections, "codes", len(payload), claimed)
    expected = -(-count * bits // 8)
    if length != expected:
        raise CorruptHeader(f"{name}: codes section is {length} bytes, "
                            f"expected {expected}")
    codes = unpack_codes(PackedCodes(bits, count, payload[off:off + length]))

    region_bits = None
    if method == PWLQ:
        off, length = _section(sections, "regions", len(payload), claimed)
        if length != -(-count // 8):
            raise CorruptHeader(f"{name}: region bitmap is {length} bytes for "
                                f"{count} elements")
        region_bits = np.unpackbits(
            np.frombuffer(payload[off:off + length], dtype=np.uint8),
            count=count, bitorder="little")

    return QuantizedTensor(name=name, shape=shape, method=method, bits=bits,
                           scheme=scheme, group_params=group_params, codes=codes,
                           region_bits=region_bits, source_bits=source_bits)
