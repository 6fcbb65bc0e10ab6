import json

import numpy as np
import pytest

from convquant import (
    AFFINE,
    C_SHAPE_WISE,
    CHANNEL_WISE,
    F_SHAPE_WISE,
    FILTER_WISE,
    LAYER_WISE,
    PWLQ,
    SYMMETRIC_FULL,
    SYMMETRIC_RESTRICTED,
    MemoryModel,
    PwlqParams,
    dequantize_tensor,
    quantize_tensor,
    read_container,
    write_container,
)
from convquant.errors import (
    CorruptHeader,
    OffsetOutOfBounds,
    VersionMismatch,
)

from conftest import gaussian_tensor


def f16(x: float) -> float:
    return float(np.float16(x))


def mixed_model():
    """Five tensors covering every method plus a passthrough."""
    return [
        quantize_tensor(gaussian_tensor((4, 4, 3, 3), 0, name="a"), FILTER_WISE, AFFINE, 4),
        quantize_tensor(gaussian_tensor((4, 2, 3, 3), 1, name="b"), F_SHAPE_WISE,
                        SYMMETRIC_RESTRICTED, 5),
        quantize_tensor(gaussian_tensor((2, 4, 2, 2), 2, name="c"), C_SHAPE_WISE,
                        SYMMETRIC_FULL, 3),
        quantize_tensor(gaussian_tensor((4, 4, 3, 3), 3, name="d"), LAYER_WISE, PWLQ, 4),
        quantize_tensor(gaussian_tensor((8, 8, 1, 1), 4, name="e"), CHANNEL_WISE, AFFINE, 4),
    ]


def assert_params_equal_post_f16(written, loaded):
    if isinstance(written, PwlqParams):
        assert isinstance(loaded, PwlqParams)
        assert loaded.bits == written.bits
        assert loaded.m == f16(written.m)
        assert loaded.p == f16(written.p)
        for name in ("center", "neg_tail", "pos_tail"):
            assert_params_equal_post_f16(getattr(written, name), getattr(loaded, name))
    else:
        assert loaded.scheme == written.scheme
        assert loaded.bits == written.bits
        assert loaded.zero_point == written.zero_point
        assert loaded.scale == f16(written.scale)
        assert loaded.clip.beta == f16(written.clip.beta)
        assert loaded.clip.alpha == f16(written.clip.alpha)


class TestRoundTrip:
    def test_mixed_model_field_exact(self, tmp_path):
        tensors = mixed_model()
        mm = MemoryModel(charge_region_bits=True, param_bytes_pwlq=12)
        path = tmp_path / "model.qnt"
        write_container(tensors, mm, path)
        loaded, mm_back = read_container(path)

        assert mm_back == mm
        assert len(loaded) == len(tensors)
        for orig, back in zip(tensors, loaded):
            assert back.name == orig.name
            assert back.shape == orig.shape
            assert back.method == orig.method
            assert back.scheme == orig.scheme
            assert back.bits == orig.bits
            assert back.passthrough == orig.passthrough
            assert back.source_bits == orig.source_bits
            if orig.passthrough:
                assert np.array_equal(back.values, orig.values)
                continue
            assert np.array_equal(back.codes, orig.codes)
            if orig.method == PWLQ:
                assert np.array_equal(back.region_bits, orig.region_bits)
            assert back.group_count == orig.group_count
            for wp, lp in zip(orig.group_params, back.group_params):
                assert_params_equal_post_f16(wp, lp)

    def test_loaded_tensors_decode(self, tmp_path):
        tensors = mixed_model()
        path = tmp_path / "model.qnt"
        write_container(tensors, MemoryModel(), path)
        loaded, _ = read_container(path)
        for orig, back in zip(tensors, loaded):
            a = dequantize_tensor(orig).values
            b = dequantize_tensor(back).values
            # Params are f16-rounded on disk, so reconstructions agree loosely.
            assert np.allclose(a, b, atol=2e-3, rtol=2e-3)

    def test_empty_model(self, tmp_path):
        path = tmp_path / "empty.qnt"
        write_container([], MemoryModel(), path)
        loaded, mm = read_container(path)
        assert loaded == [] and mm == MemoryModel()

    def test_deterministic_bytes(self, tmp_path):
        tensors = mixed_model()
        a, b = tmp_path / "a.qnt", tmp_path / "b.qnt"
        write_container(tensors, MemoryModel(), a)
        write_container(tensors, MemoryModel(), b)
        assert a.read_bytes() == b.read_bytes()

    def test_codes_section_matches_memory_model_term(self, tmp_path):
        tensors = mixed_model()
        path = tmp_path / "model.qnt"
        write_container(tensors, MemoryModel(), path)
        blob = path.read_bytes()
        header_len = int(blob.split(b"\n", 1)[0].split()[1])
        start = blob.index(b"\n") + 1
        header = json.loads(blob[start:start + header_len])
        for record, q in zip(header["tensors"], tensors):
            if record["passthrough"]:
                continue
            _, length = record["sections"]["codes"]
            assert length == -(-q.element_count * q.bits // 8)

    def test_file_size_matches_declared_lengths(self, tmp_path):
        path = tmp_path / "model.qnt"
        write_container(mixed_model(), MemoryModel(), path)
        blob = path.read_bytes()
        newline = blob.index(b"\n")
        header_len = int(blob[:newline].split()[1])
        header = json.loads(blob[newline + 1:newline + 1 + header_len])
        assert len(blob) == newline + 1 + header_len + header["payload_size"]


def _write_sample(tmp_path):
    path = tmp_path / "model.qnt"
    write_container(mixed_model(), MemoryModel(), path)
    return path


def _patch_header(path, mutate):
    blob = path.read_bytes()
    newline = blob.index(b"\n")
    header_len = int(blob[:newline].split()[1])
    header = json.loads(blob[newline + 1:newline + 1 + header_len])
    mutate(header)
    new_header = json.dumps(header).encode()
    prelude = f"qnt/1 {len(new_header)}\n".encode()
    path.write_bytes(prelude + new_header + blob[newline + 1 + header_len:])


class TestCorruption:
    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "bad.qnt"
        path.write_bytes(b"garbage all the way down")
        with pytest.raises(CorruptHeader):
            read_container(path)

    def test_version_mismatch(self, tmp_path):
        path = _write_sample(tmp_path)
        blob = path.read_bytes()
        path.write_bytes(b"qnt/9" + blob[5:])
        with pytest.raises(VersionMismatch):
            read_container(path)

    def test_truncated_header(self, tmp_path):
        path = _write_sample(tmp_path)
        blob = path.read_bytes()
        path.write_bytes(blob[:40])
        with pytest.raises(CorruptHeader):
            read_container(path)

    def test_offset_past_eof(self, tmp_path):
        path = _write_sample(tmp_path)

        def mutate(header):
            header["tensors"][0]["sections"]["codes"][0] = header["payload_size"] + 100

        _patch_header(path, mutate)
        with pytest.raises(OffsetOutOfBounds):
            read_container(path)

    def test_overlapping_sections(self, tmp_path):
        path = _write_sample(tmp_path)

        def mutate(header):
            codes = header["tensors"][0]["sections"]["codes"]
            params = header["tensors"][0]["sections"]["params"]
            codes[0] = params[0]  # force the two sections onto each other

        _patch_header(path, mutate)
        with pytest.raises(OffsetOutOfBounds):
            read_container(path)

    def test_payload_size_mismatch(self, tmp_path):
        path = _write_sample(tmp_path)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(CorruptHeader):
            read_container(path)

    def test_wrong_codes_length(self, tmp_path):
        path = _write_sample(tmp_path)

        def mutate(header):
            header["tensors"][0]["sections"]["codes"][1] -= 1

        _patch_header(path, mutate)
        with pytest.raises(CorruptHeader):
            read_container(path)

    def test_unknown_method(self, tmp_path):
        path = _write_sample(tmp_path)

        def mutate(header):
            header["tensors"][0]["method"] = "wavelet"

        _patch_header(path, mutate)
        with pytest.raises(CorruptHeader):
            read_container(path)
