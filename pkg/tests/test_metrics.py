import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from convquant import (
    AFFINE,
    C_SHAPE_WISE,
    CHANNEL_WISE,
    F_SHAPE_WISE,
    FILTER_WISE,
    LAYER_WISE,
    PWLQ,
    MemoryModel,
    TensorShape,
    WeightTensor,
    figure_of_merit,
    make_passthrough,
    memory_bytes,
    memory_saving_ratio,
    quant_error,
    quantize_tensor,
    select_granularity,
)
from convquant.errors import InvalidInput, NoViableCandidate, ShapeMismatch
from convquant.metrics import baseline_bytes

from conftest import gaussian_tensor
import scalar_oracle as oracle

ALL_FOUR = (FILTER_WISE, CHANNEL_WISE, F_SHAPE_WISE, C_SHAPE_WISE)


class TestQuantError:
    def test_passthrough_reports_zero(self):
        t = gaussian_tensor((4, 4, 1, 1), seed=0)
        q = quantize_tensor(t, CHANNEL_WISE, AFFINE, 4)
        report = quant_error(t, q)
        assert report.mse == 0.0 and report.max_abs == 0.0
        assert report.element_count == 16

    def test_exact_reconstruction_reports_zero(self):
        t = WeightTensor("t", TensorShape(2, 1, 1, 2), np.array([1.0, 2.0, 3.0, 4.0]))
        q = quantize_tensor(t, FILTER_WISE, AFFINE, 2)
        report = quant_error(t, q)
        assert report.mse == 0.0 and report.max_abs == 0.0

    def test_two_bit_layer_example(self):
        # [0, 1] hits both endpoints exactly; [0, 0.5, 1] leaves one interior
        # error of 1/6 (oracle-computed).
        t = WeightTensor("t", TensorShape(2, 1, 1, 1), np.array([0.0, 1.0]))
        q = quantize_tensor(t, LAYER_WISE, AFFINE, 2)
        assert quant_error(t, q).mse == 0.0

        s, z, codes = oracle.quantize_slice_affine([0.0, 0.5, 1.0], 2)
        rec = [oracle.dequantize(c, s, z) for c in codes]
        assert oracle.mse([0.0, 0.5, 1.0], rec) == 0.00925925925925926

        t3 = WeightTensor("t", TensorShape(3, 1, 1, 1), np.array([0.0, 0.5, 1.0]))
        q3 = quantize_tensor(t3, LAYER_WISE, AFFINE, 2)
        report = quant_error(t3, q3)
        assert report.mse == pytest.approx(0.00925925925925926, rel=1e-12)
        assert report.max_abs == pytest.approx(0.16666666666666669, rel=1e-12)

    def test_shape_mismatch(self):
        t = gaussian_tensor((2, 2, 2, 2), seed=1)
        other = gaussian_tensor((2, 2, 2, 1), seed=1)
        q = quantize_tensor(t, LAYER_WISE, AFFINE, 4)
        with pytest.raises(ShapeMismatch):
            quant_error(other, q)


class TestSelectGranularity:
    def test_tie_breaks_by_preference_order(self):
        t = WeightTensor("t", TensorShape(2, 3, 2, 2), np.full(24, 0.7))
        scheme, q = select_granularity(t, {FILTER_WISE, F_SHAPE_WISE}, AFFINE, 4)
        assert scheme == F_SHAPE_WISE  # both mse 0, f-shape preferred

    def test_single_passthrough_candidate_is_returned(self):
        t = gaussian_tensor((4, 4, 1, 1), seed=2)
        scheme, q = select_granularity(t, {CHANNEL_WISE}, AFFINE, 4)
        assert scheme == CHANNEL_WISE and q.passthrough

    def test_passthrough_excluded_when_alternatives_exist(self):
        t = gaussian_tensor((4, 4, 1, 1), seed=3)
        scheme, q = select_granularity(t, ALL_FOUR, AFFINE, 4)
        assert scheme != CHANNEL_WISE and not q.passthrough

    def test_returns_the_minimum_mse_candidate(self):
        t = gaussian_tensor((16, 8, 3, 3), seed=4)
        scheme, q = select_granularity(t, ALL_FOUR, AFFINE, 4)
        chosen = quant_error(t, q).mse
        individually = {
            s: quant_error(t, quantize_tensor(t, s, AFFINE, 4)).mse
            for s in ALL_FOUR}
        assert chosen == min(individually.values())
        assert individually[scheme] == chosen

    def test_empty_candidates(self):
        t = gaussian_tensor((2, 2, 2, 2), seed=5)
        with pytest.raises(NoViableCandidate):
            select_granularity(t, set(), AFFINE, 4)

    def test_unknown_candidate(self):
        t = gaussian_tensor((2, 2, 2, 2), seed=5)
        with pytest.raises(InvalidInput):
            select_granularity(t, {"nope"}, AFFINE, 4)

    def test_pwlq_selection(self):
        t = gaussian_tensor((8, 4, 3, 3), seed=6)
        scheme, q = select_granularity(t, (FILTER_WISE, F_SHAPE_WISE, C_SHAPE_WISE),
                                       PWLQ, 4)
        assert q.method == PWLQ and scheme in (FILTER_WISE, F_SHAPE_WISE, C_SHAPE_WISE)


def quantized(shape_dims, scheme, method=AFFINE, bits=4, seed=0):
    t = gaussian_tensor(shape_dims, seed=seed)
    return quantize_tensor(t, scheme, method, bits)


class TestMemoryModel:
    def test_worked_f_shape_example(self):
        assert oracle.group_bytes(36864, 4, 576, 4) == 20736
        q = quantized((64, 64, 3, 3), F_SHAPE_WISE)
        mm = MemoryModel()
        assert memory_bytes(q, mm) == 20736
        assert baseline_bytes(q, mm) == 73728
        assert memory_saving_ratio([q], mm) == pytest.approx(3.5556, abs=5e-5)

    def test_worked_layer_example(self):
        assert oracle.group_bytes(36864, 4, 1, 4) == 18436
        q = quantized((64, 64, 3, 3), LAYER_WISE)
        mm = MemoryModel()
        assert memory_bytes(q, mm) == 18436
        assert memory_saving_ratio([q], mm) == pytest.approx(3.9991, abs=5e-5)

    def test_passthrough_counts_at_baseline(self):
        q = quantized((16, 16, 1, 1), CHANNEL_WISE)
        assert q.passthrough
        mm = MemoryModel()
        assert memory_bytes(q, mm) == baseline_bytes(q, mm) == 512
        assert memory_saving_ratio([q], mm) == 1.0

    def test_region_bits_charged_only_for_pwlq(self):
        mm_off = MemoryModel()
        mm_on = MemoryModel(charge_region_bits=True)
        qp = quantized((8, 8, 3, 3), FILTER_WISE, method=PWLQ)
        qa = quantized((8, 8, 3, 3), FILTER_WISE, method=AFFINE)
        extra = -(-qp.element_count // 8)
        assert memory_bytes(qp, mm_on) == memory_bytes(qp, mm_off) + extra
        assert memory_bytes(qa, mm_on) == memory_bytes(qa, mm_off)

    def test_param_cost_per_method(self):
        mm = MemoryModel()
        q_sym = quantized((4, 4, 3, 3), FILTER_WISE, method="symmetric-full")
        q_aff = quantized((4, 4, 3, 3), FILTER_WISE, method=AFFINE)
        q_pw = quantized((4, 4, 3, 3), FILTER_WISE, method=PWLQ)
        codes = -(-q_aff.element_count * 4 // 8)
        assert memory_bytes(q_sym, mm) == codes + 4 * 2
        assert memory_bytes(q_aff, mm) == codes + 4 * 4
        assert memory_bytes(q_pw, mm) == codes + 4 * 10

    def test_ratio_approaches_bit_ratio_for_large_groups(self):
        q = quantized((8, 32, 8, 8), LAYER_WISE)  # G/E = 1/16384
        ratio = memory_saving_ratio([q], MemoryModel())
        assert ratio <= 16 / 4
        assert ratio > (16 / 4) * 0.99

    def test_excluded_tensor_drags_ratio_toward_one(self):
        mm = MemoryModel()
        kept = quantized((8, 8, 3, 3), F_SHAPE_WISE)
        skipped = make_passthrough(gaussian_tensor((8, 8, 3, 3), seed=1),
                                   LAYER_WISE, AFFINE, 4)
        both = memory_saving_ratio([kept, skipped], mm)
        assert 1.0 < both < memory_saving_ratio([kept], mm)

    def test_model_validation(self):
        with pytest.raises(InvalidInput):
            MemoryModel(param_bytes_affine=0)
        with pytest.raises(InvalidInput):
            memory_saving_ratio([], MemoryModel())


class TestMixedSelection:
    def test_auto_selection_never_beaten_by_fixed_choice(self):
        tensors = [gaussian_tensor((8, 4, 3, 3), seed=s) for s in range(6)]
        candidates = (FILTER_WISE, F_SHAPE_WISE, C_SHAPE_WISE)
        auto_sse = 0.0
        fixed_sse = {s: 0.0 for s in candidates}
        for t in tensors:
            _, q = select_granularity(t, candidates, AFFINE, 4)
            auto_sse += quant_error(t, q).mse * t.shape.element_count
            for s in candidates:
                fixed = quantize_tensor(t, s, AFFINE, 4)
                fixed_sse[s] += quant_error(t, fixed).mse * t.shape.element_count
        for s in candidates:
            assert auto_sse <= fixed_sse[s] + 1e-15


class TestFigureOfMerit:
    def test_known_values(self):
        assert figure_of_merit(3.86, 1.0) == 1.93
        assert figure_of_merit(3.92, 2.5) == pytest.approx(1.12, abs=5e-3)

    def test_dataclass_view(self):
        from convquant import FigureOfMerit
        fom = FigureOfMerit(memory_saving=3.86, accuracy_loss_pct=1.0)
        assert fom.value == 1.93
        assert fom.value <= fom.memory_saving

    def test_zero_loss_identity(self):
        assert figure_of_merit(4.0, 0.0) == 4.0

    def test_validation(self):
        with pytest.raises(InvalidInput):
            figure_of_merit(0.0, 1.0)
        with pytest.raises(InvalidInput):
            figure_of_merit(4.0, -0.5)

    @given(saving=st.floats(0.1, 100), loss=st.floats(0, 100),
           more=st.floats(0.01, 10))
    @settings(max_examples=100, deadline=None)
    def test_monotone(self, saving, loss, more):
        base = figure_of_merit(saving, loss)
        assert figure_of_merit(saving + more, loss) > base
        assert figure_of_merit(saving, loss + more) < base
