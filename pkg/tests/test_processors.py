"""Masking strategies, sampler stages, and pipeline composition."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gidle.errors import ConfigError, NoAllowedTokens, PipelineStageError
from gidle.numerics import IndexSet, log_softmax, softmax, total_variation
from gidle.processors import (
    Gidle,
    NaiveMask,
    Pipeline,
    RepetitionPenalty,
    StepContext,
    Temperature,
    TopK,
    TopP,
    gidle_process,
    naive_mask,
    repetition_penalty,
    run_pipeline,
    temperature_scale,
    top_k_filter,
    top_p_filter,
)

NEG_INF = float("-inf")

finite_logits = st.lists(
    st.floats(min_value=-30, max_value=30, allow_nan=False), min_size=2, max_size=32
)


def proper_ban(data, n):
    return data.draw(st.sets(st.integers(0, n - 1), max_size=n - 1))


class TestNaiveMask:
    def test_definition(self):
        out = naive_mask([1.0, 2.0, 3.0], [2]).values
        assert out[0] == 1.0 and out[1] == 2.0 and out[2] == NEG_INF

    def test_empty_ban_identity(self):
        out = naive_mask([1.0, 2.0, 3.0], IndexSet()).values
        assert list(out) == [1.0, 2.0, 3.0]

    def test_masked_softmax(self):
        # direct summation: e^1/(e^1+e^2), e^2/(e^1+e^2)
        p = softmax(naive_mask([1.0, 2.0, 3.0], [2])).values
        assert p == pytest.approx([0.268941, 0.731059, 0.0], abs=1e-6)

    def test_full_ban_raises(self):
        with pytest.raises(NoAllowedTokens):
            naive_mask([1.0, 2.0], [0, 1])

    @given(finite_logits, st.data())
    @settings(max_examples=100)
    def test_allowed_entries_bit_identical(self, z, data):
        banned = proper_ban(data, len(z))
        out = naive_mask(z, banned).values
        for i, v in enumerate(z):
            if i in banned:
                assert out[i] == NEG_INF
            else:
                assert out[i] == v


class TestGidleProcess:
    def test_spec_values(self):
        out = gidle_process([1.0, 2.0, 3.0], [2]).values
        assert out[:2] == pytest.approx([-1.313262, -0.313262], abs=1e-6)
        assert out[2] == NEG_INF

    def test_empty_ban_gives_log_softmax(self):
        out = gidle_process([1.0, 2.0, 3.0], IndexSet()).values
        assert np.allclose(out, log_softmax([1.0, 2.0, 3.0]).values, atol=1e-12)

    def test_output_is_self_normalized(self):
        out = gidle_process([1.0, 2.0, 3.0], [2]).values
        finite = out[np.isfinite(out)]
        assert math.log(np.exp(finite).sum()) == pytest.approx(0.0, abs=1e-9)

    def test_naive_output_is_not_self_normalized(self):
        out = naive_mask([1.0, 2.0, 3.0], [2]).values
        finite = out[np.isfinite(out)]
        assert abs(math.log(np.exp(finite).sum())) > 0.1

    @given(finite_logits, st.data())
    @settings(max_examples=200)
    def test_equivalence_with_naive(self, z, data):
        banned = proper_ban(data, len(z))
        a = softmax(naive_mask(z, banned)).values
        b = softmax(gidle_process(z, banned)).values
        assert np.allclose(a, b, atol=1e-9)

    @given(finite_logits, st.data())
    @settings(max_examples=100)
    def test_idempotence(self, z, data):
        banned = proper_ban(data, len(z))
        once = gidle_process(z, banned)
        twice = gidle_process(once, banned)
        assert np.allclose(softmax(once).values, softmax(twice).values, atol=1e-9)

    @given(finite_logits, st.data())
    @settings(max_examples=100)
    def test_ban_enforcement_and_ratios(self, z, data):
        banned = proper_ban(data, len(z))
        p = softmax(z).values
        for fn in (naive_mask, gidle_process):
            q = softmax(fn(z, banned)).values
            for i in banned:
                assert q[i] == 0.0
            allowed = [i for i in range(len(z)) if i not in banned and p[i] > 0]
            if len(allowed) >= 2:  # everything else may underflow to exact 0
                i, j = allowed[0], allowed[-1]
                assert q[i] / q[j] == pytest.approx(p[i] / p[j], rel=1e-9)


class TestSamplerStages:
    def test_temperature_identity(self):
        assert list(temperature_scale([1.0, 2.0], 1.0).values) == [1.0, 2.0]

    def test_temperature_halves(self):
        assert list(temperature_scale([1.0, 2.0], 2.0).values) == [0.5, 1.0]

    def test_temperature_preserves_neg_inf(self):
        out = temperature_scale([1.0, 2.0, NEG_INF], 0.5).values
        assert list(out) == [2.0, 4.0, NEG_INF]

    def test_temperature_rejects_nonpositive(self):
        with pytest.raises(ConfigError):
            temperature_scale([1.0, 2.0], 0.0)

    def test_top_k_basic(self):
        assert list(top_k_filter([3.0, 1.0, 2.0], 2).values) == [3.0, NEG_INF, 2.0]

    def test_top_k_large_k_identity(self):
        assert list(top_k_filter([3.0, 1.0, 2.0], 5).values) == [3.0, 1.0, 2.0]

    def test_top_k_tie_break_lower_index(self):
        assert list(top_k_filter([1.0, 1.0, 0.0], 1).values) == [1.0, NEG_INF, NEG_INF]

    def test_top_k_all_neg_inf_rejected(self):
        # LogitVector construction already refuses an all--inf vector
        from gidle.errors import NoAllowedMass

        with pytest.raises(NoAllowedMass):
            top_k_filter([NEG_INF, NEG_INF], 1)

    def test_top_p_identity(self):
        z = [math.log(0.7), math.log(0.2), math.log(0.1)]
        assert list(top_p_filter(z, 1.0).values) == z

    def test_top_p_keeps_prefix(self):
        z = [math.log(0.7), math.log(0.2), math.log(0.1)]
        out = top_p_filter(z, 0.8).values
        assert np.isfinite(out[0]) and np.isfinite(out[1]) and out[2] == NEG_INF

    def test_top_p_single_token(self):
        z = [math.log(0.7), math.log(0.2), math.log(0.1)]
        out = top_p_filter(z, 0.5).values
        assert np.isfinite(out[0]) and out[1] == NEG_INF and out[2] == NEG_INF

    def test_top_p_always_keeps_one(self):
        out = top_p_filter([0.0, 0.0], 1e-9).values
        assert np.isfinite(out).sum() == 1

    def test_repetition_identity_at_one(self):
        ctx = StepContext((0,), 1)
        assert list(repetition_penalty([1.0, 2.0], ctx, 1.0).values) == [1.0, 2.0]

    def test_repetition_positive_branch(self):
        ctx = StepContext((0,), 1)
        assert list(repetition_penalty([1.0, 2.0], ctx, 2.0).values) == [0.5, 2.0]

    def test_repetition_negative_branch(self):
        ctx = StepContext((0,), 1)
        out = repetition_penalty([-1.313262, -0.313262, NEG_INF], ctx, 2.0).values
        assert out == pytest.approx([-2.626524, -0.313262, NEG_INF], abs=1e-6)

    def test_stage_config_validation(self):
        for bad in (lambda: Temperature(0.0), lambda: TopK(0), lambda: TopP(0.0), lambda: TopP(1.5), lambda: RepetitionPenalty(0.5)):
            with pytest.raises(ConfigError):
                bad()


class TestRunPipeline:
    def test_empty_pipeline_identity(self):
        out = run_pipeline(Pipeline(), StepContext(), [1.0, 2.0, 3.0])
        assert list(out.values) == [1.0, 2.0, 3.0]

    def test_unit_temperature_after_gidle(self):
        ctx = StepContext()
        a = run_pipeline(Pipeline((Gidle(IndexSet((2,))),)), ctx, [1.0, 2.0, 3.0])
        b = run_pipeline(Pipeline((Gidle(IndexSet((2,))), Temperature(1.0))), ctx, [1.0, 2.0, 3.0])
        assert np.allclose(softmax(a).values, softmax(b).values, atol=1e-12)

    def test_divergence_witness(self):
        # the non-shift-invariant penalty makes the two maskings disagree
        ctx = StepContext((0,), 1)
        z = [1.0, 2.0, 3.0]
        naive_out = run_pipeline(Pipeline((NaiveMask(IndexSet((2,))), RepetitionPenalty(2.0))), ctx, z)
        gidle_out = run_pipeline(Pipeline((Gidle(IndexSet((2,))), RepetitionPenalty(2.0))), ctx, z)
        pn = softmax(naive_out)
        pg = softmax(gidle_out)
        assert pn.values[0] == pytest.approx(0.182425, abs=1e-5)
        assert pg.values[0] == pytest.approx(0.090031, abs=1e-5)
        assert total_variation(pn, pg) > 0.05

    def test_stage_error_carries_index(self):
        pipeline = Pipeline((Temperature(1.0), NaiveMask(IndexSet((0, 1)))))
        with pytest.raises(PipelineStageError) as exc_info:
            run_pipeline(pipeline, StepContext(), [1.0, 2.0])
        assert exc_info.value.stage_index == 1

    # coarse grid keeps rank-based stages (top-k/top-p) away from 1-ulp
    # near-ties, where the two arms may legitimately cut differently
    coarse_logits = st.lists(
        st.integers(min_value=-3000, max_value=3000).map(lambda i: i / 100.0),
        min_size=2,
        max_size=32,
    )

    @given(coarse_logits, st.data())
    @settings(max_examples=100)
    def test_equivalence_survives_shift_invariant_stages(self, z, data):
        banned = data.draw(st.sets(st.integers(0, len(z) - 1), max_size=len(z) - 1))
        tail = data.draw(
            st.sampled_from([(), (Temperature(0.7),), (TopK(2),), (TopP(0.9),), (Temperature(1.3), TopK(3))])
        )
        ctx = StepContext()
        a = run_pipeline(Pipeline((NaiveMask(IndexSet.from_iterable(banned)),) + tail), ctx, z)
        b = run_pipeline(Pipeline((Gidle(IndexSet.from_iterable(banned)),) + tail), ctx, z)
        assert np.allclose(softmax(a).values, softmax(b).values, atol=1e-9)

    def test_pipeline_helpers(self):
        p = Pipeline((NaiveMask(IndexSet((1,))), Gidle(IndexSet((2,))), RepetitionPenalty(1.5)))
        assert tuple(p.banned_indices()) == (1, 2)
        assert p.has_mask_stage()
        assert p.has_non_shift_invariant_stage()
        assert not Pipeline((Temperature(0.5),)).has_non_shift_invariant_stage()
