"""Attention forward-pass tests against naive linear-algebra oracles."""

import math

import numpy as np
import pytest

from attnmask.attention import (
    AttentionMask,
    AttentionState,
    GridShape,
    MapKind,
    PromptEmbedding,
    ProjectionSet,
    attend,
    compute_logits,
    masked_softmax,
    zero_mask,
)


def naive_matmul(a, b):
    """Triple-loop matrix product, the independent oracle."""
    rows, inner = a.shape
    inner2, cols = b.shape
    assert inner == inner2
    out = np.zeros((rows, cols))
    for i in range(rows):
        for j in range(cols):
            acc = 0.0
            for k in range(inner):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


def identity_proj(dim):
    eye = np.eye(dim)
    return ProjectionSet(q_weights=eye, k_weights=eye, v_weights=eye)


def prob_state(shape, values):
    return AttentionState(shape=shape, kind=MapKind.PROBS, values=values)


def logit_state(shape, values):
    return AttentionState(shape=shape, kind=MapKind.LOGITS, values=values)


class TestTypes:
    def test_grid_shape_rejects_degenerate(self):
        with pytest.raises(ValueError):
            GridShape(0, 4)
        with pytest.raises(ValueError):
            GridShape(4, -1)

    def test_grid_flat_index_row_major(self):
        shape = GridShape(3, 5)
        assert shape.flat_index(0, 0) == 0
        assert shape.flat_index(1, 0) == 5
        assert shape.flat_index(2, 4) == 14

    def test_prompt_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            PromptEmbedding(tokens=np.array([[1.0, np.nan]]), labels=("a",))

    def test_prompt_label_count_must_match(self):
        with pytest.raises(ValueError):
            PromptEmbedding(tokens=np.ones((2, 3)), labels=("only-one",))

    def test_probability_state_validates_rows(self):
        shape = GridShape(1, 2)
        with pytest.raises(ValueError):
            prob_state(shape, [[0.6, 0.6], [0.5, 0.5]])
        with pytest.raises(ValueError):
            prob_state(shape, [[1.5, -0.5], [0.5, 0.5]])

    def test_state_values_immutable(self):
        state = logit_state(GridShape(1, 2), [[1.0, 2.0], [3.0, 4.0]])
        with pytest.raises(ValueError):
            state.values[0, 0] = 9.0

    def test_mask_entries_single_boost(self):
        shape = GridShape(1, 2)
        AttentionMask(shape, [[0.0, 5.0], [5.0, 0.0]])
        with pytest.raises(ValueError):
            AttentionMask(shape, [[0.0, 5.0], [3.0, 0.0]])
        with pytest.raises(ValueError):
            AttentionMask(shape, [[0.0, -5.0], [0.0, 0.0]])


class TestComputeLogits:
    def test_zero_latent_annihilates(self):
        shape = GridShape(2, 2)
        prompt = PromptEmbedding(tokens=np.arange(9.0).reshape(3, 3), labels=("a", "b", "c"))
        logits = compute_logits(np.zeros((4, 3)), prompt, identity_proj(3), shape)
        assert np.array_equal(logits.values, np.zeros((4, 3)))

    def test_one_dimensional_dot_products(self):
        shape = GridShape(1, 1)
        prompt = PromptEmbedding(tokens=np.array([[3.0], [5.0]]), labels=("a", "b"))
        logits = compute_logits(np.array([[2.0]]), prompt, identity_proj(1), shape)
        assert np.array_equal(logits.values, np.array([[6.0, 10.0]]))

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(42)
        latent = rng.normal(size=(4, 8))
        prompt = PromptEmbedding(tokens=rng.normal(size=(3, 8)), labels=("a", "b", "c"))
        proj = ProjectionSet(
            q_weights=rng.normal(size=(8, 8)),
            k_weights=rng.normal(size=(8, 8)),
            v_weights=rng.normal(size=(8, 8)),
        )
        got = compute_logits(latent, prompt, proj, GridShape(2, 2)).values
        queries = naive_matmul(latent, proj.q_weights)
        keys = naive_matmul(prompt.tokens, proj.k_weights)
        expected = naive_matmul(queries, keys.T) / math.sqrt(8)
        np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_dimension_mismatch_rejected(self):
        prompt = PromptEmbedding(tokens=np.ones((2, 3)), labels=("a", "b"))
        with pytest.raises(ValueError):
            compute_logits(np.ones((4, 5)), prompt, identity_proj(3), GridShape(2, 2))
        with pytest.raises(ValueError):
            compute_logits(np.ones((3, 3)), prompt, identity_proj(3), GridShape(2, 2))

    def test_nonfinite_latent_rejected(self):
        prompt = PromptEmbedding(tokens=np.ones((2, 3)), labels=("a", "b"))
        latent = np.ones((4, 3))
        latent[1, 1] = np.inf
        with pytest.raises(ValueError):
            compute_logits(latent, prompt, identity_proj(3), GridShape(2, 2))


class TestMaskedSoftmax:
    def test_uniform_logits_uniform_probs(self):
        state = logit_state(GridShape(1, 1), [[0.0, 0.0, 0.0]])
        probs = masked_softmax(state)
        np.testing.assert_allclose(probs.values, [[1 / 3, 1 / 3, 1 / 3]], atol=1e-15)

    def test_zero_mask_is_bitwise_identity(self):
        rng = np.random.default_rng(7)
        shape = GridShape(4, 4)
        state = logit_state(shape, rng.normal(scale=3.0, size=(16, 5)))
        plain = masked_softmax(state)
        masked = masked_softmax(state, zero_mask(shape, 5))
        assert np.array_equal(plain.values, masked.values)

    def test_single_boost_multiplies_odds(self):
        shape = GridShape(1, 1)
        state = logit_state(shape, [[0.0, 0.0]])
        mask = AttentionMask(shape, [[5.0, 0.0]])
        probs = masked_softmax(state, mask).values[0]
        np.testing.assert_allclose(probs[0] / probs[1], math.exp(5.0), rtol=1e-9)

    def test_shift_invariance(self):
        rng = np.random.default_rng(11)
        shape = GridShape(2, 3)
        logits = rng.normal(size=(6, 4))
        base = masked_softmax(logit_state(shape, logits)).values
        shifted = masked_softmax(logit_state(shape, logits + 123.456)).values
        np.testing.assert_allclose(base, shifted, atol=1e-12)

    def test_extreme_magnitudes_stay_normalized(self):
        rng = np.random.default_rng(13)
        shape = GridShape(4, 4)
        logits = rng.uniform(-1e4, 1e4, size=(16, 6))
        probs = masked_softmax(logit_state(shape, logits)).values
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(probs >= 0)

    def test_mask_shape_mismatch_rejected(self):
        state = logit_state(GridShape(2, 2), np.zeros((4, 3)))
        with pytest.raises(ValueError):
            masked_softmax(state, zero_mask(GridShape(2, 2), 2))
        with pytest.raises(ValueError):
            masked_softmax(state, zero_mask(GridShape(2, 3), 3))

    def test_probability_input_rejected(self):
        probs = prob_state(GridShape(1, 1), [[0.5, 0.5]])
        with pytest.raises(ValueError):
            masked_softmax(probs)


class TestAttend:
    def _prompt_and_proj(self, rng, num_tokens=3, dim=4):
        prompt = PromptEmbedding(
            tokens=rng.normal(size=(num_tokens, dim)),
            labels=tuple(f"t{i}" for i in range(num_tokens)),
        )
        proj = ProjectionSet(
            q_weights=rng.normal(size=(dim, dim)),
            k_weights=rng.normal(size=(dim, dim)),
            v_weights=rng.normal(size=(dim, dim)),
        )
        return prompt, proj

    def test_one_hot_rows_select_value_rows(self):
        rng = np.random.default_rng(3)
        prompt, proj = self._prompt_and_proj(rng)
        weights = np.array([[1.0, 0, 0], [0, 0, 1.0], [0, 1.0, 0], [1.0, 0, 0]])
        out = attend(prob_state(GridShape(2, 2), weights), prompt, proj)
        values = prompt.tokens @ proj.v_weights
        np.testing.assert_allclose(out[0], values[0], atol=1e-15)
        np.testing.assert_allclose(out[1], values[2], atol=1e-15)
        np.testing.assert_allclose(out[2], values[1], atol=1e-15)

    def test_uniform_rows_average_value_rows(self):
        rng = np.random.default_rng(5)
        prompt, proj = self._prompt_and_proj(rng)
        weights = np.full((4, 3), 1 / 3)
        out = attend(prob_state(GridShape(2, 2), weights), prompt, proj)
        mean_row = (prompt.tokens @ proj.v_weights).mean(axis=0)
        np.testing.assert_allclose(out, np.tile(mean_row, (4, 1)), atol=1e-12)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(17)
        prompt, proj = self._prompt_and_proj(rng, num_tokens=4, dim=6)
        raw = rng.uniform(size=(9, 4))
        weights = raw / raw.sum(axis=1, keepdims=True)
        state = prob_state(GridShape(3, 3), weights)
        got = attend(state, prompt, proj)
        expected = naive_matmul(weights, naive_matmul(prompt.tokens, proj.v_weights))
        np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_token_count_mismatch_rejected(self):
        rng = np.random.default_rng(19)
        prompt, proj = self._prompt_and_proj(rng, num_tokens=2)
        weights = np.full((4, 3), 1 / 3)
        with pytest.raises(ValueError):
            attend(prob_state(GridShape(2, 2), weights), prompt, proj)
